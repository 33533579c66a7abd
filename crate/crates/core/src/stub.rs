//! Deterministic structure-aware mutator used in place of a language model.
//!
//! For chunk-format inputs that parse, one field (header width or height, a
//! gamma value, or a single data byte) is rewritten with a boundary value and
//! the owning chunk's checksum is recomputed. Anything else gets one byte
//! inverted.

use crate::executor::chunkfmt::{self, ChunkSpan, DATA, GAMA, HDRX};

/// Replacement values for rewritten fields.
pub const BOUNDARY_VALUES: [u32; 6] = [0, 1, 255, 256, 65535, 65536];

/// FNV-1a, used to pick fields and values reproducibly.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Field {
    at: usize,
    width: usize,
    chunk: ChunkSpan,
}

fn fields(spans: &[ChunkSpan]) -> Vec<Field> {
    let mut out = Vec::new();
    for &chunk in spans {
        match chunk.kind {
            HDRX => {
                out.push(Field {
                    at: chunk.payload_at,
                    width: 4,
                    chunk,
                });
                out.push(Field {
                    at: chunk.payload_at + 4,
                    width: 4,
                    chunk,
                });
            }
            GAMA => out.push(Field {
                at: chunk.payload_at,
                width: 4,
                chunk,
            }),
            DATA => out.extend((0..chunk.len).map(|i| Field {
                at: chunk.payload_at + i,
                width: 1,
                chunk,
            })),
            _ => {}
        }
    }
    out
}

fn encode_field(value: u32, width: usize) -> Vec<u8> {
    match width {
        4 => value.to_be_bytes().to_vec(),
        _ => vec![value.min(255) as u8],
    }
}

/// Mutate `payload` as the reference mutator backend would.
pub fn stub_mutate(payload: &[u8], format_tag: &str) -> Vec<u8> {
    let h = fnv1a(payload);
    if format_tag.eq_ignore_ascii_case(chunkfmt::FORMAT_TAG) {
        if let Some(out) = chunk_mutate(payload, h) {
            return out;
        }
    }
    let mut out = payload.to_vec();
    if !out.is_empty() {
        let i = (h % out.len() as u64) as usize;
        out[i] ^= 0xff;
    }
    out
}

fn chunk_mutate(payload: &[u8], h: u64) -> Option<Vec<u8>> {
    let spans = chunkfmt::parse_structure(payload)?;
    let fields = fields(&spans);
    if fields.is_empty() {
        return None;
    }
    let field = fields[(h % fields.len() as u64) as usize];
    let current = &payload[field.at..field.at + field.width];
    let start = ((h >> 32) % BOUNDARY_VALUES.len() as u64) as usize;
    let replacement = (0..BOUNDARY_VALUES.len())
        .map(|k| encode_field(BOUNDARY_VALUES[(start + k) % BOUNDARY_VALUES.len()], field.width))
        .find(|v| v.as_slice() != current)?;

    let mut out = payload.to_vec();
    out[field.at..field.at + field.width].copy_from_slice(&replacement);
    let c = field.chunk;
    out[c.checksum_at] = chunkfmt::xor_checksum(&out[c.payload_at..c.payload_at + c.len]);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::chunkfmt::{build, parse_structure, sample_seed, Chunk};
    use proptest::prelude::*;

    fn diff_positions(a: &[u8], b: &[u8]) -> Vec<usize> {
        a.iter()
            .zip(b)
            .enumerate()
            .filter(|(_, (x, y))| x != y)
            .map(|(i, _)| i)
            .collect()
    }

    // Every differing byte lies in one field or the checksum of its chunk.
    fn assert_one_field(before: &[u8], after: &[u8]) {
        assert_eq!(before.len(), after.len());
        let spans = parse_structure(before).unwrap();
        let diff = diff_positions(before, after);
        assert!(!diff.is_empty());
        let f = fields(&spans)
            .into_iter()
            .find(|f| diff.iter().any(|&d| d >= f.at && d < f.at + f.width))
            .expect("no field changed");
        for d in diff {
            assert!(
                (d >= f.at && d < f.at + f.width) || d == f.chunk.checksum_at,
                "stray change at {d}"
            );
        }
    }

    #[test]
    fn header_seed_changes_one_field() {
        let seed = build(&[Chunk::header(2, 2), Chunk::end()]);
        let out = stub_mutate(&seed, "CHUNKFMT");
        assert!(parse_structure(&out).is_some());
        assert_one_field(&seed, &out);
    }

    #[test]
    fn unparseable_flips_one_byte() {
        let input = b"not a chunk file".to_vec();
        let out = stub_mutate(&input, "CHUNKFMT");
        assert_eq!(diff_positions(&input, &out).len(), 1);
        let out = stub_mutate(&sample_seed(), "PNG");
        assert_eq!(diff_positions(&sample_seed(), &out).len(), 1);
        assert!(stub_mutate(&[], "CHUNKFMT").is_empty());
    }

    #[test]
    fn deterministic() {
        let s = sample_seed();
        assert_eq!(stub_mutate(&s, "CHUNKFMT"), stub_mutate(&s, "CHUNKFMT"));
    }

    #[test]
    fn one_step_reaches_guarded_bugs() {
        use crate::executor::{chunkfmt::ChunkFmt, run_in_process, ExecStatus};
        let mut reasons = std::collections::BTreeSet::new();
        for v in 0..=255u8 {
            let seed = build(&[
                Chunk::header(16, 16),
                Chunk::gama(45455),
                Chunk::data([v, 0x20, 0x30]),
                Chunk::end(),
            ]);
            if let ExecStatus::Crash { reason } = run_in_process(&ChunkFmt, &stub_mutate(&seed, "CHUNKFMT")).status {
                reasons.insert(reason);
            }
        }
        assert!(reasons.contains("B1") && reasons.contains("B2"), "{reasons:?}");
    }

    fn arb_chunk_file() -> impl Strategy<Value = Vec<u8>> {
        (
            any::<u32>(),
            any::<u32>(),
            proptest::option::of(any::<u32>()),
            proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..12), 0..3),
        )
            .prop_map(|(w, h, g, data)| {
                let mut chunks = vec![Chunk::header(w, h)];
                chunks.extend(g.map(Chunk::gama));
                chunks.extend(data.into_iter().map(Chunk::data));
                chunks.push(Chunk::end());
                build(&chunks)
            })
    }

    proptest! {
        #[test]
        fn preserves_structure(seed in arb_chunk_file()) {
            let out = stub_mutate(&seed, "CHUNKFMT");
            prop_assert!(parse_structure(&out).is_some());
            prop_assert_ne!(&out, &seed);
            assert_one_field(&seed, &out);
        }

        #[test]
        fn fallback_flips_exactly_one_byte(input in proptest::collection::vec(any::<u8>(), 1..64)) {
            let out = stub_mutate(&input, "JSON");
            prop_assert_eq!(diff_positions(&input, &out).len(), 1);
        }
    }
}

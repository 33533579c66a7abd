//! `chunkfmt`: a small chunked binary format with per-chunk checksums.
//!
//! Layout: the magic `FZ01`, then chunks of
//! `length: u32 BE | type: [u8; 4] | payload | checksum: u8` where the
//! checksum is the XOR of the payload bytes. `HDRX` (width, height as u32 BE)
//! must come first; `GAMA` carries a u32; `DATA` is opaque; `ENDX` is empty and
//! terminates the file. Unknown chunk types are skipped.
//!
//! Seeded bugs:
//! * B1: `width * height > 2^16` and a checksum-valid `DATA` chunk follows.
//! * B2: a `GAMA` payload of `00 00 00 00` after a valid header.
//! * B3: two `DATA` chunks with equal checksums but different lengths.

use crate::coverage::{EdgeId, EdgeTrace};
use crate::executor::{Crash, Target};

pub const MAGIC: &[u8; 4] = b"FZ01";
pub const FORMAT_TAG: &str = "CHUNKFMT";

pub const HDRX: [u8; 4] = *b"HDRX";
pub const GAMA: [u8; 4] = *b"GAMA";
pub const DATA: [u8; 4] = *b"DATA";
pub const ENDX: [u8; 4] = *b"ENDX";

/// Largest accepted image dimension.
pub const MAX_DIM: u32 = 65535;
/// B1 fires above this area.
pub const AREA_LIMIT: u64 = 1 << 16;

/// Edge ids. Every structural branch has its own id.
pub mod edge {
    use crate::coverage::EdgeId;

    pub const TOO_SHORT: EdgeId = 1;
    pub const MAGIC_BAD: EdgeId = 2;
    pub const MAGIC_OK: EdgeId = 3;
    pub const CHUNK_HEADER: EdgeId = 4;
    pub const TRUNC_HEADER: EdgeId = 5;
    pub const TRUNC_BODY: EdgeId = 6;
    pub const EOF_NO_END: EdgeId = 7;
    pub const CHECKSUM_BAD: EdgeId = 8;
    pub const CHECKSUM_OK: EdgeId = 9;
    pub const TYPE_HDRX: EdgeId = 10;
    pub const TYPE_GAMA: EdgeId = 11;
    pub const TYPE_DATA: EdgeId = 12;
    pub const TYPE_ENDX: EdgeId = 13;
    pub const TYPE_UNKNOWN: EdgeId = 14;
    pub const FIRST_NOT_HDRX: EdgeId = 15;
    pub const HDR_DUP: EdgeId = 16;
    pub const HDR_BAD_LEN: EdgeId = 17;
    pub const HDR_REJECT: EdgeId = 18;
    /// `WIDTH_CLASS + class` for class in 0..5.
    pub const WIDTH_CLASS: EdgeId = 20;
    /// `HEIGHT_CLASS + class` for class in 0..5.
    pub const HEIGHT_CLASS: EdgeId = 25;
    /// `AREA_CLASS + class` for class in 0..4.
    pub const AREA_CLASS: EdgeId = 30;
    pub const GAMA_BAD_LEN: EdgeId = 40;
    /// `GAMA_CLASS + class` for class in 0..4.
    pub const GAMA_CLASS: EdgeId = 41;
    pub const DATA_EMPTY: EdgeId = 50;
    /// `DATA_BYTE_CLASS + class` for class in 0..4, counted per byte.
    pub const DATA_BYTE_CLASS: EdgeId = 51;
    pub const DATA_REPEAT: EdgeId = 55;
    pub const ENDX_BAD_LEN: EdgeId = 60;
    pub const END_CLEAN: EdgeId = 61;
    pub const TRAILING: EdgeId = 62;
    pub const BUG_B1: EdgeId = 90;
    pub const BUG_B2: EdgeId = 91;
    pub const BUG_B3: EdgeId = 92;
}

/// Every edge id the target can report.
pub fn all_edges() -> Vec<EdgeId> {
    let mut v: Vec<EdgeId> = (1..=18).collect();
    v.extend(20..34);
    v.extend(40..45);
    v.extend(50..56);
    v.extend([60, 61, 62, 90, 91, 92]);
    v
}

pub fn xor_checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |a, b| a ^ b)
}

fn dim_class(v: u32) -> u32 {
    match v {
        0 => 0,
        1..=255 => 1,
        256..=4095 => 2,
        4096..=MAX_DIM => 3,
        _ => 4,
    }
}

fn area_class(a: u64) -> u32 {
    match a {
        0..=256 => 0,
        257..=4096 => 1,
        4097..=AREA_LIMIT => 2,
        _ => 3,
    }
}

fn gama_class(g: u32) -> u32 {
    match g {
        0 => 0,
        1..=255 => 1,
        256..=65535 => 2,
        _ => 3,
    }
}

fn byte_class(b: u8) -> u32 {
    match b {
        0 => 0,
        1..=0x7f => 1,
        0x80..=0xfe => 2,
        0xff => 3,
    }
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ChunkFmt;

impl Target for ChunkFmt {
    fn name(&self) -> &'static str {
        "chunkfmt"
    }

    fn format_tag(&self) -> &'static str {
        FORMAT_TAG
    }

    fn run(&self, input: &[u8], t: &mut EdgeTrace) -> Result<(), Crash> {
        if input.len() < MAGIC.len() {
            t.hit(edge::TOO_SHORT);
            return Ok(());
        }
        if &input[..4] != MAGIC {
            t.hit(edge::MAGIC_BAD);
            return Ok(());
        }
        t.hit(edge::MAGIC_OK);

        let mut pos = 4;
        let mut header: Option<(u32, u32)> = None;
        let mut first = true;
        let mut data_seen: Vec<(u8, usize)> = Vec::new();

        loop {
            let rest = input.len() - pos;
            if rest == 0 {
                t.hit(edge::EOF_NO_END);
                return Ok(());
            }
            if rest < 8 {
                t.hit(edge::TRUNC_HEADER);
                return Ok(());
            }
            t.hit(edge::CHUNK_HEADER);
            let len = be32(&input[pos..]) as usize;
            let kind: [u8; 4] = input[pos + 4..pos + 8].try_into().unwrap();
            let body = pos + 8;
            if len >= input.len() - body {
                t.hit(edge::TRUNC_BODY);
                return Ok(());
            }
            let payload = &input[body..body + len];
            let checksum = input[body + len];
            pos = body + len + 1;

            if xor_checksum(payload) != checksum {
                t.hit(edge::CHECKSUM_BAD);
                return Ok(());
            }
            t.hit(edge::CHECKSUM_OK);

            if first {
                first = false;
                if kind != HDRX {
                    t.hit(edge::FIRST_NOT_HDRX);
                    return Ok(());
                }
            }

            match kind {
                HDRX => {
                    t.hit(edge::TYPE_HDRX);
                    if header.is_some() {
                        t.hit(edge::HDR_DUP);
                        return Ok(());
                    }
                    if len != 8 {
                        t.hit(edge::HDR_BAD_LEN);
                        return Ok(());
                    }
                    let (w, h) = (be32(payload), be32(&payload[4..]));
                    t.hit(edge::WIDTH_CLASS + dim_class(w));
                    t.hit(edge::HEIGHT_CLASS + dim_class(h));
                    if w == 0 || h == 0 || w > MAX_DIM || h > MAX_DIM {
                        t.hit(edge::HDR_REJECT);
                        return Ok(());
                    }
                    t.hit(edge::AREA_CLASS + area_class(w as u64 * h as u64));
                    header = Some((w, h));
                }
                GAMA => {
                    t.hit(edge::TYPE_GAMA);
                    if len != 4 {
                        t.hit(edge::GAMA_BAD_LEN);
                        continue;
                    }
                    let g = be32(payload);
                    t.hit(edge::GAMA_CLASS + gama_class(g));
                    if g == 0 && header.is_some() {
                        t.hit(edge::BUG_B2);
                        return Err(Crash::new("B2"));
                    }
                }
                DATA => {
                    t.hit(edge::TYPE_DATA);
                    if payload.is_empty() {
                        t.hit(edge::DATA_EMPTY);
                    }
                    for &b in payload {
                        t.hit(edge::DATA_BYTE_CLASS + byte_class(b));
                    }
                    if !data_seen.is_empty() {
                        t.hit(edge::DATA_REPEAT);
                    }
                    if let Some((w, h)) = header {
                        if w as u64 * h as u64 > AREA_LIMIT {
                            t.hit(edge::BUG_B1);
                            return Err(Crash::new("B1"));
                        }
                    }
                    if data_seen.iter().any(|&(c, l)| c == checksum && l != len) {
                        t.hit(edge::BUG_B3);
                        return Err(Crash::new("B3"));
                    }
                    data_seen.push((checksum, len));
                }
                ENDX => {
                    t.hit(edge::TYPE_ENDX);
                    if len != 0 {
                        t.hit(edge::ENDX_BAD_LEN);
                        return Ok(());
                    }
                    if pos < input.len() {
                        t.hit(edge::TRAILING);
                    } else {
                        t.hit(edge::END_CLEAN);
                    }
                    return Ok(());
                }
                _ => t.hit(edge::TYPE_UNKNOWN),
            }
        }
    }
}

/// One chunk of a file being assembled or inspected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub kind: [u8; 4],
    pub payload: Vec<u8>,
}

impl Chunk {
    pub fn new(kind: [u8; 4], payload: impl Into<Vec<u8>>) -> Self {
        Self {
            kind,
            payload: payload.into(),
        }
    }

    pub fn header(width: u32, height: u32) -> Self {
        let mut p = width.to_be_bytes().to_vec();
        p.extend_from_slice(&height.to_be_bytes());
        Self::new(HDRX, p)
    }

    pub fn gama(value: u32) -> Self {
        Self::new(GAMA, value.to_be_bytes())
    }

    pub fn data(bytes: impl Into<Vec<u8>>) -> Self {
        Self::new(DATA, bytes)
    }

    pub fn end() -> Self {
        Self::new(ENDX, Vec::new())
    }
}

/// Serialize chunks behind the magic, with correct lengths and checksums.
pub fn build(chunks: &[Chunk]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for c in chunks {
        out.extend_from_slice(&(c.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&c.kind);
        out.extend_from_slice(&c.payload);
        out.push(xor_checksum(&c.payload));
    }
    out
}

/// A chunk located inside a byte buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSpan {
    pub kind: [u8; 4],
    /// Offset of the first payload byte.
    pub payload_at: usize,
    pub len: usize,
    /// Offset of the checksum byte.
    pub checksum_at: usize,
}

/// Structural parse: magic, well-formed chunk framing with valid checksums,
/// `HDRX` first with an 8-byte payload, `GAMA` payloads of 4 bytes, and a
/// terminating empty `ENDX`. Semantic checks (dimension ranges) are not
/// applied. Returns the chunk spans up to and including `ENDX`.
pub fn parse_structure(input: &[u8]) -> Option<Vec<ChunkSpan>> {
    if input.len() < 4 || &input[..4] != MAGIC {
        return None;
    }
    let mut pos = 4;
    let mut spans: Vec<ChunkSpan> = Vec::new();
    loop {
        if input.len() - pos < 8 {
            return None;
        }
        let len = be32(&input[pos..]) as usize;
        let kind: [u8; 4] = input[pos + 4..pos + 8].try_into().unwrap();
        let body = pos + 8;
        if len >= input.len() - body {
            return None;
        }
        if xor_checksum(&input[body..body + len]) != input[body + len] {
            return None;
        }
        let ok = match kind {
            HDRX => spans.is_empty() && len == 8,
            GAMA => len == 4,
            ENDX => len == 0,
            _ => true,
        };
        if !ok || (spans.is_empty() && kind != HDRX) {
            return None;
        }
        spans.push(ChunkSpan {
            kind,
            payload_at: body,
            len,
            checksum_at: body + len,
        });
        pos = body + len + 1;
        if kind == ENDX {
            return Some(spans);
        }
    }
}

/// A representative valid file: 16x16 header, a gamma chunk, two data chunks
/// of different lengths and the end marker.
pub fn sample_seed() -> Vec<u8> {
    build(&[
        Chunk::header(16, 16),
        Chunk::gama(45455),
        Chunk::data(*b"\x10\x20\x30\x40\x50\x60\x70\x11"),
        Chunk::data(*b"\x05\x06\x07\x08\x09"),
        Chunk::end(),
    ])
}

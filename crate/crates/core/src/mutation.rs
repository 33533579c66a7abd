//! Classic byte-level mutators: a deterministic walk, stacked havoc and splice.
//!
//! Every function here is a pure function of its inputs and the supplied RNG.

use rand::Rng;

/// Interesting values written by the deterministic walk and havoc.
pub const INTERESTING: [u32; 14] = [0, 1, 16, 32, 64, 100, 127, 128, 255, 256, 512, 1024, 32767, 65535];

/// Largest magnitude used by the add/sub passes.
pub const ARITH_MAX: u8 = 35;

/// Default cap on mutated payload length (1 MiB).
pub const DEFAULT_MAX_LEN: usize = 1 << 20;

const INTERESTING_8: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Deterministic,
    Havoc,
    Splice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HavocOp {
    BitFlip,
    RandomByte,
    Arith,
    Interesting,
    DeleteRange,
    DuplicateRange,
    OverwriteFromElsewhere,
}

impl HavocOp {
    pub const ALL: [HavocOp; 7] = [
        HavocOp::BitFlip,
        HavocOp::RandomByte,
        HavocOp::Arith,
        HavocOp::Interesting,
        HavocOp::DeleteRange,
        HavocOp::DuplicateRange,
        HavocOp::OverwriteFromElsewhere,
    ];
}

/// Record of what a mutator did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationPlan {
    pub phase: Phase,
    /// `(operator, position, argument)`
    pub ops_applied: Vec<(HavocOp, usize, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutationError {
    #[error("splice needs two distinct payloads")]
    IdenticalSplice,
    #[error("splice needs non-empty payloads")]
    EmptySplice,
}

// Deterministic walk

/// Exact number of candidates the deterministic walk yields for `n` bytes.
pub fn deterministic_count(n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    8 * n
        + 2 * ARITH_MAX as usize * n
        + INTERESTING_8 * n
        + 2 * INTERESTING.len() * n.saturating_sub(1)
        + 2 * INTERESTING.len() * n.saturating_sub(3)
}

/// The `k`-th candidate of the deterministic walk, or `None` past the end.
///
/// Order: single-bit flips (MSB first), per-byte `+1,-1,+2,-2,..,±35`,
/// 8-bit interesting values, then 16- and 32-bit interesting values at every
/// offset, big-endian before little-endian.
pub fn deterministic_nth(payload: &[u8], k: usize) -> Option<Vec<u8>> {
    let n = payload.len();
    if n == 0 {
        return None;
    }
    let mut out = payload.to_vec();
    let mut k = k;

    if k < 8 * n {
        out[k / 8] ^= 0x80 >> (k % 8);
        return Some(out);
    }
    k -= 8 * n;

    let arith = 2 * ARITH_MAX as usize;
    if k < arith * n {
        let (pos, j) = (k / arith, k % arith);
        let delta = (j / 2 + 1) as u8;
        out[pos] = if j % 2 == 0 {
            out[pos].wrapping_add(delta)
        } else {
            out[pos].wrapping_sub(delta)
        };
        return Some(out);
    }
    k -= arith * n;

    if k < INTERESTING_8 * n {
        out[k / INTERESTING_8] = INTERESTING[k % INTERESTING_8] as u8;
        return Some(out);
    }
    k -= INTERESTING_8 * n;

    for width in [2usize, 4] {
        let per_pos = 2 * INTERESTING.len();
        let slots = n.saturating_sub(width - 1);
        if k < per_pos * slots {
            let (pos, j) = (k / per_pos, k % per_pos);
            let value = INTERESTING[j / 2];
            write_int(&mut out[pos..pos + width], value, j % 2 == 0);
            return Some(out);
        }
        k -= per_pos * slots;
    }
    None
}

/// Lazily enumerate the whole deterministic walk.
pub fn deterministic_pass(payload: &[u8]) -> impl Iterator<Item = Vec<u8>> + '_ {
    (0..deterministic_count(payload.len()))
        .map(move |k| deterministic_nth(payload, k).expect("index below deterministic_count"))
}

fn write_int(dst: &mut [u8], value: u32, big_endian: bool) {
    let bytes = if big_endian {
        value.to_be_bytes()
    } else {
        value.to_le_bytes()
    };
    match dst.len() {
        1 => dst[0] = value as u8,
        2 => {
            let b = if big_endian {
                [bytes[2], bytes[3]]
            } else {
                [bytes[0], bytes[1]]
            };
            dst.copy_from_slice(&b);
        }
        4 => dst.copy_from_slice(&bytes),
        _ => unreachable!("unsupported width"),
    }
}

// Havoc

#[derive(Debug, Clone, Copy)]
pub struct HavocConfig {
    pub max_len: usize,
    /// Largest stack exponent; the stack size is `2^k` for `k` in `0..=max_stack_pow`.
    pub max_stack_pow: u32,
}

impl Default for HavocConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            max_stack_pow: 6,
        }
    }
}

pub fn havoc<R: Rng + ?Sized>(payload: &[u8], rng: &mut R, cfg: &HavocConfig) -> Vec<u8> {
    havoc_with_plan(payload, rng, cfg).0
}

/// Apply a stack of `1..=64` random operators.
///
/// The result is never empty and never longer than
/// `min(2 * payload.len(), cfg.max_len)`.
pub fn havoc_with_plan<R: Rng + ?Sized>(payload: &[u8], rng: &mut R, cfg: &HavocConfig) -> (Vec<u8>, MutationPlan) {
    assert!(!payload.is_empty(), "havoc needs a non-empty payload");
    let limit = (2 * payload.len()).min(cfg.max_len).max(1);
    let mut out = payload.to_vec();
    out.truncate(limit);
    let stack = 1usize << rng.gen_range(0..=cfg.max_stack_pow);
    let mut ops = Vec::with_capacity(stack);

    for _ in 0..stack {
        let op = HavocOp::ALL[rng.gen_range(0..HavocOp::ALL.len())];
        let len = out.len();
        match op {
            HavocOp::BitFlip => {
                let bit = rng.gen_range(0..len * 8);
                out[bit / 8] ^= 0x80 >> (bit % 8);
                ops.push((op, bit / 8, (bit % 8) as u32));
            }
            HavocOp::RandomByte => {
                let pos = rng.gen_range(0..len);
                let x = rng.gen_range(1..=255u8);
                out[pos] ^= x;
                ops.push((op, pos, out[pos] as u32));
            }
            HavocOp::Arith => {
                let pos = rng.gen_range(0..len);
                let delta = rng.gen_range(1..=ARITH_MAX);
                if rng.gen() {
                    out[pos] = out[pos].wrapping_add(delta);
                } else {
                    out[pos] = out[pos].wrapping_sub(delta);
                }
                ops.push((op, pos, delta as u32));
            }
            HavocOp::Interesting => {
                let width = [1usize, 2, 4][rng.gen_range(0..3)];
                if width > len {
                    let pos = rng.gen_range(0..len);
                    let v = INTERESTING[rng.gen_range(0..INTERESTING_8)];
                    out[pos] = v as u8;
                    ops.push((op, pos, v));
                    continue;
                }
                let pos = rng.gen_range(0..=len - width);
                let v = if width == 1 {
                    INTERESTING[rng.gen_range(0..INTERESTING_8)]
                } else {
                    INTERESTING[rng.gen_range(0..INTERESTING.len())]
                };
                write_int(&mut out[pos..pos + width], v, rng.gen());
                ops.push((op, pos, v));
            }
            HavocOp::DeleteRange => {
                if len < 2 {
                    // nothing removable; degrade to a bit flip
                    out[0] ^= 0x80 >> rng.gen_range(0..8);
                    ops.push((HavocOp::BitFlip, 0, 0));
                    continue;
                }
                let del = rng.gen_range(1..=block_len(len - 1));
                let pos = rng.gen_range(0..=len - del);
                out.drain(pos..pos + del);
                ops.push((op, pos, del as u32));
            }
            HavocOp::DuplicateRange => {
                let room = limit - len;
                if room == 0 {
                    let pos = rng.gen_range(0..len);
                    out[pos] ^= rng.gen_range(1..=255u8);
                    ops.push((HavocOp::RandomByte, pos, out[pos] as u32));
                    continue;
                }
                let n = rng.gen_range(1..=block_len(len).min(room));
                let src = rng.gen_range(0..=len - n);
                let dst = rng.gen_range(0..=len);
                let block: Vec<u8> = out[src..src + n].to_vec();
                out.splice(dst..dst, block);
                ops.push((op, dst, n as u32));
            }
            HavocOp::OverwriteFromElsewhere => {
                if len < 2 {
                    out[0] ^= 0x80 >> rng.gen_range(0..8);
                    ops.push((HavocOp::BitFlip, 0, 0));
                    continue;
                }
                let n = rng.gen_range(1..=block_len(len - 1));
                let src = rng.gen_range(0..=len - n);
                let dst = rng.gen_range(0..=len - n);
                out.copy_within(src..src + n, dst);
                ops.push((op, dst, n as u32));
            }
        }
    }
    debug_assert!(!out.is_empty() && out.len() <= limit);
    (
        out,
        MutationPlan {
            phase: Phase::Havoc,
            ops_applied: ops,
        },
    )
}

// Block operations touch at most 32 bytes.
fn block_len(max: usize) -> usize {
    max.clamp(1, 32)
}

// Splice

/// Prefix of `a` up to `split_a` followed by the suffix of `b` from `split_b`.
pub fn splice_at(a: &[u8], b: &[u8], split_a: usize, split_b: usize) -> Vec<u8> {
    let mut out = a[..split_a.min(a.len())].to_vec();
    out.extend_from_slice(&b[split_b.min(b.len())..]);
    out
}

/// Random-split splice. Split points are re-drawn until the result is
/// non-empty; the result is truncated to `max_len`.
pub fn splice<R: Rng + ?Sized>(a: &[u8], b: &[u8], rng: &mut R, max_len: usize) -> Result<Vec<u8>, MutationError> {
    if a.is_empty() || b.is_empty() {
        return Err(MutationError::EmptySplice);
    }
    if a == b {
        return Err(MutationError::IdenticalSplice);
    }
    loop {
        let sa = rng.gen_range(0..=a.len());
        let sb = rng.gen_range(0..=b.len());
        let mut out = splice_at(a, b, sa, sb);
        if !out.is_empty() {
            out.truncate(max_len.max(1));
            return Ok(out);
        }
    }
}

//! Batch workloads over independent inputs: campaign sweeps, the random-input
//! estimate for the checksum guard, and whole-corpus lineage checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Lineage, SeedId, SeedRecord};
use crate::engine::{self, CampaignConfig, CampaignSummary, EngineError};
use crate::executor::chunkfmt::ChunkFmt;
use crate::executor::{run_in_process, ExecStatus};
use crate::parallel::{self, Mode};

/// Run independent campaigns, results in input order.
pub fn run_many(configs: &[CampaignConfig], mode: Mode) -> Vec<Result<CampaignSummary, EngineError>> {
    parallel::map(mode, configs, engine::run)
}

/// Samples per work unit; results do not depend on the execution mode.
pub const MONTE_CARLO_BLOCK: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Estimate {
    pub samples: u64,
    pub hits: u64,
}

impl Estimate {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.samples.max(1) as f64
    }
}

/// Feed uniformly random inputs of `len` bytes to `chunkfmt` and count how
/// many crash with `reason`.
pub fn random_input_hits(samples: u64, len: usize, reason: &str, seed: u64, mode: Mode) -> Estimate {
    let blocks = samples.div_ceil(MONTE_CARLO_BLOCK);
    let hits = parallel::map_range(mode, blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let n = MONTE_CARLO_BLOCK.min(samples - b * MONTE_CARLO_BLOCK);
        let mut buf = vec![0u8; len];
        let mut hits = 0u64;
        for _ in 0..n {
            rng.fill(&mut buf[..]);
            if let ExecStatus::Crash { reason: r } = run_in_process(&ChunkFmt, &buf).status {
                hits += u64::from(r == reason);
            }
        }
        hits
    });
    Estimate {
        samples,
        hits: hits.into_iter().sum(),
    }
}

/// Lineage of every record by a full ancestor walk, in input order.
pub fn brute_force_lineage(records: &[SeedRecord], mode: Mode) -> Result<Vec<Lineage>, String> {
    let classes = crate::engine::report::classify(records)?;
    Ok(parallel::map(mode, records, |r| classes[&r.id]))
}

/// Seeds whose cached lineage disagrees with an independent ancestor walk.
pub fn lineage_mismatches(corpus: &Corpus, mode: Mode) -> Vec<SeedId> {
    let seeds: Vec<_> = corpus.seeds().collect();
    let walk = |id: SeedId| -> Lineage {
        let seed = corpus.get(id).expect("id from corpus");
        if seed.origin == crate::corpus::Origin::Llm {
            return Lineage::LlmDirect;
        }
        let mut cur = seed.parent_id;
        while let Some(p) = cur {
            let parent = corpus.get(p).expect("parent admitted earlier");
            if parent.origin == crate::corpus::Origin::Llm {
                return Lineage::LlmDescendant;
            }
            cur = parent.parent_id;
        }
        Lineage::NonLlm
    };
    parallel::map(mode, &seeds, |s| {
        (s.id, corpus.lineage_origin(s.id).ok() == Some(walk(s.id)))
    })
    .into_iter()
    .filter(|(_, ok)| !ok)
    .map(|(id, _)| id)
    .collect()
}

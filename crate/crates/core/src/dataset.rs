//! Fine-tuning pairs built from campaign archives.
//!
//! A pair is a (parent, child) couple where the child was admitted for new
//! edges, new hit-count buckets or a crash. Noise pairs pair a parent with a
//! havoc output of itself.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, SeedId, SeedRecord};
use crate::coverage::{bucketize, EdgeId, EdgeTrace, NoveltyVerdict};
use crate::engine::{self, EngineError, CORPUS_DIR};
use crate::executor::{CoverageProvider, ExecStatus, ProviderError};
use crate::hexcodec::{self, Gate, PromptBuilder, PromptKind, DEFAULT_MAX_HEX_LEN};
use crate::mutation::{self, HavocConfig};
use crate::parallel::{self, Mode};

pub const DEFAULT_NOISE_RATIO: f64 = 0.1;
pub const MAX_NOISE_RATIO: f64 = 0.5;
/// Havoc draws per noise pair before giving up on the gate.
const NOISE_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    NewPath,
    HitcountChange,
    Crash,
}

/// Which valuable-seed criteria a seed meets. New edges and new buckets are
/// disjoint: a bucket change only counts when no edge is new.
pub fn detect_valuable(verdict: &NoveltyVerdict, caused_crash: bool) -> Vec<Criterion> {
    let mut out = Vec::new();
    if verdict.new_edges > 0 {
        out.push(Criterion::NewPath);
    } else if verdict.new_buckets > 0 {
        out.push(Criterion::HitcountChange);
    }
    if caused_crash {
        out.push(Criterion::Crash);
    }
    out
}

fn record_criteria(r: &SeedRecord) -> Vec<Criterion> {
    detect_valuable(&NoveltyVerdict::new(r.new_edges, r.new_buckets), r.caused_crash)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub format_tag: String,
    pub criteria: Vec<Criterion>,
    pub is_noise: bool,
    pub prompt: String,
    pub original_hex: String,
    pub mutated_hex: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("noise ratio {0} outside [0, 0.5]")]
    NoiseRatio(f64),
    #[error("max hex length must be positive")]
    MaxHexLen,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Record { path: PathBuf, line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A campaign output directory loaded into memory.
#[derive(Debug, Clone)]
pub struct RunArchive {
    pub dir: PathBuf,
    pub target: String,
    pub format_tag: String,
    /// In id order.
    pub records: Vec<SeedRecord>,
    pub payloads: HashMap<SeedId, Vec<u8>>,
}

impl RunArchive {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let meta = engine::read_meta(dir)?;
        let mut records = engine::read_seed_records(dir)?;
        records.sort_by_key(|r| r.id);
        let payloads = corpus::load_dir(&dir.join(CORPUS_DIR))?
            .into_iter()
            .map(|s| (s.id, s.payload))
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            target: meta.target,
            format_tag: meta.format_tag,
            records,
            payloads,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub max_hex_len: usize,
    pub noise_ratio: f64,
    pub rng_seed: u64,
    /// Archives whose target name or format tag is listed are left out.
    pub exclude: Vec<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_hex_len: DEFAULT_MAX_HEX_LEN,
            noise_ratio: DEFAULT_NOISE_RATIO,
            rng_seed: 0,
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub pairs: Vec<FinetunePair>,
    pub real: usize,
    pub noise: usize,
    /// Pairs over the hex-length gate.
    pub skipped_gate: usize,
    /// Valuable seeds whose parent payload is missing.
    pub skipped_unresolved: usize,
    pub excluded_archives: usize,
}

pub fn build_pairs(archives: &[RunArchive], opts: &BuildOptions) -> Result<BuildReport, DatasetError> {
    if !(0.0..=MAX_NOISE_RATIO).contains(&opts.noise_ratio) {
        return Err(DatasetError::NoiseRatio(opts.noise_ratio));
    }
    if opts.max_hex_len == 0 {
        return Err(DatasetError::MaxHexLen);
    }
    let prompts = PromptBuilder::new(opts.max_hex_len);
    let mut report = BuildReport::default();
    // (format tag, parent payload) of every real pair, for noise.
    let mut parents: Vec<(&str, &[u8])> = Vec::new();

    for archive in archives {
        if opts
            .exclude
            .iter()
            .any(|x| *x == archive.target || *x == archive.format_tag)
        {
            report.excluded_archives += 1;
            continue;
        }
        for r in &archive.records {
            let criteria = record_criteria(r);
            let Some(parent_id) = r.parent else { continue };
            if criteria.is_empty() {
                continue;
            }
            let (Some(parent), Some(child)) = (archive.payloads.get(&parent_id), archive.payloads.get(&r.id)) else {
                report.skipped_unresolved += 1;
                continue;
            };
            if hexcodec::gate_bytes(parent.len(), Some(child.len()), opts.max_hex_len) == Gate::Skip {
                report.skipped_gate += 1;
                continue;
            }
            let prompt = prompts
                .build(PromptKind::FinetunePair, &r.format_tag, parent, Some(child))
                .expect("gate already checked");
            report.pairs.push(FinetunePair {
                format_tag: r.format_tag.clone(),
                criteria,
                is_noise: false,
                prompt: prompt.text,
                original_hex: hexcodec::encode(parent),
                mutated_hex: hexcodec::encode(child),
            });
            parents.push((&r.format_tag, parent));
        }
    }
    report.real = report.pairs.len();

    let wanted = (opts.noise_ratio * report.real as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let havoc_cfg = HavocConfig::default();
    for _ in 0..wanted {
        let (tag, parent) = parents[rng.gen_range(0..parents.len())];
        let mutated = (0..NOISE_ATTEMPTS)
            .map(|_| mutation::havoc(parent, &mut rng, &havoc_cfg))
            .find(|m| hexcodec::gate_bytes(parent.len(), Some(m.len()), opts.max_hex_len) == Gate::Pass);
        let Some(mutated) = mutated else {
            report.skipped_gate += 1;
            continue;
        };
        let prompt = prompts
            .build(PromptKind::FinetunePair, tag, parent, Some(&mutated))
            .expect("gate already checked");
        report.pairs.push(FinetunePair {
            format_tag: tag.to_string(),
            criteria: Vec::new(),
            is_noise: true,
            prompt: prompt.text,
            original_hex: hexcodec::encode(parent),
            mutated_hex: hexcodec::encode(&mutated),
        });
        report.noise += 1;
    }
    Ok(report)
}

/// Write one JSON record per line.
pub fn export(pairs: &[FinetunePair], path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, p).expect("pair serializes");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn import(path: &Path) -> Result<Vec<FinetunePair>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|e| DatasetError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(pair);
    }
    Ok(out)
}

/// What re-executing an archive revealed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub seeds_replayed: usize,
    pub pairs_checked: usize,
    pub noise_pairs: usize,
    pub failures: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Novelty of each trace against the union of the ones before it, computed
/// with plain sets of `(edge, bucket)`.
pub fn replay_verdicts(traces: &[EdgeTrace]) -> Vec<NoveltyVerdict> {
    let mut edges: BTreeSet<EdgeId> = BTreeSet::new();
    let mut buckets: BTreeSet<(EdgeId, u8)> = BTreeSet::new();
    traces
        .iter()
        .map(|t| {
            let here: BTreeSet<(EdgeId, u8)> = t.iter().map(|(e, c)| (e, bucketize(c))).collect();
            let new_edges = here.iter().filter(|(e, _)| !edges.contains(e)).count() as u32;
            let new_buckets = here
                .iter()
                .filter(|(e, b)| edges.contains(e) && !buckets.contains(&(*e, *b)))
                .count() as u32;
            edges.extend(here.iter().map(|(e, _)| *e));
            buckets.extend(here);
            NoveltyVerdict::new(new_edges, new_buckets)
        })
        .collect()
}

/// Re-execute every archived seed on `provider`, re-derive each seed's
/// criteria from the raw traces and check every exported pair against them.
pub fn audit(
    archive: &RunArchive,
    pairs: &[FinetunePair],
    provider: &CoverageProvider,
    timeout_ms: u64,
    max_hex_len: usize,
    mode: Mode,
) -> Result<AuditReport, DatasetError> {
    let mut report = AuditReport::default();
    let mut payloads = Vec::with_capacity(archive.records.len());
    for r in &archive.records {
        match archive.payloads.get(&r.id) {
            Some(p) => payloads.push(p),
            None => report.failures.push(format!("seed {} has no payload file", r.id)),
        }
    }
    if !report.failures.is_empty() {
        return Ok(report);
    }
    let outcomes = parallel::map(mode, &payloads, |p| provider.execute(p, timeout_ms));
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut crashed = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let o = o?;
        crashed.push(matches!(o.status, ExecStatus::Crash { .. }));
        traces.push(o.trace);
    }
    report.seeds_replayed = traces.len();
    let verdicts = replay_verdicts(&traces);

    let mut by_pair: HashMap<(String, String), Vec<Criterion>> = HashMap::new();
    for (i, r) in archive.records.iter().enumerate() {
        let criteria = detect_valuable(&verdicts[i], crashed[i]);
        let recorded = record_criteria(r);
        if criteria != recorded {
            report.failures.push(format!(
                "seed {}: recorded {recorded:?}, replay gives {criteria:?}",
                r.id
            ));
        }
        if let Some(parent) = r.parent.and_then(|p| archive.payloads.get(&p)) {
            by_pair
                .entry((hexcodec::encode(parent), hexcodec::encode(&payloads[i][..])))
                .or_insert(criteria);
        }
    }

    for (n, p) in pairs.iter().enumerate() {
        if p.original_hex.len() + p.mutated_hex.len() > max_hex_len {
            report.failures.push(format!("pair {n}: over the hex gate"));
        }
        if p.is_noise {
            report.noise_pairs += 1;
            continue;
        }
        report.pairs_checked += 1;
        match by_pair.get(&(p.original_hex.clone(), p.mutated_hex.clone())) {
            None => report
                .failures
                .push(format!("pair {n}: no matching parent/child in archive")),
            Some(c) if c.is_empty() => report.failures.push(format!("pair {n}: meets no criterion")),
            Some(c) if *c != p.criteria => report
                .failures
                .push(format!("pair {n}: criteria {:?} vs replay {c:?}", p.criteria)),
            Some(_) => {}
        }
    }
    Ok(report)
}

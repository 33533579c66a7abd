use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{CampaignStats, StatsWriter};
use super::{build_provider, Budget, CampaignConfig, Clock, EngineError, LlmMode, DEFAULT_FORMAT_TAG, DET_MAX_LEN};
use crate::channel::{InProcessTransport, LlmChannel, SocketTransport};
use crate::corpus::{self, Corpus, Lineage, Origin, Seed, SeedId, SeedRecord};
use crate::coverage::CoverageMap;
use crate::executor::{CoverageProvider, ExecStatus};
use crate::mutation::{self, HavocConfig};

pub const CORPUS_DIR: &str = "corpus";
pub const CRASH_DIR: &str = "crashes";
pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const META_FILE: &str = "campaign.json";

/// Identifies what a campaign output directory was produced from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub target: String,
    pub format_tag: String,
    pub rng_seed: u64,
}

#[derive(Debug)]
pub struct CampaignSummary {
    pub stats: CampaignStats,
    pub corpus: Corpus,
    pub wall_time: Duration,
}

impl CampaignSummary {
    pub fn execs_per_sec(&self) -> f64 {
        self.stats.execs as f64 / self.wall_time.as_secs_f64().max(1e-9)
    }

    pub fn iterations_per_sec(&self) -> f64 {
        self.stats.iterations as f64 / self.wall_time.as_secs_f64().max(1e-9)
    }
}

pub fn run(config: &CampaignConfig) -> Result<CampaignSummary, EngineError> {
    config.validate()?;
    let provider = build_provider(&config.target)?;
    run_with_provider(config, provider)
}

pub fn run_with_provider(config: &CampaignConfig, provider: CoverageProvider) -> Result<CampaignSummary, EngineError> {
    config.validate()?;
    let mut campaign = Campaign::new(config.clone(), provider)?;
    campaign.load_initial()?;
    campaign.fuzz()?;
    campaign.finish()
}

pub struct Campaign {
    config: CampaignConfig,
    provider: CoverageProvider,
    format_tag: String,
    clock: Clock,
    rng: ChaCha8Rng,
    map: CoverageMap,
    corpus: Corpus,
    channel: Option<LlmChannel>,
    stats: CampaignStats,
    det_cursor: HashMap<SeedId, usize>,
    havoc: HavocConfig,
    started: Instant,
    next_row_at: f64,
    out: Option<Output>,
}

struct Output {
    dir: PathBuf,
    corpus_dir: PathBuf,
    stats: StatsWriter,
}

impl Campaign {
    pub fn new(config: CampaignConfig, provider: CoverageProvider) -> Result<Self, EngineError> {
        let format_tag = config
            .format_tag
            .clone()
            .or_else(|| provider.format_tag().map(str::to_string))
            .unwrap_or_else(|| DEFAULT_FORMAT_TAG.to_string());
        let channel = match &config.llm {
            LlmMode::Off => None,
            LlmMode::Socket(ep) => Some(LlmChannel::new(
                Box::new(SocketTransport::spawn(ep.clone())),
                config.queue_cap,
                config.max_hex_len,
            )),
            LlmMode::Stub { latency } => Some(LlmChannel::new(
                Box::new(InProcessTransport::stub(*latency)),
                config.queue_cap,
                config.max_hex_len,
            )),
        };
        let out = config.out_dir.as_ref().map(|d| prepare_out(d)).transpose()?;
        Ok(Self {
            clock: config.clock(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            next_row_at: config.stats_interval,
            config,
            provider,
            format_tag,
            map: CoverageMap::new(),
            corpus: Corpus::new(),
            channel,
            stats: CampaignStats::default(),
            det_cursor: HashMap::new(),
            havoc: HavocConfig::default(),
            started: Instant::now(),
            out,
        })
    }

    fn now(&self) -> f64 {
        match self.clock {
            Clock::Wall => self.started.elapsed().as_secs_f64(),
            Clock::Virtual { execs_per_sec } => self.stats.execs as f64 / execs_per_sec as f64,
        }
    }

    fn exhausted(&self) -> bool {
        match self.config.budget {
            Budget::Iterations(n) => self.stats.iterations >= n,
            Budget::Executions(n) => self.stats.execs >= n,
            Budget::Duration(d) => self.started.elapsed() >= d,
        }
    }

    pub fn load_initial(&mut self) -> Result<(), EngineError> {
        let seeds = corpus::read_initial_seeds(&self.config.corpus_dir)?;
        if seeds.is_empty() {
            return Err(EngineError::Config(format!(
                "initial corpus {} has no seed files",
                self.config.corpus_dir.display()
            )));
        }
        for (name, payload) in seeds {
            if payload.is_empty() {
                warn!("skipping empty initial seed {name}");
                continue;
            }
            if self.triage(payload, Origin::Initial, None)?.is_none() {
                info!("initial seed {name} adds no coverage; not kept");
            }
        }
        if self.corpus.is_empty() {
            return Err(EngineError::Config("no initial seed produced coverage".into()));
        }
        Ok(())
    }

    pub fn fuzz(&mut self) -> Result<(), EngineError> {
        while !self.exhausted() {
            self.poll_channel()?;
            if self.exhausted() {
                break;
            }
            let id = self.corpus.next_seed()?;
            let payload = self.corpus.get(id).expect("scheduled seed exists").payload.clone();
            let now = self.now();
            if let Some(ch) = self.channel.as_mut() {
                ch.offer(id, &self.format_tag, &payload, now);
            }
            self.mutate_and_run(id, &payload)?;
            self.stats.iterations += 1;
        }
        Ok(())
    }

    fn poll_channel(&mut self) -> Result<(), EngineError> {
        let Some(ch) = self.channel.as_mut() else {
            return Ok(());
        };
        let delivery = ch.pump();
        self.stats.channel = ch.stats();
        if let Some(d) = delivery {
            if self.corpus.get(d.parent).is_some() {
                self.triage(d.payload, Origin::Llm, Some(d.parent))?;
            } else {
                warn!("mutator answered for unknown seed {}", d.parent);
            }
        }
        Ok(())
    }

    fn mutate_and_run(&mut self, id: SeedId, payload: &[u8]) -> Result<(), EngineError> {
        let total = mutation::deterministic_count(payload.len());
        let cursor = self.det_cursor.get(&id).copied().unwrap_or(0);
        if payload.len() <= DET_MAX_LEN && cursor < total {
            let end = (cursor + self.config.det_chunk).min(total);
            let mut k = cursor;
            while k < end && !self.exhausted() {
                let cand = mutation::deterministic_nth(payload, k).expect("index within walk");
                self.triage(cand, Origin::Classic, Some(id))?;
                k += 1;
            }
            self.det_cursor.insert(id, k);
            return Ok(());
        }
        for _ in 0..self.config.havoc_rounds {
            if self.exhausted() {
                break;
            }
            let cand = self.havoc_candidate(payload);
            self.triage(cand, Origin::Classic, Some(id))?;
        }
        Ok(())
    }

    fn havoc_candidate(&mut self, payload: &[u8]) -> Vec<u8> {
        let n = self.corpus.len();
        if n > 1 && self.rng.gen_range(0..100) < self.config.splice_percent {
            let other = self.corpus.by_index(self.rng.gen_range(0..n)).expect("index in range");
            if let Ok(spliced) = mutation::splice(payload, &other.payload, &mut self.rng, self.havoc.max_len) {
                return mutation::havoc(&spliced, &mut self.rng, &self.havoc);
            }
        }
        mutation::havoc(payload, &mut self.rng, &self.havoc)
    }

    /// Execute one candidate and admit it if it is novel or a new crash.
    fn triage(
        &mut self,
        payload: Vec<u8>,
        origin: Origin,
        parent: Option<SeedId>,
    ) -> Result<Option<SeedId>, EngineError> {
        let outcome = self.provider.execute(&payload, self.config.timeout_ms)?;
        self.stats.execs += 1;
        if let Some(p) = parent {
            self.corpus.record_exec(p);
        }
        let admitted = self.admit(payload, origin, parent, outcome.status, &outcome.trace)?;
        self.tick()?;
        Ok(admitted)
    }

    fn admit(
        &mut self,
        payload: Vec<u8>,
        origin: Origin,
        parent: Option<SeedId>,
        status: ExecStatus,
        trace: &crate::coverage::EdgeTrace,
    ) -> Result<Option<SeedId>, EngineError> {
        let reason = match status {
            ExecStatus::Timeout => {
                self.stats.timeouts += 1;
                return Ok(None);
            }
            ExecStatus::Crash { reason } => Some(reason),
            ExecStatus::Ok => None,
        };
        let (verdict, new_edges) = self.map.diff(trace);
        if !verdict.is_interesting {
            match &reason {
                None => return Ok(None),
                Some(_) if self.corpus.bump_crash(&new_edges) => return Ok(None),
                Some(_) => {}
            }
        }
        self.map.observe(trace);
        self.stats.edges_seen = self.map.edges_seen() as u64;

        let id = self.corpus.next_id();
        let mut seed = Seed::new(id, payload, origin, parent);
        seed.found_at = self.now();
        seed.caused_crash = reason.is_some();
        seed.format_tag = self.format_tag.clone();
        let known_crashes = self.corpus.crashes().len();
        let detail = reason.clone().unwrap_or_default();
        self.corpus.admit(seed, verdict, &new_edges, &detail)?;

        if let Some(reason) = reason {
            if self.corpus.crashes().len() > known_crashes {
                self.stats.crashes += 1;
            }
            if self.stats.crash_reasons.insert(reason.clone()) {
                self.stats.first_crash_exec.push((reason, self.stats.execs));
            }
        }
        match self.corpus.lineage_origin(id)? {
            Lineage::LlmDirect => self.stats.admitted_llm_direct += 1,
            Lineage::LlmDescendant => self.stats.admitted_llm_descendant += 1,
            Lineage::NonLlm => self.stats.admitted_other += 1,
        }
        if let Some(out) = &self.out {
            let seed = self.corpus.get(id).expect("just admitted");
            let path = out.corpus_dir.join(seed.file_name());
            fs::write(&path, &seed.payload).map_err(EngineError::io(&path))?;
        }
        Ok(Some(id))
    }

    fn tick(&mut self) -> Result<(), EngineError> {
        let now = self.now();
        if now < self.next_row_at {
            return Ok(());
        }
        while self.next_row_at <= now {
            self.next_row_at += self.config.stats_interval;
        }
        self.emit_row(now)
    }

    fn emit_row(&mut self, elapsed: f64) -> Result<(), EngineError> {
        let row = self.stats.snapshot(elapsed);
        if let Some(out) = self.out.as_mut() {
            out.stats.append(&row)?;
        }
        self.stats.rows.push(row);
        Ok(())
    }

    pub fn finish(mut self) -> Result<CampaignSummary, EngineError> {
        let now = self.now();
        if self.stats.rows.last().is_none_or(|r| r.elapsed_s < now) {
            self.emit_row(now)?;
        }
        if let Some(out) = &self.out {
            let crash_dir = out.dir.join(CRASH_DIR);
            self.corpus.persist_crashes(&crash_dir)?;
            write_seed_records(&out.dir.join(SEEDS_FILE), &self.corpus)?;
            let meta = CampaignMeta {
                target: self.config.target.name(),
                format_tag: self.format_tag.clone(),
                rng_seed: self.config.rng_seed,
            };
            let path = out.dir.join(META_FILE);
            let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
            fs::write(&path, text).map_err(EngineError::io(&path))?;
        }
        let wall_time = self.started.elapsed();
        info!(
            "campaign done: {} execs, {} edges, {} crashes, {} llm-origin seeds in {:.2?}",
            self.stats.execs,
            self.stats.edges_seen,
            self.stats.crashes,
            self.stats.admitted_llm(),
            wall_time
        );
        Ok(CampaignSummary {
            stats: self.stats,
            corpus: self.corpus,
            wall_time,
        })
    }
}

fn prepare_out(dir: &std::path::Path) -> Result<Output, EngineError> {
    let corpus_dir = dir.join(CORPUS_DIR);
    if fs::read_dir(&corpus_dir).is_ok_and(|mut d| d.next().is_some()) {
        return Err(EngineError::Config(format!(
            "output corpus {} is not empty",
            corpus_dir.display()
        )));
    }
    fs::create_dir_all(&corpus_dir).map_err(EngineError::io(&corpus_dir))?;
    Ok(Output {
        dir: dir.to_path_buf(),
        corpus_dir,
        stats: StatsWriter::create(dir)?,
    })
}

fn write_seed_records(path: &std::path::Path, corpus: &Corpus) -> Result<(), EngineError> {
    let mut text = String::new();
    for seed in corpus.seeds() {
        let line = serde_json::to_string(&SeedRecord::from(seed)).expect("record serializes");
        text.push_str(&line);
        text.push('\n');
    }
    let mut f = fs::File::create(path).map_err(EngineError::io(path))?;
    f.write_all(text.as_bytes()).map_err(EngineError::io(path))
}

/// Read `seeds.jsonl` from a campaign output directory.
pub fn read_seed_records(dir: &std::path::Path) -> Result<Vec<SeedRecord>, EngineError> {
    let path = dir.join(SEEDS_FILE);
    let text = fs::read_to_string(&path).map_err(EngineError::io(&path))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EngineError::Artifact {
                path: path.clone(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn read_meta(dir: &std::path::Path) -> Result<CampaignMeta, EngineError> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(EngineError::io(&path))?;
    serde_json::from_str(&text).map_err(|e| EngineError::Artifact {
        path,
        reason: e.to_string(),
    })
}

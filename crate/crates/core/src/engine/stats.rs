//! Periodic campaign counters and the `stats.csv` file.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::channel::ChannelStats;

pub const STATS_FILE: &str = "stats.csv";

/// One sample of the campaign counters. Every counter is cumulative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub elapsed_s: f64,
    pub edges_seen: u64,
    pub execs: u64,
    pub admitted_llm_direct: u64,
    pub admitted_llm_descendant: u64,
    pub admitted_other: u64,
    pub crashes: u64,
    pub void_responses: u64,
    pub channel_offers: u64,
    pub channel_evictions: u64,
    pub channel_deliveries: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignStats {
    pub rows: Vec<StatsRow>,
    pub iterations: u64,
    pub execs: u64,
    pub timeouts: u64,
    pub edges_seen: u64,
    /// Deduplicated crash records.
    pub crashes: u64,
    /// Distinct crash reasons reported by the target.
    pub crash_reasons: BTreeSet<String>,
    /// Executions at which each crash reason was first seen.
    pub first_crash_exec: Vec<(String, u64)>,
    pub admitted_llm_direct: u64,
    pub admitted_llm_descendant: u64,
    pub admitted_other: u64,
    pub channel: ChannelStats,
}

impl CampaignStats {
    pub fn admitted_llm(&self) -> u64 {
        self.admitted_llm_direct + self.admitted_llm_descendant
    }

    pub fn snapshot(&self, elapsed_s: f64) -> StatsRow {
        StatsRow {
            elapsed_s,
            edges_seen: self.edges_seen,
            execs: self.execs,
            admitted_llm_direct: self.admitted_llm_direct,
            admitted_llm_descendant: self.admitted_llm_descendant,
            admitted_other: self.admitted_other,
            crashes: self.crashes,
            void_responses: self.channel.voids,
            channel_offers: self.channel.offers,
            channel_evictions: self.channel.evictions,
            channel_deliveries: self.channel.deliveries,
        }
    }
}

/// Appends rows to `stats.csv`, flushing after each one.
pub struct StatsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl StatsWriter {
    pub fn create(dir: &Path) -> Result<Self, EngineError> {
        let path = dir.join(STATS_FILE);
        let file = File::create(&path).map_err(EngineError::io(&path))?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        inner.write_record(HEADER).map_err(|e| csv_err(&path, e))?;
        inner.flush().map_err(EngineError::io(&path))?;
        Ok(Self { path, inner })
    }

    pub fn append(&mut self, row: &StatsRow) -> Result<(), EngineError> {
        self.inner.serialize(row).map_err(|e| csv_err(&self.path, e))?;
        self.inner.flush().map_err(EngineError::io(&self.path))
    }
}

pub const HEADER: [&str; 11] = [
    "elapsed_s",
    "edges_seen",
    "execs",
    "admitted_llm_direct",
    "admitted_llm_descendant",
    "admitted_other",
    "crashes",
    "void_responses",
    "channel_offers",
    "channel_evictions",
    "channel_deliveries",
];

fn csv_err(path: &Path, e: csv::Error) -> EngineError {
    EngineError::Artifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn read_stats(dir: &Path) -> Result<Vec<StatsRow>, EngineError> {
    let path = dir.join(STATS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<StatsRow>, _>>()
        .map_err(|e| csv_err(&path, e))
}

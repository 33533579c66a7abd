//! The fuzzing loop: schedule, mutate, execute, triage.

mod campaign;
pub mod report;
pub mod stats;

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

pub use campaign::{
    read_meta, read_seed_records, run, run_with_provider, Campaign, CampaignMeta, CampaignSummary, CORPUS_DIR,
    CRASH_DIR, META_FILE, SEEDS_FILE,
};
pub use report::{report, ReportRow};
pub use stats::{CampaignStats, StatsRow};

use crate::channel::{Endpoint, DEFAULT_CAPACITY};
use crate::corpus::CorpusError;
use crate::executor::{ExternalCommand, ProviderError, BUILTIN_TARGETS, DEFAULT_TIMEOUT_MS};
use crate::hexcodec::DEFAULT_MAX_HEX_LEN;

/// Deterministic stages are skipped for payloads longer than this.
pub const DET_MAX_LEN: usize = 4096;
pub const DEFAULT_STATS_INTERVAL: f64 = 5.0;
/// Virtual seconds advance by one per this many executions.
pub const DEFAULT_VIRTUAL_RATE: u64 = 1000;
pub const DEFAULT_DET_CHUNK: usize = 256;
pub const DEFAULT_HAVOC_ROUNDS: usize = 32;
pub const DEFAULT_SPLICE_PERCENT: u32 = 10;
/// Format label used for external targets when none is configured.
pub const DEFAULT_FORMAT_TAG: &str = "BIN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    Builtin(String),
    /// Whitespace-separated command line; `@@` is replaced by the input path.
    Command(Vec<String>),
}

impl TargetSpec {
    /// Short name: the bundled target's name or the command's file name.
    pub fn name(&self) -> String {
        match self {
            TargetSpec::Builtin(n) => n.clone(),
            TargetSpec::Command(argv) => std::path::Path::new(&argv[0])
                .file_name()
                .map_or_else(|| argv[0].clone(), |f| f.to_string_lossy().into_owned()),
        }
    }
}

impl FromStr for TargetSpec {
    type Err = EngineError;

    /// A bundled target name, or `cmd:<command line>`.
    fn from_str(s: &str) -> Result<Self, EngineError> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(EngineError::Config("empty target command".into()));
            }
            return Ok(TargetSpec::Command(argv));
        }
        if BUILTIN_TARGETS.contains(&s) {
            return Ok(TargetSpec::Builtin(s.to_string()));
        }
        Err(EngineError::Config(format!(
            "unknown target {s:?} (bundled: {}; external: cmd:<command>)",
            BUILTIN_TARGETS.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Schedule events.
    Iterations(u64),
    Executions(u64),
    Duration(Duration),
}

/// Source of campaign-relative time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    Wall,
    /// Elapsed seconds are `execs / execs_per_sec`; makes runs replayable.
    Virtual {
        execs_per_sec: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmMode {
    Off,
    Socket(Endpoint),
    /// The reference mutator in-process; answers become visible after
    /// `latency` polls.
    Stub {
        latency: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub target: TargetSpec,
    pub corpus_dir: PathBuf,
    /// Where the corpus, crashes and statistics are written. `None` keeps
    /// everything in memory.
    pub out_dir: Option<PathBuf>,
    pub budget: Budget,
    /// `None` picks a virtual clock for count budgets, wall time otherwise.
    pub clock: Option<Clock>,
    pub rng_seed: u64,
    pub llm: LlmMode,
    pub queue_cap: usize,
    pub max_hex_len: usize,
    pub timeout_ms: u64,
    /// Defaults to the target's own label.
    pub format_tag: Option<String>,
    pub stats_interval: f64,
    pub det_chunk: usize,
    pub havoc_rounds: usize,
    pub splice_percent: u32,
}

impl CampaignConfig {
    pub fn new(target: TargetSpec, corpus_dir: impl Into<PathBuf>, budget: Budget) -> Self {
        Self {
            target,
            corpus_dir: corpus_dir.into(),
            out_dir: None,
            budget,
            clock: None,
            rng_seed: 0,
            llm: LlmMode::Off,
            queue_cap: DEFAULT_CAPACITY,
            max_hex_len: DEFAULT_MAX_HEX_LEN,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            format_tag: None,
            stats_interval: DEFAULT_STATS_INTERVAL,
            det_chunk: DEFAULT_DET_CHUNK,
            havoc_rounds: DEFAULT_HAVOC_ROUNDS,
            splice_percent: DEFAULT_SPLICE_PERCENT,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.queue_cap == 0 {
            return bad("queue capacity must be at least 1");
        }
        if self.max_hex_len == 0 {
            return bad("max hex length must be positive");
        }
        if self.timeout_ms == 0 {
            return bad("timeout must be positive");
        }
        if !(self.stats_interval > 0.0) {
            return bad("stats interval must be positive");
        }
        if self.havoc_rounds == 0 || self.det_chunk == 0 {
            return bad("havoc rounds and deterministic chunk must be positive");
        }
        if self.splice_percent > 100 {
            return bad("splice percent must be at most 100");
        }
        if let Clock::Virtual { execs_per_sec: 0 } = self.clock() {
            return bad("virtual clock rate must be positive");
        }
        match self.budget {
            Budget::Iterations(0) | Budget::Executions(0) => return bad("budget must be positive"),
            Budget::Duration(d) if d.is_zero() => return bad("budget must be positive"),
            _ => {}
        }
        if let Some(tag) = &self.format_tag {
            if !crate::channel::wire::is_valid_tag(tag) {
                return bad("format tag must match [A-Z0-9_]{1,16}");
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> Clock {
        self.clock.unwrap_or(match self.budget {
            Budget::Duration(_) => Clock::Wall,
            _ => Clock::Virtual {
                execs_per_sec: DEFAULT_VIRTUAL_RATE,
            },
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("target: {0}")]
    Provider(#[from] ProviderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

impl EngineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Config(_) | EngineError::Corpus(_) => 2,
            EngineError::Provider(_) => 3,
            EngineError::Io { .. } | EngineError::Artifact { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> EngineError {
        let path = path.into();
        move |source| EngineError::Io { path, source }
    }
}

pub(crate) fn build_provider(target: &TargetSpec) -> Result<crate::executor::CoverageProvider, EngineError> {
    use crate::executor::CoverageProvider;
    Ok(match target {
        TargetSpec::Builtin(name) => CoverageProvider::builtin(name).map_err(|e| EngineError::Config(e.to_string()))?,
        TargetSpec::Command(argv) => CoverageProvider::ExternalCommand(
            ExternalCommand::new(argv.clone()).map_err(|e| EngineError::Config(e.to_string()))?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_spec_parsing() {
        assert_eq!(
            "chunkfmt".parse::<TargetSpec>().unwrap(),
            TargetSpec::Builtin("chunkfmt".into())
        );
        assert_eq!(
            "cmd:./t @@".parse::<TargetSpec>().unwrap(),
            TargetSpec::Command(vec!["./t".into(), "@@".into()])
        );
        assert!("chunkfm".parse::<TargetSpec>().is_err());
        assert!("cmd:  ".parse::<TargetSpec>().is_err());
    }

    #[test]
    fn validation() {
        let base = CampaignConfig::new(TargetSpec::Builtin("chunkfmt".into()), "x", Budget::Iterations(1));
        assert!(base.validate().is_ok());
        let mut c = base.clone();
        c.queue_cap = 0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = base.clone();
        c.format_tag = Some("png".into());
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.budget = Budget::Executions(0);
        assert!(c.validate().is_err());
        assert_eq!(
            base.clock(),
            Clock::Virtual {
                execs_per_sec: DEFAULT_VIRTUAL_RATE
            }
        );
        let mut c = base;
        c.budget = Budget::Duration(Duration::from_secs(1));
        assert_eq!(c.clock(), Clock::Wall);
    }
}

//! Running a target on one input and collecting its edge trace.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use crate::coverage::EdgeTrace;

pub mod chunkfmt;
pub mod external;
pub mod jsonish;

pub use external::ExternalCommand;

/// Default per-execution timeout.
pub const DEFAULT_TIMEOUT_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecStatus {
    Ok,
    Crash { reason: String },
    Timeout,
}

impl ExecStatus {
    pub fn is_crash(&self) -> bool {
        matches!(self, ExecStatus::Crash { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub trace: EdgeTrace,
    pub wall_time_us: u64,
}

/// A seeded-bug condition signalled by an in-process target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crash {
    pub reason: String,
}

impl Crash {
    pub fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

/// A deterministic target that runs inside the fuzzer process.
pub trait Target: Send + Sync {
    fn name(&self) -> &'static str;

    /// Format label used for the mutation channel and prompts.
    fn format_tag(&self) -> &'static str;

    /// Parse `input`, recording every structural branch taken.
    fn run(&self, input: &[u8], trace: &mut EdgeTrace) -> Result<(), Crash>;
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("unknown in-process target {0:?}")]
    UnknownTarget(String),
    #[error("target command is empty")]
    EmptyCommand,
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("failed to start {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("coverage dump {path}: {reason}")]
    Dump { path: String, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Where traces come from.
#[derive(Clone)]
pub enum CoverageProvider {
    InProcess(Arc<dyn Target>),
    ExternalCommand(ExternalCommand),
}

impl fmt::Debug for CoverageProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverageProvider::InProcess(t) => write!(f, "InProcess({})", t.name()),
            CoverageProvider::ExternalCommand(c) => write!(f, "ExternalCommand({:?})", c.argv),
        }
    }
}

impl CoverageProvider {
    /// Look up one of the bundled in-process targets.
    pub fn builtin(name: &str) -> Result<Self, ProviderError> {
        builtin_target(name)
            .map(CoverageProvider::InProcess)
            .ok_or_else(|| ProviderError::UnknownTarget(name.to_string()))
    }

    pub fn execute(&self, payload: &[u8], timeout_ms: u64) -> Result<ExecOutcome, ProviderError> {
        if timeout_ms == 0 {
            return Err(ProviderError::ZeroTimeout);
        }
        match self {
            CoverageProvider::InProcess(target) => Ok(run_in_process(target.as_ref(), payload)),
            CoverageProvider::ExternalCommand(cmd) => cmd.execute(payload, timeout_ms),
        }
    }

    /// Format label of the in-process target, if any.
    pub fn format_tag(&self) -> Option<&'static str> {
        match self {
            CoverageProvider::InProcess(t) => Some(t.format_tag()),
            CoverageProvider::ExternalCommand(_) => None,
        }
    }
}

// In-process targets are trusted to terminate, so no timeout is enforced.
pub fn run_in_process(target: &dyn Target, payload: &[u8]) -> ExecOutcome {
    let start = Instant::now();
    let mut trace = EdgeTrace::new();
    let status = match target.run(payload, &mut trace) {
        Ok(()) => ExecStatus::Ok,
        Err(c) => ExecStatus::Crash { reason: c.reason },
    };
    ExecOutcome {
        status,
        trace,
        wall_time_us: start.elapsed().as_micros() as u64,
    }
}

pub fn builtin_target(name: &str) -> Option<Arc<dyn Target>> {
    match name {
        "chunkfmt" => Some(Arc::new(chunkfmt::ChunkFmt)),
        "jsonish" => Some(Arc::new(jsonish::Jsonish)),
        _ => None,
    }
}

pub const BUILTIN_TARGETS: [&str; 2] = ["chunkfmt", "jsonish"];

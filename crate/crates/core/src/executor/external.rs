//! Spawn-per-exec external targets.
//!
//! The payload is written to a temporary file. Each `@@` argument is replaced
//! by its path; without one the payload is piped on stdin. The target writes
//! its coverage to the file named by `SF_COV_FILE`, one `<edge_id> <count>`
//! line per edge in ascending edge order.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::coverage::EdgeTrace;
use crate::executor::{ExecOutcome, ExecStatus, ProviderError};

pub const COV_ENV: &str = "SF_COV_FILE";
pub const INPUT_PLACEHOLDER: &str = "@@";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub argv: Vec<String>,
}

impl ExternalCommand {
    pub fn new(argv: Vec<String>) -> Result<Self, ProviderError> {
        if argv.is_empty() || argv[0].is_empty() {
            return Err(ProviderError::EmptyCommand);
        }
        Ok(Self { argv })
    }

    /// Split a command line on whitespace.
    pub fn parse(line: &str) -> Result<Self, ProviderError> {
        Self::new(line.split_whitespace().map(str::to_string).collect())
    }

    fn uses_file(&self) -> bool {
        self.argv[1..].iter().any(|a| a.contains(INPUT_PLACEHOLDER))
    }

    pub fn execute(&self, payload: &[u8], timeout_ms: u64) -> Result<ExecOutcome, ProviderError> {
        if timeout_ms == 0 {
            return Err(ProviderError::ZeroTimeout);
        }
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("input");
        let cov = dir.path().join("coverage");
        fs::write(&input, payload)?;
        let input_str = input.to_string_lossy();

        let by_file = self.uses_file();
        let mut cmd = Command::new(&self.argv[0]);
        for arg in &self.argv[1..] {
            cmd.arg(arg.replace(INPUT_PLACEHOLDER, &input_str));
        }
        cmd.env(COV_ENV, &cov)
            .stdin(if by_file { Stdio::null() } else { Stdio::piped() })
            .stdout(Stdio::null())
            .stderr(Stdio::null());

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|source| ProviderError::Spawn {
            program: self.argv[0].clone(),
            source,
        })?;
        if let Some(mut stdin) = child.stdin.take() {
            // A target that exits without reading closes the pipe early.
            match stdin.write_all(payload) {
                Err(e) if e.kind() != ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }

        let deadline = Duration::from_millis(timeout_ms);
        let mut pause = Duration::from_micros(100);
        let exit = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if start.elapsed() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            thread::sleep(pause);
            pause = (pause * 2).min(Duration::from_millis(10));
        };
        let wall_time_us = start.elapsed().as_micros() as u64;

        let (status, trace) = match exit {
            None => (ExecStatus::Timeout, read_dump_lenient(&cov)),
            Some(s) if s.success() => (ExecStatus::Ok, read_dump(&cov)?),
            Some(s) => {
                let reason = crash_reason(s);
                (ExecStatus::Crash { reason }, read_dump_lenient(&cov))
            }
        };
        Ok(ExecOutcome {
            status,
            trace,
            wall_time_us,
        })
    }
}

fn crash_reason(status: ExitStatus) -> String {
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return format!("signal {sig}");
        }
    }
    match status.code() {
        Some(code) => format!("exit {code}"),
        None => "abnormal exit".to_string(),
    }
}

// Timeouts and crashes may leave a partial or missing dump.
fn read_dump_lenient(path: &Path) -> EdgeTrace {
    read_dump(path).unwrap_or_default()
}

/// Read a coverage dump written by an external target.
pub fn read_dump(path: &Path) -> Result<EdgeTrace, ProviderError> {
    let text = fs::read_to_string(path).map_err(|e| ProviderError::Dump {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_dump(&text).map_err(|reason| ProviderError::Dump {
        path: path.display().to_string(),
        reason,
    })
}

pub fn parse_dump(text: &str) -> Result<EdgeTrace, String> {
    let mut trace = EdgeTrace::new();
    let mut last = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split(' ');
        let (Some(edge), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(format!("line {line_no}: expected `<edge> <count>`"));
        };
        let edge: u32 = edge
            .parse()
            .map_err(|_| format!("line {line_no}: bad edge id {edge:?}"))?;
        let count: u32 = count
            .parse()
            .map_err(|_| format!("line {line_no}: bad count {count:?}"))?;
        if last.is_some_and(|prev| prev >= edge) {
            return Err(format!("line {line_no}: edge ids not ascending"));
        }
        last = Some(edge);
        if count > 0 {
            trace.add(edge, count);
        }
    }
    Ok(trace)
}

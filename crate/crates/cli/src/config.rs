//! Flat `key=value` configuration files.
//!
//! Keys are the long flag names without the leading dashes. Blank lines and
//! lines starting with `#` are ignored. List-valued keys (`archive`,
//! `exclude`) take comma-separated values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::ArgMatches;

use crate::CliError;

pub const KEYS: [&str; 18] = [
    "target",
    "corpus",
    "out",
    "duration",
    "iters",
    "execs",
    "rng-seed",
    "llm",
    "endpoint",
    "queue-cap",
    "max-hex-len",
    "timeout-ms",
    "format",
    "archive",
    "noise-ratio",
    "exclude",
    "out-dir",
    "csv",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected key=value", i + 1));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(format!("line {}: unknown key {key:?}", i + 1));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key {key:?}", i + 1));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Command-line values layered over a config file: a flag given on the
/// command line wins, then the file, then the flag's default.
pub struct Layered<'a> {
    pub matches: &'a ArgMatches,
    pub file: &'a ConfigFile,
}

impl Layered<'_> {
    pub fn on_command_line(&self, id: &str) -> bool {
        self.matches.value_source(id) == Some(ValueSource::CommandLine)
    }

    fn file_value(&self, id: &str) -> Option<&str> {
        if self.on_command_line(id) {
            return None;
        }
        self.file.get(&id.replace('_', "-"))
    }

    pub fn value<T>(&self, id: &str, slot: &mut T) -> Result<(), CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(raw) = self.file_value(id) {
            *slot = parse(id, raw)?;
        }
        Ok(())
    }

    pub fn optional<T>(&self, id: &str, slot: &mut Option<T>) -> Result<(), CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(raw) = self.file_value(id) {
            *slot = Some(parse(id, raw)?);
        }
        Ok(())
    }

    pub fn list(&self, id: &str, slot: &mut Vec<String>) {
        if let Some(raw) = self.file_value(id) {
            *slot = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
        }
    }
}

fn parse<T>(id: &str, raw: &str) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| CliError::config(format!("config key {}: {e}", id.replace('_', "-"))))
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use structfuzz::channel::DEFAULT_CAPACITY;
use structfuzz::dataset::{self, BuildOptions, DatasetError, RunArchive, DEFAULT_NOISE_RATIO};
use structfuzz::engine::{self, Budget, CampaignConfig, EngineError, LlmMode, TargetSpec};
use structfuzz::executor::DEFAULT_TIMEOUT_MS;
use structfuzz::hexcodec::DEFAULT_MAX_HEX_LEN;

mod config;

use config::{ConfigFile, Layered};

const DEFAULT_ENDPOINT: &str = "127.0.0.1:7700";
const DATASET_FILE: &str = "dataset.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "structfuzz",
    version,
    about = "Coverage-guided fuzzer with a structured mutation channel"
)]
struct Cli {
    /// key=value file supplying defaults for any flag below [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a fuzzing campaign
    Fuzz(FuzzArgs),
    /// Fine-tuning data from campaign archives
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Reports over a campaign output directory
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Extract parent/child pairs and write them as JSONL
    Build(BuildArgs),
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Coverage growth split by seed provenance
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl std::str::FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Switch as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
struct FuzzArgs {
    /// Bundled target (chunkfmt, jsonish) or cmd:<command line> [required]
    #[arg(long)]
    target: Option<String>,
    /// Directory of initial seeds [required]
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Output directory for corpus, crashes and stats [default: none, kept in memory]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Wall-clock budget in seconds; exactly one budget is required
    #[arg(long, value_name = "SECS", group = "budget")]
    duration: Option<f64>,
    /// Budget in schedule events
    #[arg(long, value_name = "N", group = "budget")]
    iters: Option<u64>,
    /// Budget in target executions
    #[arg(long, value_name = "N", group = "budget")]
    execs: Option<u64>,
    /// Seed for every random choice of the campaign
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Structured mutation channel
    #[arg(long, value_enum, default_value = "off")]
    llm: Switch,
    /// Mutator address: host:port, unix:<path>, or stub[:<latency polls>]
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Pending mutation requests kept; the oldest is dropped first
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    queue_cap: usize,
    /// Longest hex request sent to the mutator
    #[arg(long, default_value_t = DEFAULT_MAX_HEX_LEN)]
    max_hex_len: usize,
    /// Per-execution timeout
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    timeout_ms: u64,
    /// Format tag sent with requests [default: the target's own, BIN for commands]
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Campaign output directory (repeatable) [required]
    #[arg(long, value_name = "DIR")]
    archive: Vec<PathBuf>,
    /// Output directory; pairs go to dataset.jsonl inside it [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Noise pairs per real pair, at most 0.5
    #[arg(long, default_value_t = DEFAULT_NOISE_RATIO)]
    noise_ratio: f64,
    /// Longest parent plus child hex in one pair
    #[arg(long, default_value_t = DEFAULT_MAX_HEX_LEN)]
    max_hex_len: usize,
    /// Skip archives with this target name or format tag (repeatable)
    #[arg(long, value_name = "NAME")]
    exclude: Vec<String>,
    /// Seed for noise pair generation
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    /// Campaign output directory [required]
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Write the rows as CSV to this file instead of printing a table [default: none]
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let code = match &e {
            DatasetError::NoiseRatio(_) | DatasetError::MaxHexLen | DatasetError::Corpus(_) => 2,
            DatasetError::Engine(inner) => inner.exit_code() as u8,
            DatasetError::Provider(_) => 3,
            DatasetError::Io { .. } | DatasetError::Record { .. } => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("structfuzz: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Fuzz(args) => {
            let m = matches.subcommand_matches("fuzz").expect("fuzz matches");
            fuzz(
                args,
                &Layered {
                    matches: m,
                    file: &file,
                },
            )
        }
        Command::Dataset(DatasetCommand::Build(args)) => {
            let m = matches
                .subcommand_matches("dataset")
                .and_then(|m| m.subcommand_matches("build"))
                .expect("dataset build matches");
            build(
                args,
                &Layered {
                    matches: m,
                    file: &file,
                },
            )
        }
        Command::Report(ReportCommand::Coverage(args)) => {
            let m = matches
                .subcommand_matches("report")
                .and_then(|m| m.subcommand_matches("coverage"))
                .expect("report coverage matches");
            coverage(
                args,
                &Layered {
                    matches: m,
                    file: &file,
                },
            )
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::config(format!("--{flag} is required (flag or config key)")))
}

fn llm_mode(llm: Switch, endpoint: &str) -> Result<LlmMode, CliError> {
    if llm == Switch::Off {
        return Ok(LlmMode::Off);
    }
    if endpoint == "stub" {
        return Ok(LlmMode::Stub { latency: 0 });
    }
    if let Some(latency) = endpoint.strip_prefix("stub:") {
        let latency = latency
            .parse()
            .map_err(|_| CliError::config(format!("bad stub latency in {endpoint:?}")))?;
        return Ok(LlmMode::Stub { latency });
    }
    endpoint.parse().map(LlmMode::Socket).map_err(CliError::config)
}

fn budget(a: &FuzzArgs, l: &Layered) -> Result<Budget, CliError> {
    let (mut duration, mut iters, mut execs) = (a.duration, a.iters, a.execs);
    if !["duration", "iters", "execs"].iter().any(|id| l.on_command_line(id)) {
        l.optional("duration", &mut duration)?;
        l.optional("iters", &mut iters)?;
        l.optional("execs", &mut execs)?;
    }
    match (duration, iters, execs) {
        (Some(d), None, None) => Duration::try_from_secs_f64(d)
            .map(Budget::Duration)
            .map_err(|_| CliError::config(format!("bad duration {d}"))),
        (None, Some(n), None) => Ok(Budget::Iterations(n)),
        (None, None, Some(n)) => Ok(Budget::Executions(n)),
        (None, None, None) => Err(CliError::config("one of --duration, --iters or --execs is required")),
        _ => Err(CliError::config("give only one of duration, iters and execs")),
    }
}

fn fuzz(mut a: FuzzArgs, l: &Layered) -> Result<(), CliError> {
    l.optional("target", &mut a.target)?;
    l.optional("corpus", &mut a.corpus)?;
    l.optional("out", &mut a.out)?;
    l.value("rng_seed", &mut a.rng_seed)?;
    l.value("llm", &mut a.llm)?;
    l.value("endpoint", &mut a.endpoint)?;
    l.value("queue_cap", &mut a.queue_cap)?;
    l.value("max_hex_len", &mut a.max_hex_len)?;
    l.value("timeout_ms", &mut a.timeout_ms)?;
    l.optional("format", &mut a.format)?;

    let target: TargetSpec = required(a.target.as_deref(), "target")?.parse()?;
    let mut config = CampaignConfig::new(target, required(a.corpus.clone(), "corpus")?, budget(&a, l)?);
    config.out_dir = a.out;
    config.rng_seed = a.rng_seed;
    config.llm = llm_mode(a.llm, &a.endpoint)?;
    config.queue_cap = a.queue_cap;
    config.max_hex_len = a.max_hex_len;
    config.timeout_ms = a.timeout_ms;
    config.format_tag = a.format;
    log::debug!("{config:?}");

    let s = engine::run(&config)?;
    println!(
        "edges={} execs={} crashes={} llm_direct={} llm_descendant={} corpus={} iterations={}",
        s.stats.edges_seen,
        s.stats.execs,
        s.stats.crashes,
        s.stats.admitted_llm_direct,
        s.stats.admitted_llm_descendant,
        s.corpus.len(),
        s.stats.iterations,
    );
    Ok(())
}

fn build(mut a: BuildArgs, l: &Layered) -> Result<(), CliError> {
    let mut archives: Vec<String> = a.archive.iter().map(|p| p.display().to_string()).collect();
    l.list("archive", &mut archives);
    l.optional("out", &mut a.out)?;
    l.value("noise_ratio", &mut a.noise_ratio)?;
    l.value("max_hex_len", &mut a.max_hex_len)?;
    l.list("exclude", &mut a.exclude);
    l.value("rng_seed", &mut a.rng_seed)?;
    if archives.is_empty() {
        return Err(CliError::config("--archive is required (flag or config key)"));
    }
    let out = required(a.out, "out")?;

    let loaded = archives
        .iter()
        .map(|d| RunArchive::load(Path::new(d)))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BuildOptions {
        max_hex_len: a.max_hex_len,
        noise_ratio: a.noise_ratio,
        rng_seed: a.rng_seed,
        exclude: a.exclude,
    };
    let report = dataset::build_pairs(&loaded, &opts)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let path = out.join(DATASET_FILE);
    dataset::export(&report.pairs, &path)?;
    println!(
        "pairs={} real={} noise={} skipped_gate={} skipped_unresolved={} excluded_archives={} file={}",
        report.pairs.len(),
        report.real,
        report.noise,
        report.skipped_gate,
        report.skipped_unresolved,
        report.excluded_archives,
        path.display(),
    );
    Ok(())
}

fn coverage(mut a: CoverageArgs, l: &Layered) -> Result<(), CliError> {
    l.optional("out_dir", &mut a.out_dir)?;
    l.optional("csv", &mut a.csv)?;
    let rows = engine::report(&required(a.out_dir, "out-dir")?)?;
    match a.csv {
        Some(path) => {
            std::fs::write(&path, engine::report::to_csv(&rows)).map_err(|e| CliError::io(&path, e))?;
            println!("rows={} file={}", rows.len(), path.display());
        }
        None => {
            println!(
                "{:>10} {:>10} {:>10} {:>14} {:>10}",
                "elapsed_s", "edges", "llm_direct", "llm_descendant", "other"
            );
            for r in rows {
                println!(
                    "{:>10.1} {:>10} {:>10} {:>14} {:>10}",
                    r.elapsed_s, r.edges_seen, r.admitted_llm_direct, r.admitted_llm_descendant, r.admitted_other
                );
            }
        }
    }
    Ok(())
}

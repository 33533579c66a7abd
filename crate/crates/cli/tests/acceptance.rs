//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always printed.
//! Exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structfuzz::channel::{BoundedQueue, InProcessTransport, LlmChannel, Offer};
use structfuzz::corpus::{Corpus, Lineage, Origin, Seed, SeedRecord};
use structfuzz::coverage::{bucketize, CoverageMap, EdgeId, EdgeTrace, NoveltyVerdict};
use structfuzz::dataset::{self, BuildOptions, RunArchive};
use structfuzz::engine::{self, Budget, CampaignConfig, CampaignSummary, LlmMode, TargetSpec};
use structfuzz::executor::{chunkfmt, CoverageProvider, DEFAULT_TIMEOUT_MS};
use structfuzz::hexcodec::{self, DEFAULT_MAX_HEX_LEN};
use structfuzz::parallel::Mode;
use structfuzz::sweep;

// ===== tolerances =====

const P1_STRINGS: usize = 10_000;
const P1_MAX_LEN: usize = 2048;
const P1_TIME_LIMIT: Duration = Duration::from_secs(5);
const P2_OFFERS: u64 = 1000;
const P2_CAPACITY: usize = 30;
const P3_ITERS: u64 = 10_000;
const P3_REPEATS: usize = 7;
const P3_MAX_SLOWDOWN: f64 = 0.10;
const P3_DEAD_ENDPOINT: &str = "127.0.0.1:1";
const P4_TRACES: usize = 1000;
const P4_UNIVERSE: u32 = 256;
const P5_ITERS: u64 = 2000;
const P6_ITERS: u64 = 10_000;
const P7_SEEDS: u64 = 10_000;
const P7_INITIAL: u64 = 16;
const P7_LLM_PERCENT: u32 = 5;
const P8_EXECS: u64 = 200_000;
const P8_RUNS: u64 = 5;
const P8_STUB_LATENCY: u32 = 8;
const P8_MIN_STUB_SUCCESSES: usize = 4;
const P8_MAX_HAVOC_B1: usize = 1;
const P8_MIN_EDGE_GAIN: f64 = 1.10;
const P8_MAX_RUN_TIME: Duration = Duration::from_secs(60);
const RANDOM_HIT_CEILING: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("P1", "hex round trip", p1_hex_round_trip),
        ("P2", "bounded queue recency", p2_queue_recency),
        ("P3", "non-blocking channel", p3_non_blocking),
        ("P4", "coverage oracle", p4_coverage_oracle),
        ("P5", "deterministic replay", p5_replay),
        ("P6", "dataset auditor", p6_dataset_audit),
        ("P7", "lineage correctness", p7_lineage),
        ("P8", "structure-aware advantage", p8_advantage),
        ("P9", "provenance report", p9_provenance),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} {name} ... PASS ({detail}) [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("{id} {name} ... FAIL ({detail}) [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ===== helpers =====

fn seed_dir(payloads: &[Vec<u8>]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (i, p) in payloads.iter().enumerate() {
        fs::write(dir.path().join(format!("seed{i}")), p).unwrap();
    }
    dir
}

fn chunkfmt_config(seeds: &Path, budget: Budget, rng_seed: u64, llm: LlmMode) -> CampaignConfig {
    let mut c = CampaignConfig::new(TargetSpec::Builtin("chunkfmt".into()), seeds, budget);
    c.rng_seed = rng_seed;
    c.llm = llm;
    c
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn found(s: &CampaignSummary, reason: &str) -> bool {
    s.stats.crash_reasons.contains(reason)
}

// ===== criteria =====

fn p1_hex_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs: Vec<Vec<u8>> = (0..P1_STRINGS)
        .map(|_| {
            let mut v = vec![0u8; rng.gen_range(0..=P1_MAX_LEN)];
            rng.fill(&mut v[..]);
            v
        })
        .collect();
    let start = Instant::now();
    for (i, x) in inputs.iter().enumerate() {
        let hex = hexcodec::encode(x);
        ensure!(
            hexcodec::decode(&hex).as_ref() == Ok(x),
            "string {i}: decode(encode(x)) != x"
        );
        ensure!(
            hexcodec::sanitize_response(&hex).as_deref() == Some(hex.as_str()),
            "string {i}: sanitize(encode(x)) != encode(x)"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < P1_TIME_LIMIT, "took {elapsed:?}, limit {P1_TIME_LIMIT:?}");
    Ok(format!("{P1_STRINGS} strings in {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn p2_queue_recency() -> Outcome {
    let mut q = BoundedQueue::new(P2_CAPACITY);
    for i in 1..=P2_OFFERS {
        q.offer(i);
    }
    let held: Vec<u64> = q.iter().copied().collect();
    let want: Vec<u64> = (P2_OFFERS - P2_CAPACITY as u64 + 1..=P2_OFFERS).collect();
    ensure!(held == want, "queue holds {held:?}");

    let mut channel = LlmChannel::new(Box::new(InProcessTransport::stub(0)), P2_CAPACITY, DEFAULT_MAX_HEX_LEN);
    for i in 1..=P2_OFFERS {
        let o = channel.offer(i, "CHUNKFMT", &i.to_be_bytes(), 0.0);
        ensure!(matches!(o, Offer::Queued | Offer::Evicted(_)), "offer {i}: {o:?}");
    }
    let held: Vec<u64> = channel.queue().iter().map(|r| r.seed_id).collect();
    ensure!(held == want, "channel queue holds {held:?}");
    ensure!(channel.stats().sent == 0, "requests were sent");
    Ok(format!("offers {}..={P2_OFFERS} retained in order", want[0]))
}

fn p3_non_blocking() -> Outcome {
    let seeds = seed_dir(&[chunkfmt::sample_seed()]);
    let off = chunkfmt_config(seeds.path(), Budget::Iterations(P3_ITERS), 1, LlmMode::Off);
    let on = chunkfmt_config(
        seeds.path(),
        Budget::Iterations(P3_ITERS),
        1,
        LlmMode::Socket(P3_DEAD_ENDPOINT.parse().unwrap()),
    );
    let (mut rate_off, mut rate_on) = (Vec::new(), Vec::new());
    for i in 0..P3_REPEATS {
        for llm_on in [i % 2 == 0, i % 2 == 1] {
            let s = engine::run(if llm_on { &on } else { &off }).map_err(|e| e.to_string())?;
            ensure!(
                s.stats.iterations == P3_ITERS,
                "stopped after {} iterations",
                s.stats.iterations
            );
            if llm_on {
                ensure!(s.stats.admitted_llm() == 0, "llm seeds admitted from a dead endpoint");
                rate_on.push(s.iterations_per_sec());
            } else {
                rate_off.push(s.iterations_per_sec());
            }
        }
    }
    let (m_off, m_on) = (median(rate_off), median(rate_on));
    let ratio = m_on / m_off;
    ensure!(
        ratio >= 1.0 - P3_MAX_SLOWDOWN,
        "throughput ratio {ratio:.3} (on {m_on:.0}/s, off {m_off:.0}/s)"
    );

    let out = tempfile::tempdir().unwrap();
    let cli = Command::new(env!("CARGO_BIN_EXE_structfuzz"))
        .args(["fuzz", "--target", "chunkfmt", "--corpus"])
        .arg(seeds.path())
        .arg("--out")
        .arg(out.path().join("run"))
        .args(["--iters", &P3_ITERS.to_string(), "--rng-seed", "1", "--llm", "on"])
        .args(["--endpoint", P3_DEAD_ENDPOINT])
        .output()
        .map_err(|e| e.to_string())?;
    let summary = String::from_utf8_lossy(&cli.stdout);
    ensure!(cli.status.code() == Some(0), "cli exited with {:?}", cli.status);
    ensure!(summary.contains("llm_direct=0 llm_descendant=0"), "summary: {summary}");
    Ok(format!(
        "median iterations/s on {m_on:.0} vs off {m_off:.0} (ratio {ratio:.3}), cli exit 0"
    ))
}

fn random_trace(rng: &mut ChaCha8Rng) -> EdgeTrace {
    let mut t = EdgeTrace::new();
    for _ in 0..rng.gen_range(0..48) {
        let count = (1u32 << rng.gen_range(0..9)) + rng.gen_range(0..4);
        t.add(rng.gen_range(0..P4_UNIVERSE), count);
    }
    t
}

fn p4_coverage_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let traces: Vec<EdgeTrace> = (0..P4_TRACES).map(|_| random_trace(&mut rng)).collect();
    let mut map = CoverageMap::new();
    let incremental: Vec<NoveltyVerdict> = traces.iter().map(|t| map.observe(t)).collect();
    let mut interesting = 0;
    for (i, t) in traces.iter().enumerate() {
        let mut edges = BTreeSet::new();
        let mut pairs = BTreeSet::new();
        for prev in &traces[..i] {
            for (e, c) in prev.iter() {
                edges.insert(e);
                pairs.insert((e, bucketize(c)));
            }
        }
        let here: Vec<(EdgeId, u8)> = t.iter().map(|(e, c)| (e, bucketize(c))).collect();
        let new_edges = here.iter().filter(|(e, _)| !edges.contains(e)).count() as u32;
        let new_buckets = here
            .iter()
            .filter(|(e, b)| edges.contains(e) && !pairs.contains(&(*e, *b)))
            .count() as u32;
        let want = NoveltyVerdict::new(new_edges, new_buckets);
        ensure!(
            incremental[i] == want,
            "trace {i}: observe {:?}, brute force {want:?}",
            incremental[i]
        );
        interesting += usize::from(want.is_interesting);
    }
    ensure!(
        dataset::replay_verdicts(&traces) == incremental,
        "set-based replay disagrees with observe"
    );
    Ok(format!(
        "{P4_TRACES} traces, {interesting} interesting, {} edges",
        map.edges_seen()
    ))
}

fn p5_replay() -> Outcome {
    let seeds = seed_dir(&[chunkfmt::sample_seed()]);
    let root = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let mut c = chunkfmt_config(seeds.path(), Budget::Iterations(P5_ITERS), 5, LlmMode::Off);
        c.out_dir = Some(root.path().join(name));
        engine::run(&c).map_err(|e| e.to_string())?;
        outs.push(root.path().join(name));
    }
    let stats: Vec<Vec<u8>> = outs.iter().map(|o| fs::read(o.join("stats.csv")).unwrap()).collect();
    ensure!(stats[0] == stats[1], "stats.csv differs");
    let corpora: Vec<_> = outs.iter().map(|o| dir_snapshot(&o.join(engine::CORPUS_DIR))).collect();
    ensure!(corpora[0] == corpora[1], "corpus directories differ");
    let crashes: Vec<_> = outs.iter().map(|o| dir_snapshot(&o.join(engine::CRASH_DIR))).collect();
    ensure!(crashes[0] == crashes[1], "crash directories differ");
    Ok(format!(
        "{} corpus files, {} stats bytes identical",
        corpora[0].len(),
        stats[0].len()
    ))
}

fn p6_dataset_audit() -> Outcome {
    let seeds = seed_dir(&[chunkfmt::sample_seed()]);
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("run");
    let mut c = chunkfmt_config(
        seeds.path(),
        Budget::Iterations(P6_ITERS),
        6,
        LlmMode::Stub {
            latency: P8_STUB_LATENCY,
        },
    );
    c.out_dir = Some(out.clone());
    engine::run(&c).map_err(|e| e.to_string())?;

    let archive = RunArchive::load(&out).map_err(|e| e.to_string())?;
    let report =
        dataset::build_pairs(std::slice::from_ref(&archive), &BuildOptions::default()).map_err(|e| e.to_string())?;
    let file = root.path().join("dataset.jsonl");
    dataset::export(&report.pairs, &file).map_err(|e| e.to_string())?;
    let pairs = dataset::import(&file).map_err(|e| e.to_string())?;
    ensure!(pairs == report.pairs, "export/import changed the pairs");
    ensure!(report.real > 0, "no real pairs extracted");

    let provider = CoverageProvider::builtin("chunkfmt").unwrap();
    let audit = dataset::audit(
        &archive,
        &pairs,
        &provider,
        DEFAULT_TIMEOUT_MS,
        DEFAULT_MAX_HEX_LEN,
        Mode::Parallel,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        audit.passed(),
        "{} failures, first: {}",
        audit.failures.len(),
        audit.failures[0]
    );
    ensure!(
        audit.pairs_checked == report.real,
        "checked {} of {} real pairs",
        audit.pairs_checked,
        report.real
    );
    for (i, p) in pairs.iter().enumerate() {
        ensure!(
            p.original_hex.len() + p.mutated_hex.len() <= DEFAULT_MAX_HEX_LEN,
            "pair {i} over the hex gate"
        );
    }
    Ok(format!(
        "{} seeds replayed, {} real + {} noise pairs, {} gated",
        audit.seeds_replayed, report.real, report.noise, report.skipped_gate
    ))
}

fn p7_lineage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut corpus = Corpus::new();
    let interesting = NoveltyVerdict::new(1, 0);
    for id in 0..P7_SEEDS {
        let seed = if id < P7_INITIAL {
            Seed::new(id, vec![id as u8], Origin::Initial, None)
        } else {
            let origin = if rng.gen_range(0..100) < P7_LLM_PERCENT {
                Origin::Llm
            } else {
                Origin::Classic
            };
            Seed::new(id, vec![id as u8], origin, Some(rng.gen_range(0..id)))
        };
        corpus.admit(seed, interesting, &[], "").map_err(|e| e.to_string())?;
    }
    let records: Vec<SeedRecord> = corpus.seeds().map(SeedRecord::from).collect();
    let oracle = sweep::brute_force_lineage(&records, Mode::Parallel)?;
    let mut counts = [0usize; 3];
    for (r, want) in records.iter().zip(&oracle) {
        let got = corpus.lineage_origin(r.id).map_err(|e| e.to_string())?;
        ensure!(got == *want, "seed {}: cached {got:?}, walk {want:?}", r.id);
        counts[match got {
            Lineage::LlmDirect => 0,
            Lineage::LlmDescendant => 1,
            Lineage::NonLlm => 2,
        }] += 1;
    }
    ensure!(counts.iter().all(|&c| c > 0), "degenerate corpus {counts:?}");
    let mismatches = sweep::lineage_mismatches(&corpus, Mode::Parallel);
    ensure!(mismatches.is_empty(), "corpus walk mismatches {mismatches:?}");
    Ok(format!(
        "{P7_SEEDS} seeds: {} direct, {} descendant, {} other",
        counts[0], counts[1], counts[2]
    ))
}

fn p8_configs(seeds: &Path, llm: LlmMode) -> Vec<CampaignConfig> {
    (0..P8_RUNS)
        .map(|s| chunkfmt_config(seeds, Budget::Executions(P8_EXECS), s, llm.clone()))
        .collect()
}

fn p8_advantage() -> Outcome {
    let fixture: serde_json::Value = serde_json::from_str(include_str!("fixtures/random_b1.json")).unwrap();
    let (reason, hits) = (fixture["reason"].as_str().unwrap(), fixture["hits"].as_u64().unwrap());
    let recomputed = sweep::random_input_hits(
        fixture["samples"].as_u64().unwrap(),
        fixture["input_len"].as_u64().unwrap() as usize,
        reason,
        fixture["rng_seed"].as_u64().unwrap(),
        Mode::Parallel,
    );
    ensure!(
        recomputed.hits == hits,
        "fixture records {hits} hits, recomputed {}",
        recomputed.hits
    );
    ensure!(
        recomputed.rate() < RANDOM_HIT_CEILING,
        "random {reason} rate {}",
        recomputed.rate()
    );

    let seeds = seed_dir(&[chunkfmt::sample_seed()]);
    let timed = |configs: Vec<CampaignConfig>| -> Result<Vec<CampaignSummary>, String> {
        configs
            .iter()
            .map(|c| {
                let start = Instant::now();
                let s = engine::run(c).map_err(|e| e.to_string())?;
                let t = start.elapsed();
                if t >= P8_MAX_RUN_TIME {
                    return Err(format!("run took {t:?}"));
                }
                Ok(s)
            })
            .collect()
    };
    let stub = timed(p8_configs(
        seeds.path(),
        LlmMode::Stub {
            latency: P8_STUB_LATENCY,
        },
    ))?;
    let havoc = timed(p8_configs(seeds.path(), LlmMode::Off))?;

    let stub_ok = stub.iter().filter(|s| found(s, "B1") && found(s, "B2")).count();
    let havoc_b1 = havoc.iter().filter(|s| found(s, "B1")).count();
    let edges = |runs: &[CampaignSummary]| median(runs.iter().map(|s| s.stats.edges_seen as f64).collect());
    let (stub_edges, havoc_edges) = (edges(&stub), edges(&havoc));
    let detail = format!(
        "stub B1+B2 {stub_ok}/{P8_RUNS}, havoc B1 {havoc_b1}/{P8_RUNS}, median edges {stub_edges} vs {havoc_edges}"
    );
    ensure!(stub_ok >= P8_MIN_STUB_SUCCESSES, "{detail}");
    ensure!(havoc_b1 <= P8_MAX_HAVOC_B1, "{detail}");
    ensure!(
        stub_edges > havoc_edges && stub_edges >= P8_MIN_EDGE_GAIN * havoc_edges,
        "{detail}"
    );
    Ok(detail)
}

fn p9_provenance() -> Outcome {
    let seeds = seed_dir(&[chunkfmt::sample_seed()]);
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("run");
    let mut c = p8_configs(
        seeds.path(),
        LlmMode::Stub {
            latency: P8_STUB_LATENCY,
        },
    )
    .remove(0);
    c.out_dir = Some(out.clone());
    let summary = engine::run(&c).map_err(|e| e.to_string())?;

    let cli = Command::new(env!("CARGO_BIN_EXE_structfuzz"))
        .args(["report", "coverage", "--out-dir"])
        .arg(&out)
        .arg("--csv")
        .arg(root.path().join("growth.csv"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(cli.status.success(), "report coverage exited with {:?}", cli.status);
    let rows = engine::report(&out).map_err(|e| e.to_string())?;
    let csv = fs::read_to_string(root.path().join("growth.csv")).map_err(|e| e.to_string())?;
    ensure!(
        csv == engine::report::to_csv(&rows),
        "cli csv differs from the library report"
    );
    let last = rows.last().ok_or("empty report")?;
    ensure!(last.admitted_llm_direct >= 1, "no llm_direct admissions: {last:?}");

    let records = engine::read_seed_records(&out).map_err(|e| e.to_string())?;
    let oracle = sweep::brute_force_lineage(&records, Mode::Parallel)?;
    let count = |l: Lineage| oracle.iter().filter(|&&x| x == l).count() as u64;
    let cached = |l: Lineage| {
        summary
            .corpus
            .seeds()
            .filter(|s| summary.corpus.lineage_origin(s.id).ok() == Some(l))
            .count() as u64
    };
    for (l, reported) in [
        (Lineage::LlmDirect, last.admitted_llm_direct),
        (Lineage::LlmDescendant, last.admitted_llm_descendant),
        (Lineage::NonLlm, last.admitted_other),
    ] {
        ensure!(
            reported == count(l) && reported == cached(l),
            "{l:?}: report {reported}, oracle {}, corpus {}",
            count(l),
            cached(l)
        );
    }
    ensure!(
        sweep::lineage_mismatches(&summary.corpus, Mode::Parallel).is_empty(),
        "corpus lineage disagrees with the ancestor walk"
    );
    Ok(format!(
        "{} rows, final llm_direct {} llm_descendant {} other {}",
        rows.len(),
        last.admitted_llm_direct,
        last.admitted_llm_descendant,
        last.admitted_other
    ))
}

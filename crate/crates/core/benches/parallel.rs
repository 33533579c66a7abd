use std::fs;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use structfuzz::dataset::{self, BuildOptions, RunArchive};
use structfuzz::engine::{self, Budget, CampaignConfig, LlmMode, TargetSpec};
use structfuzz::executor::{chunkfmt, CoverageProvider, DEFAULT_TIMEOUT_MS};
use structfuzz::hexcodec::DEFAULT_MAX_HEX_LEN;
use structfuzz::parallel::Mode;
use structfuzz::sweep;

const MODES: [(&str, Mode); 2] = [("parallel", Mode::Parallel), ("sequential", Mode::Sequential)];

fn config(seeds: &Path, rng_seed: u64) -> CampaignConfig {
    let mut c = CampaignConfig::new(
        TargetSpec::Builtin("chunkfmt".into()),
        seeds,
        Budget::Executions(20_000),
    );
    c.rng_seed = rng_seed;
    c.llm = LlmMode::Stub { latency: 8 };
    c
}

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("random_input_hits");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep::random_input_hits(200_000, 64, "B1", 1, mode))
        });
    }
    g.finish();
}

fn campaign_sweep(c: &mut Criterion) {
    let seeds = tempfile::tempdir().unwrap();
    fs::write(seeds.path().join("sample"), chunkfmt::sample_seed()).unwrap();
    let configs: Vec<_> = (0..8).map(|s| config(seeds.path(), s)).collect();
    let mut g = c.benchmark_group("run_many");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep::run_many(&configs, mode))
        });
    }
    g.finish();
}

fn auditor(c: &mut Criterion) {
    let seeds = tempfile::tempdir().unwrap();
    fs::write(seeds.path().join("sample"), chunkfmt::sample_seed()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let run = out.path().join("run");
    let mut cfg = config(seeds.path(), 0);
    cfg.budget = Budget::Executions(200_000);
    cfg.out_dir = Some(run.clone());
    engine::run(&cfg).unwrap();
    let archive = RunArchive::load(&run).unwrap();
    let pairs = dataset::build_pairs(std::slice::from_ref(&archive), &BuildOptions::default())
        .unwrap()
        .pairs;
    let provider = CoverageProvider::builtin("chunkfmt").unwrap();

    let mut g = c.benchmark_group("audit");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                dataset::audit(
                    &archive,
                    &pairs,
                    &provider,
                    DEFAULT_TIMEOUT_MS,
                    DEFAULT_MAX_HEX_LEN,
                    mode,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, campaign_sweep, auditor);
criterion_main!(benches);

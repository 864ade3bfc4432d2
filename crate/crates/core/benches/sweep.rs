use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dimbound::io::ScenarioFile;
use dimbound::par::Parallelism;
use dimbound::relax::{class_basis, sweep_classes, use_real_span, SweepConfig};
use dimbound::RankClass;

fn example(name: &str) -> ScenarioFile {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "examples", &format!("{name}.scn")].iter().collect();
    ScenarioFile::load(&path).unwrap()
}

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Rayon)];

fn class_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("class_sweep");
    group.sample_size(10);
    for name in ["chsh_d2", "temporal_d2"] {
        let f = example(name);
        for (label, mode) in MODES {
            let cfg = SweepConfig { parallelism: mode, cache_dir: None, ..f.run.sweep_config() };
            group.bench_with_input(BenchmarkId::new(label, name), &cfg, |b, cfg| {
                b.iter(|| sweep_classes(&f.scenario, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn span_basis(c: &mut Criterion) {
    let mut group = c.benchmark_group("span_basis");
    group.sample_size(10);
    let f = example("qrac21_d2");
    let index = f.run.index_spec().words(f.scenario.alphabet()).unwrap();
    let class = RankClass::new(vec![1; 6]);
    let real = use_real_span(&f.scenario);
    for (label, mode) in MODES {
        let cfg = SweepConfig { parallelism: mode, cache_dir: None, ..f.run.sweep_config() };
        group.bench_function(BenchmarkId::new(label, "qrac21_d2/111111"), |b| {
            b.iter(|| class_basis(&f.scenario, &class, &index, &cfg, real, "bench").unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, class_sweep, span_basis);
criterion_main!(benches);

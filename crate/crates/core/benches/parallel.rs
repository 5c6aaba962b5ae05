use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use joinscout::learner::{train_forest, ForestParams};
use joinscout::oracle::{label_corpus, QualityClass, QualityThresholds};
use joinscout::profiler::profile_dataset;
use joinscout::synth::{generate_lake, LakeSpec};
use joinscout::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn small_lake() -> LakeSpec {
    LakeSpec {
        datasets: 8,
        ..LakeSpec::default()
    }
}

fn profiling(c: &mut Criterion) {
    let lake = generate_lake(&small_lake()).unwrap();
    let mut g = c.benchmark_group("profile_lake");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| lake.iter().map(|d| profile_dataset(d, exec).len()).sum::<usize>())
        });
    }
    g.finish();
}

fn labeling(c: &mut Criterion) {
    let lake = generate_lake(&small_lake()).unwrap();
    let t = QualityThresholds::default();
    let mut g = c.benchmark_group("label_corpus");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| label_corpus(&lake, &t, exec).unwrap().len())
        });
    }
    g.finish();
}

fn forest_training(c: &mut Criterion) {
    let lake = generate_lake(&small_lake()).unwrap();
    let pairs = label_corpus(&lake, &QualityThresholds::default(), Execution::Parallel).unwrap();
    let rows: Vec<&[f64]> = pairs.iter().map(|p| p.features.values.as_slice()).collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.label >= QualityClass::Good).collect();
    let params = ForestParams {
        tree_count: 40,
        ..ForestParams::for_class(QualityClass::High)
    };
    let mut g = c.benchmark_group("train_forest");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_forest(&rows, &labels, &params, exec).unwrap().trees.len())
        });
    }
    g.finish();
}

criterion_group!(benches, profiling, labeling, forest_training);
criterion_main!(benches);

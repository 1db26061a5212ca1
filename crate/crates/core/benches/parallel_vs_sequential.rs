use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kknn::classifier::{fit_with, knn_predict};
use kknn::curvature::curvature_profile_with;
use kknn::knn_graph::{build_knng_with, default_k};
use kknn::{Dataset, Exec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, m: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = rows.iter().map(|r| usize::from(r[0] > 0.0)).collect();
    Dataset::from_rows(&rows, labels).unwrap()
}

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn graph(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn_graph");
    for n in [500, 2000] {
        let d = cloud(n, 4, 1);
        let k = default_k(n).unwrap();
        for (name, exec) in STRATEGIES {
            g.bench_with_input(BenchmarkId::new(name, n), &d, |b, d| {
                b.iter(|| build_knng_with(d, k, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn profile(c: &mut Criterion) {
    let mut g = c.benchmark_group("curvature_profile");
    for n in [500, 2000] {
        let d = cloud(n, 3, 2);
        let k = default_k(n).unwrap();
        for (name, exec) in STRATEGIES {
            g.bench_with_input(BenchmarkId::new(name, n), &d, |b, d| {
                b.iter(|| curvature_profile_with(d, k, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn predict(c: &mut Criterion) {
    let mut g = c.benchmark_group("predict");
    let train = cloud(1500, 3, 3);
    let queries = cloud(500, 3, 4);
    let k = default_k(train.n()).unwrap();
    let model = fit_with(&train, k, Exec::Parallel).unwrap();
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::new("kknn", name), |b| {
            b.iter(|| model.predict_dataset(&queries, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("knn", name), |b| {
            b.iter(|| knn_predict(&train, queries.features(), k, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = graph, profile, predict
}
criterion_main!(benches);

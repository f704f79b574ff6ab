//! `cargo bench` times the rayon pool against a one-thread pool.
//! `cargo bench --no-default-features` times the plain sequential build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sparsityboost::beta::{self, BetaTable};
use sparsityboost::data::{self, BinaryDataset};
use sparsityboost::scoring::{self, ScoreConfig};
use sparsityboost::search;

struct Workload {
    table: BetaTable,
    data: BinaryDataset,
}

fn workload() -> Workload {
    let table = beta::build_table(0.01, &[100, 500, 2000], &beta::default_gamma_grid(0.01), 20_000, 1)
        .expect("table");
    let data = data::sample(&data::random_network(10, 2, 3), 2000, 3);
    Workload { table, data }
}

fn run_all(c: &mut Criterion, label: &str, w: &Workload, wrap: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let gammas = beta::default_gamma_grid(0.01);
    c.bench_function(&format!("beta_mc/{label}"), |b| {
        b.iter(|| wrap(&mut || {
            black_box(beta::beta_mc(2000, 0.005, 0.01, 100_000, 7).unwrap());
        }))
    });
    c.bench_function(&format!("build_table/{label}"), |b| {
        b.iter(|| wrap(&mut || {
            black_box(beta::build_table(0.01, &[500, 2000], &gammas[..5], 20_000, 1).unwrap());
        }))
    });
    c.bench_with_input(BenchmarkId::new("parent_set_scores", label), w, |b, w| {
        b.iter(|| wrap(&mut || {
            black_box(scoring::build_parent_set_scores(&w.data, &w.table, &ScoreConfig::default()).unwrap());
        }))
    });
    let scores = scoring::build_parent_set_scores(&w.data, &w.table, &ScoreConfig::default()).unwrap();
    c.bench_with_input(BenchmarkId::new("greedy_16_restarts", label), &scores, |b, s| {
        b.iter(|| wrap(&mut || {
            black_box(search::greedy_hill_climb(s, 16, 5).unwrap());
        }))
    });
}

#[cfg(feature = "parallel")]
fn benches(c: &mut Criterion) {
    let w = workload();
    run_all(c, "rayon", &w, &|f| f());
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    run_all(c, "one_thread", &w, &|f| single.install(f));
}

#[cfg(not(feature = "parallel"))]
fn benches(c: &mut Criterion) {
    let w = workload();
    run_all(c, "sequential", &w, &|f| f());
}

criterion_group! {
    name = group;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(group);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use xaikg_core::graph::{Graph, NodeId};
use xaikg_core::metrics::{exact_metrics_with, sampled_metrics_with, Execution};
use xaikg_core::props;

/// Sparse random graph with roughly `degree` edges per node.
fn random_graph(n: usize, degree: usize, seed: u64) -> Graph {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut g = Graph::new();
    for _ in 0..n {
        g.add_node("N", props! {});
    }
    let id = |i: usize| NodeId::from_seq(i as u64 + 1).unwrap();
    for _ in 0..n * degree {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        g.add_edge("R", id(a), id(b), props! {}).unwrap();
    }
    g
}

fn executions() -> Vec<(&'static str, Execution)> {
    #[allow(unused_mut)]
    let mut out = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    out.push(("parallel", Execution::Parallel));
    out
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_metrics");
    group.sample_size(10);
    for n in [500, 2000] {
        let g = random_graph(n, 3, 1);
        for (name, execution) in executions() {
            group.bench_with_input(BenchmarkId::new(name, n), &g, |b, g| b.iter(|| exact_metrics_with(g, execution)));
        }
    }
    group.finish();
}

fn sampled(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampled_metrics");
    group.sample_size(10);
    let g = random_graph(10_000, 3, 2);
    for (name, execution) in executions() {
        group.bench_function(BenchmarkId::new(name, "10000@0.05"), |b| {
            b.iter(|| sampled_metrics_with(&g, 0.05, 7, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, exact, sampled);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, Criterion};
use sketchspar::testkit::{churn_stream, generate, rng, Family, GeneratorSpec};
use sketchspar::{ingest, sparsify, Constants, RunConfig, Sign};

fn ingest_updates(c: &mut Criterion) {
    let mut group = c.benchmark_group("ingest");
    group.sample_size(10);
    for n in [100, 1000] {
        let warm = churn_stream(n, 8 * n, 4 * n, &mut rng(1));
        let mut state = ingest(&warm, 0.5, 1, &Constants::default()).unwrap();
        let g = warm.final_graph().unwrap();
        let edges: Vec<_> = g.edges().take(256).collect();
        // Delete then reinsert live edges so the state size stays fixed.
        group.bench_function(format!("n={n}"), |b| {
            b.iter(|| {
                for &e in &edges {
                    state.apply(Sign::Delete, e);
                    state.apply(Sign::Insert, e);
                }
            })
        });
    }
    group.finish();
}

fn recover_chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("sparsify");
    group.sample_size(10);
    let (g, stream) = generate(&GeneratorSpec::new(Family::Barbell { n: 32 }, 3)).unwrap();
    for exact in [true, false] {
        let cfg = RunConfig {
            seed: 3,
            exact_sketch: exact,
            exact_embedding: exact,
            ..RunConfig::default()
        };
        let state = ingest(&stream, cfg.epsilon, cfg.seed, &cfg.constants).unwrap();
        let last = state.params().levels() - 1;
        let name = if exact { "barbell32/exact" } else { "barbell32/sketched" };
        group.bench_function(name, |b| {
            b.iter(|| sparsify(&state, last, &cfg, Some(&g)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ingest_updates, recover_chain);
criterion_main!(benches);

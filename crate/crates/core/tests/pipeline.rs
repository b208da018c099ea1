use proptest::prelude::*;
use rand::seq::SliceRandom;
use sketchspar::stream_io::{parse_stream, write_stream};
use sketchspar::testkit::{churn_stream, generate, rng, spectral_check, Family, GeneratorSpec};
use sketchspar::{ingest, sparsify, Constants, RunConfig, Sign, SketchState, StreamFile};

fn reversed_deletions(s: &StreamFile) -> StreamFile {
    let mut out = s.clone();
    for up in s.updates.iter().rev() {
        let undo = match up.sign {
            Sign::Insert => Sign::Delete,
            Sign::Delete => Sign::Insert,
        };
        out.push(undo, up.u, up.v);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn undoing_a_stream_zeroes_the_state(seed in any::<u64>(), n in 3usize..20, len in 0usize..60) {
        let s = churn_stream(n, len, n, &mut rng(seed));
        let state = ingest(&reversed_deletions(&s), 0.5, seed, &Constants::default()).unwrap();
        prop_assert!(state.is_zero());
    }

    #[test]
    fn final_graph_determines_the_state(seed in any::<u64>(), n in 3usize..16) {
        let s = churn_stream(n, 40, n, &mut rng(seed));
        let mut net = StreamFile::new(n);
        let mut edges: Vec<_> = s.final_graph().unwrap().edges().collect();
        edges.shuffle(&mut rng(seed ^ 1));
        for e in edges {
            net.push(Sign::Insert, e.v(), e.u());
        }
        let a = ingest(&s, 0.5, 7, &Constants::default()).unwrap();
        let b = ingest(&net, 0.5, 7, &Constants::default()).unwrap();
        prop_assert!(a.same_accumulators(&b));
    }

    #[test]
    fn stream_text_round_trips(seed in any::<u64>(), n in 2usize..30, len in 0usize..50) {
        let s = churn_stream(n, len, 2 * n, &mut rng(seed));
        let mut buf = Vec::new();
        write_stream(&mut buf, &s).unwrap();
        let back = parse_stream(&buf[..]).unwrap();
        prop_assert_eq!(back.n, s.n);
        let strip = |f: &StreamFile| f.updates.iter().map(|u| (u.sign, u.u, u.v)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&back), strip(&s));
    }
}

#[test]
fn state_survives_serialization() {
    let s = churn_stream(30, 200, 60, &mut rng(3));
    let state = ingest(&s, 0.4, 11, &Constants::default()).unwrap();
    let mut buf = Vec::new();
    state.write_to(&mut buf).unwrap();
    let back = SketchState::read_from(&mut &buf[..]).unwrap();
    assert!(back.same_accumulators(&state));
    assert_eq!(back.update_count(), 200);
}

#[test]
fn exact_modes_sparsify_a_barbell() {
    let (g, stream) = generate(&GeneratorSpec::new(Family::Barbell { n: 12 }, 5)).unwrap();
    let cfg = RunConfig {
        epsilon: 0.5,
        seed: 5,
        exact_sketch: true,
        exact_embedding: true,
        ..RunConfig::default()
    };
    let state = ingest(&stream, cfg.epsilon, cfg.seed, &cfg.constants).unwrap();
    let last = state.params().levels() - 1;
    let (out, reports) = sparsify(&state, last, &cfg, Some(&g)).unwrap();
    assert_eq!(reports.len(), last as usize + 1);
    assert_eq!(out.gamma, 0.0);
    let l = g.to_weighted().laplacian_dense();
    let report = spectral_check(&l, &out.graph.laplacian_dense(), 0.5, 50, 1);
    assert!(report.passed, "{report:?}");

    let (again, _) = sparsify(&state, last, &cfg, Some(&g)).unwrap();
    assert_eq!(again, out);
}

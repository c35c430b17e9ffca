use optfuzz::generator::{generate, ConstraintLevel, GenConfig};
use optfuzz::graph_model::{
    broadcast_index_map, broadcast_shapes, from_text, to_text, validate_graph, Shape,
};
use optfuzz::harness::count_active_nodes;
use optfuzz::mini_ir::{infer_types, lower, parse_module, print_module, run_backend, Backend, Pipeline};
use optfuzz::oracles::draw_inputs;
use optfuzz::relaxation::{trace_similarity, CampaignState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn level() -> impl Strategy<Value = ConstraintLevel> {
    prop_oneof![Just(ConstraintLevel::Unconstrained), Just(ConstraintLevel::Constrained)]
}

fn shape() -> impl Strategy<Value = Shape> {
    prop::collection::vec(1usize..=4, 0..=4).prop_map(Shape::new)
}

/// Numpy broadcasting, spelled out per aligned dimension.
fn numpy_broadcast(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (a, b) = (pad(a), pad(b));
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_text_round_trips(seed in any::<u64>(), n in 1usize..60, level in level()) {
        let (g, _) = generate(&GenConfig::new(n, level, seed)).unwrap();
        let text = to_text(&g);
        let back = from_text(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(to_text(&back), text);
    }

    #[test]
    fn level1_graphs_have_no_violations(seed in any::<u64>(), n in 1usize..80) {
        let (g, t) = generate(&GenConfig::new(n, ConstraintLevel::Constrained, seed)).unwrap();
        prop_assert!(validate_graph(&g, &t).is_empty());
    }

    #[test]
    fn ir_text_round_trips(seed in any::<u64>(), n in 1usize..40) {
        let (g, t) = generate(&GenConfig::new(n, ConstraintLevel::Constrained, seed)).unwrap();
        let m = infer_types(&lower(&g, &t).unwrap()).unwrap();
        let text = print_module(&m);
        let back = parse_module(&text).unwrap();
        prop_assert_eq!(print_module(&back), text);
    }

    #[test]
    fn broadcasting_follows_numpy(a in shape(), b in shape()) {
        let got = broadcast_shapes(&a, &b).ok().map(|s| s.dims().to_vec());
        prop_assert_eq!(&got, &numpy_broadcast(a.dims(), b.dims()));
        let swapped = broadcast_shapes(&b, &a).ok().map(|s| s.dims().to_vec());
        prop_assert_eq!(got.clone(), swapped);
        if let Some(out) = got {
            let out = Shape::new(out);
            let map = broadcast_index_map(&a, &out);
            prop_assert_eq!(map.len(), out.volume());
            prop_assert!(map.iter().all(|&i| i < a.volume().max(1)));
        }
    }

    #[test]
    fn p_follows_closed_form_away_from_bounds(
        p0 in 0.3f64..0.7,
        levels in prop::collection::vec(level(), 0..100),
    ) {
        let alpha = 0.001;
        let mut s = CampaignState::new(p0, alpha, 0).unwrap();
        for l in &levels {
            s.update_on_new_bug(*l);
        }
        let n0 = levels.iter().filter(|l| **l == ConstraintLevel::Unconstrained).count() as f64;
        let n1 = levels.len() as f64 - n0;
        prop_assert!((s.p() - (p0 + alpha * (n0 - n1))).abs() < 1e-9);
    }

    #[test]
    fn p_stays_in_unit_interval(p0 in 0.0f64..=1.0, alpha in 0.001f64..0.5, levels in prop::collection::vec(level(), 0..200)) {
        let mut s = CampaignState::new(p0, alpha, 0).unwrap();
        for l in levels {
            s.update_on_new_bug(l);
            prop_assert!((0.0..=1.0).contains(&s.p()));
        }
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(a in "[a-z0-9 /:.]{0,60}", b in "[a-z0-9 /:.]{0,60}") {
        let x = trace_similarity(&a, &b, 3);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, trace_similarity(&b, &a, 3));
        prop_assert_eq!(trace_similarity(&a, &a, 3), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn backends_and_full_pipeline_agree(seed in any::<u64>(), n in 1usize..40) {
        let (g, t) = generate(&GenConfig::new(n, ConstraintLevel::Constrained, seed)).unwrap();
        let m = infer_types(&lower(&g, &t).unwrap()).unwrap();
        let inputs = draw_inputs(&m, &mut ChaCha8Rng::seed_from_u64(seed));
        let reference = run_backend(&m, &inputs, Backend::Tree).unwrap();
        let optimized = Pipeline::full().run(&m).unwrap();
        for b in Backend::ALL {
            for module in [&m, &optimized] {
                let got = run_backend(module, &inputs, b).unwrap();
                prop_assert_eq!(got.len(), reference.len());
                prop_assert!(got.iter().zip(&reference).all(|(x, y)| x.agrees(y, 1e-6)), "{}", b);
            }
        }
    }

    #[test]
    fn active_nodes_are_bounded_by_size(seed in any::<u64>(), n in 1usize..30, level in level()) {
        let (g, _) = generate(&GenConfig::new(n, level, seed)).unwrap();
        let active = count_active_nodes(&g, &Pipeline::full());
        prop_assert!(active <= g.len());
        if level == ConstraintLevel::Constrained {
            prop_assert_eq!(active, g.len());
        }
    }
}

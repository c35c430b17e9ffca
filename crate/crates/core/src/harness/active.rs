use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph_model::{ComputationalGraph, NodeInfoTable};
use crate::mini_ir::{infer_types, lower, run_backend_with, Backend, Pipeline};
use crate::oracles::{catch_panic, draw_inputs};

/// Whether `g` lowers, type-checks, survives `pipeline` and runs on the
/// tree backend with one input draw.
pub fn runs_cleanly(g: &ComputationalGraph, pipeline: &Pipeline) -> bool {
    let t = NodeInfoTable::rebuild(g);
    catch_panic(|| {
        let Ok(m) = lower(g, &t) else { return false };
        let Ok(m) = infer_types(&m) else { return false };
        let inputs = draw_inputs(&m, &mut ChaCha8Rng::seed_from_u64(0));
        let Ok(m) = pipeline.run(&m) else { return false };
        run_backend_with(&m, &inputs, Backend::Tree, &pipeline.faults).is_ok()
    })
    .unwrap_or(false)
}

/// Size of the largest insertion-order prefix of `g` that runs cleanly
/// through `pipeline`; 0 for an empty graph.
pub fn count_active_nodes(g: &ComputationalGraph, pipeline: &Pipeline) -> usize {
    (1..=g.len()).rev().find(|&n| runs_cleanly(&g.prefix(n), pipeline)).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate, ConstraintLevel, GenConfig};
    use crate::graph_model::from_text;

    #[test]
    fn sqrt_of_int_const_leaves_one_active_node() {
        let g = from_text("0 constant int16 () [4]\n1 operator sqrt 0\n").unwrap();
        assert_eq!(count_active_nodes(&g, &Pipeline::full()), 1);
    }

    #[test]
    fn empty_graph_has_none() {
        assert_eq!(count_active_nodes(&ComputationalGraph::new(), &Pipeline::full()), 0);
    }

    #[test]
    fn clean_level1_graph_is_fully_active() {
        for seed in 0..3 {
            let (g, _) = generate(&GenConfig::new(100, ConstraintLevel::Constrained, seed)).unwrap();
            assert_eq!(count_active_nodes(&g, &Pipeline::full()), 100, "seed {seed}");
        }
    }

    #[test]
    fn never_exceeds_size() {
        for seed in 0..5 {
            let (g, _) = generate(&GenConfig::new(30, ConstraintLevel::Unconstrained, seed)).unwrap();
            assert!(count_active_nodes(&g, &Pipeline::full()) <= g.len());
        }
    }
}

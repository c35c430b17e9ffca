use std::path::{Path, PathBuf};

use optfuzz::generator::{generate, GenConfig};
use optfuzz::graph_model::{to_text, NodeInfoTable};
use optfuzz::harness::load_case;
use optfuzz::mini_ir::SeededBug;
use optfuzz::oracles::{run_case, Outcome};

fn case_path(bug: SeededBug) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/regressions").join(format!("{}.graph", bug.id()))
}

#[test]
fn every_seeded_fault_still_reproduces() {
    for bug in SeededBug::ALL {
        let (g, rec) = load_case(&case_path(bug)).unwrap();
        assert_eq!(rec.case.faults.iter().collect::<Vec<_>>(), vec![bug]);
        let t = NodeInfoTable::rebuild(&g);
        let v = run_case(&g, &t, rec.verdict.level, &rec.case, rec.case_seed);
        assert_eq!(v.outcome, rec.verdict.outcome, "{}", bug.id());
        assert_eq!(v.oracle, rec.verdict.oracle, "{}", bug.id());
        assert_eq!(v.oracle, Some(bug.expected_oracle()), "{}", bug.id());
    }
}

#[test]
fn cases_pass_on_the_correct_compiler() {
    for bug in SeededBug::ALL {
        let (g, rec) = load_case(&case_path(bug)).unwrap();
        let t = NodeInfoTable::rebuild(&g);
        let clean = rec.case.clone().with_faults(Default::default());
        let v = run_case(&g, &t, rec.verdict.level, &clean, rec.case_seed);
        assert_eq!(v.outcome, Outcome::Pass, "{}: {:?}", bug.id(), v.details.fragments);
    }
}

#[test]
fn stored_graphs_regenerate_from_their_seeds() {
    for bug in SeededBug::ALL {
        let (g, rec) = load_case(&case_path(bug)).unwrap();
        let (again, _) = generate(&GenConfig::new(rec.node_num, rec.level, rec.gen_seed)).unwrap();
        assert_eq!(to_text(&again), to_text(&g), "{}", bug.id());
    }
}

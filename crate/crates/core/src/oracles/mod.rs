//! Runs one generated graph through the crash (O1), optimization/mutation
//! inconsistency (O2) and cross-backend (O3) oracles and classifies the
//! outcome.

mod panic;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use panic::catch_panic;

use crate::generator::{random_value, ConstraintLevel};
use crate::graph_model::{ComputationalGraph, NodeInfoTable, TensorValue};
use crate::mini_ir::{
    infer_types, lower, mutate_function_rewrite, print_module, run_backend_with, Backend, Faults, Module, PassKind,
    Pipeline, RewriteStrategy, Type,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Crash,
    Inconsistency,
    ExpectedRejection,
}

impl Outcome {
    pub fn is_failure(self) -> bool {
        matches!(self, Outcome::Crash | Outcome::Inconsistency)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Crash => "crash",
            Outcome::Inconsistency => "inconsistency",
            Outcome::ExpectedRejection => "expected_rejection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OracleKind {
    /// Crash during compilation or execution.
    O1,
    /// Original, optimized and mutated modules disagree.
    O2,
    /// Backends disagree on the same module.
    O3,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One oracle's finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub oracle: OracleKind,
    pub outcome: Outcome,
    /// What was being run, e.g. `pipeline inline,fold_constant` or `backend vm`.
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictDetails {
    /// Seed of the case: input draws, random pipelines and mutants derive from it.
    pub case_seed: u64,
    pub pipelines: Vec<Vec<PassKind>>,
    /// Every finding, in oracle order; the first one decides the verdict.
    pub fragments: Vec<Fragment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzVerdict {
    pub outcome: Outcome,
    pub oracle: Option<OracleKind>,
    pub level: ConstraintLevel,
    /// Diagnostic text for crash-like failures; `None` for oracle-only findings.
    pub trace: Option<String>,
    pub graph_ref: Option<String>,
    pub details: VerdictDetails,
}

impl FuzzVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSet {
    pub o1: bool,
    pub o2: bool,
    pub o3: bool,
}

impl Default for OracleSet {
    fn default() -> Self {
        OracleSet { o1: true, o2: true, o3: true }
    }
}

impl OracleSet {
    fn enabled(&self, k: OracleKind) -> bool {
        match k {
            OracleKind::O1 => self.o1,
            OracleKind::O2 => self.o2,
            OracleKind::O3 => self.o3,
        }
    }
}

/// Per-case knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseConfig {
    pub oracles: OracleSet,
    /// Random input vectors per case; all must agree.
    pub input_draws: usize,
    /// Random pass subsets/permutations added to the full pipeline.
    pub random_pipelines: usize,
    /// Explicit pipelines; replaces the full + random plan when set. An
    /// empty list disables O2.
    pub pipelines: Option<Vec<Vec<PassKind>>>,
    /// Apply the three function rewrites under O2.
    pub mutants: bool,
    /// Relative tolerance for float outputs.
    pub rel_tol: f64,
    pub faults: Faults,
}

impl Default for CaseConfig {
    fn default() -> Self {
        CaseConfig {
            oracles: OracleSet::default(),
            input_draws: 3,
            random_pipelines: 2,
            pipelines: None,
            mutants: true,
            rel_tol: 1e-6,
            faults: Faults::none(),
        }
    }
}

impl CaseConfig {
    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    fn plan<R: Rng>(&self, rng: &mut R) -> Vec<Pipeline> {
        match &self.pipelines {
            Some(list) => list
                .iter()
                .map(|p| Pipeline::new(p.clone()).with_faults(self.faults.clone()))
                .collect(),
            None => {
                let mut out = vec![Pipeline::full().with_faults(self.faults.clone())];
                for _ in 0..self.random_pipelines {
                    out.push(Pipeline::random(rng, &self.faults));
                }
                out
            }
        }
    }
}

/// Result of running an external compiler target.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalResult {
    Ok(Vec<TensorValue>),
    Error(String),
    /// The target does not handle this module; not a finding.
    Unsupported,
}

/// An out-of-process compiler participating in O3.
pub trait ExternalTarget: Send + Sync {
    fn name(&self) -> String;
    fn run(&self, ir_text: &str, pipeline: &[&str], inputs: &BTreeMap<String, TensorValue>) -> ExternalResult;
}

#[derive(Debug, Clone, PartialEq)]
enum Failure {
    /// A structured diagnostic (type, lowering or runtime error).
    Diagnostic(String),
    /// An uncontrolled abort.
    Panic(String),
}

impl Failure {
    fn text(&self) -> &str {
        match self {
            Failure::Diagnostic(s) | Failure::Panic(s) => s,
        }
    }
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, Failure> {
    match catch_panic(f) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(msg)) => Err(Failure::Diagnostic(msg)),
        Err(panic) => Err(Failure::Panic(panic)),
    }
}

type Outputs = Result<Vec<TensorValue>, Failure>;

fn execute(m: &Module, inputs: &BTreeMap<String, TensorValue>, backend: Backend, faults: &Faults) -> Outputs {
    guarded(|| run_backend_with(m, inputs, backend, faults).map_err(|e| e.to_string()))
}

/// O1 classification of a failure: at level 0 only uncontrolled aborts
/// count, at level 1 every failure does.
pub fn oracle1_outcome(level: ConstraintLevel, panicked: bool) -> Outcome {
    match (level, panicked) {
        (_, true) | (ConstraintLevel::Constrained, false) => Outcome::Crash,
        (ConstraintLevel::Unconstrained, false) => Outcome::ExpectedRejection,
    }
}

fn o1_fragment(level: ConstraintLevel, stage: &str, f: &Failure) -> Fragment {
    Fragment {
        oracle: OracleKind::O1,
        outcome: oracle1_outcome(level, matches!(f, Failure::Panic(_))),
        stage: stage.to_string(),
        message: f.text().to_string(),
    }
}

fn summarize(v: &TensorValue) -> String {
    let text = v.to_string();
    if text.len() > 160 {
        format!("{}...", &text[..160])
    } else {
        text
    }
}

/// Compares two executions; `None` when they agree in status and values.
fn compare(expected: &Outputs, got: &Outputs, rel_tol: f64) -> Option<String> {
    match (expected, got) {
        (Ok(a), Ok(b)) => {
            if a.len() != b.len() {
                return Some(format!("expected {} outputs, got {}", a.len(), b.len()));
            }
            a.iter().zip(b).enumerate().find(|(_, (x, y))| !x.agrees(y, rel_tol)).map(|(i, (x, y))| {
                format!("output {i} differs: expected {}, got {}", summarize(x), summarize(y))
            })
        }
        (Ok(_), Err(f)) => Some(format!("status differs: reference succeeded, this run failed: {}", f.text())),
        (Err(f), Ok(_)) => Some(format!("status differs: reference failed ({}), this run succeeded", f.text())),
        (Err(_), Err(_)) => None,
    }
}

fn inconsistency(oracle: OracleKind, stage: String, message: String) -> Fragment {
    Fragment { oracle, outcome: Outcome::Inconsistency, stage, message }
}

fn pipeline_stage(p: &Pipeline) -> String {
    format!("pipeline {}", p.names().join(","))
}

/// Draws one input vector for main's parameters.
pub fn draw_inputs<R: Rng>(m: &Module, rng: &mut R) -> BTreeMap<String, TensorValue> {
    let main = m.main().expect("typed module has main");
    main.params
        .iter()
        .filter_map(|p| match &p.ty {
            Type::Tensor(t) => Some((p.name.clone(), random_value(t.dtype, &t.shape, rng))),
            _ => None,
        })
        .collect()
}

struct Case<'a> {
    cfg: &'a CaseConfig,
    level: ConstraintLevel,
    inputs: Vec<BTreeMap<String, TensorValue>>,
}

impl Case<'_> {
    fn outputs(&self, m: &Module, backend: Backend) -> Vec<Outputs> {
        self.inputs.iter().map(|i| execute(m, i, backend, &self.cfg.faults)).collect()
    }

    /// First disagreement of `got` against `reference` over all input draws.
    fn first_difference(&self, reference: &[Outputs], got: &[Outputs]) -> Option<String> {
        reference
            .iter()
            .zip(got)
            .enumerate()
            .find_map(|(j, (r, g))| compare(r, g, self.cfg.rel_tol).map(|msg| format!("input draw {j}: {msg}")))
    }

    fn oracle2(
        &self,
        original: &Module,
        reference: &[Outputs],
        pipelines: &[Pipeline],
        optimized: &Module,
        seed: u64,
    ) -> Vec<Fragment> {
        let mut out = Vec::new();
        for (i, p) in pipelines.iter().enumerate() {
            let stage = pipeline_stage(p);
            let m = if i == 0 {
                Ok(optimized.clone())
            } else {
                guarded(|| p.run(original).map_err(|e| e.to_string()))
            };
            match m {
                Err(f) => out.push(inconsistency(
                    OracleKind::O2,
                    stage,
                    format!("status differs: original compiles, optimization failed: {}", f.text()),
                )),
                Ok(m) => {
                    if let Some(msg) = self.first_difference(reference, &self.outputs(&m, Backend::Tree)) {
                        out.push(inconsistency(OracleKind::O2, stage, msg));
                    }
                }
            }
        }
        if !self.cfg.mutants {
            return out;
        }
        let primary = &pipelines[0];
        for s in RewriteStrategy::ALL {
            let stage = format!("mutant {s}");
            let mutant = guarded(|| match mutate_function_rewrite(original, s, seed) {
                Ok(m) => Ok(Some(m)),
                Err(_) => Ok(None),
            });
            let mutant = match mutant {
                Ok(None) => continue,
                Ok(Some(m)) => m,
                Err(f) => {
                    out.push(inconsistency(OracleKind::O2, stage, format!("mutation failed: {}", f.text())));
                    continue;
                }
            };
            for (label, run) in [("", None), (" optimized", Some(primary))] {
                let compiled = guarded(|| match run {
                    None => infer_types(&mutant).map_err(|e| e.to_string()),
                    Some(p) => p.run(&mutant).map_err(|e| e.to_string()),
                });
                let stage = format!("{stage}{label}");
                match compiled {
                    Err(f) => out.push(inconsistency(
                        OracleKind::O2,
                        stage,
                        format!("status differs: original compiles, mutant failed: {}", f.text()),
                    )),
                    Ok(m) => {
                        if let Some(msg) = self.first_difference(reference, &self.outputs(&m, Backend::Tree)) {
                            out.push(inconsistency(OracleKind::O2, stage, msg));
                        }
                    }
                }
            }
        }
        out
    }

    fn oracle3(
        &self,
        modules: &[(&str, &Module, &[Outputs])],
        targets: &[&dyn ExternalTarget],
        primary: Option<&Pipeline>,
    ) -> Vec<Fragment> {
        let mut out = Vec::new();
        for (label, m, reference) in modules {
            for b in [Backend::Graph, Backend::Vm] {
                if let Some(msg) = self.first_difference(reference, &self.outputs(m, b)) {
                    out.push(inconsistency(OracleKind::O3, format!("backend {b} on {label} module"), msg));
                }
            }
        }
        let Some((_, original, reference)) = modules.first() else { return out };
        if targets.is_empty() {
            return out;
        }
        let text = print_module(original);
        let names: Vec<&str> = primary.map(|p| p.names()).unwrap_or_default();
        for t in targets {
            let got: Vec<Option<Outputs>> = self
                .inputs
                .iter()
                .map(|i| match t.run(&text, &names, i) {
                    ExternalResult::Ok(v) => Some(Ok(v)),
                    ExternalResult::Error(e) => Some(Err(Failure::Diagnostic(e))),
                    ExternalResult::Unsupported => None,
                })
                .collect();
            if got.iter().any(Option::is_none) {
                continue;
            }
            let got: Vec<Outputs> = got.into_iter().flatten().collect();
            if let Some(msg) = self.first_difference(reference, &got) {
                out.push(inconsistency(OracleKind::O3, format!("external {}", t.name()), msg));
            }
        }
        out
    }
}

/// Runs every enabled oracle on one graph. Deterministic in
/// (graph, level, configuration, seed).
pub fn run_case(
    g: &ComputationalGraph,
    t: &NodeInfoTable,
    level: ConstraintLevel,
    cfg: &CaseConfig,
    seed: u64,
) -> FuzzVerdict {
    run_case_with_targets(g, t, level, cfg, seed, &[])
}

pub fn run_case_with_targets(
    g: &ComputationalGraph,
    t: &NodeInfoTable,
    level: ConstraintLevel,
    cfg: &CaseConfig,
    seed: u64,
    targets: &[&dyn ExternalTarget],
) -> FuzzVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pipelines = cfg.plan(&mut rng);
    let mut fragments = Vec::new();
    let finish = |fragments: Vec<Fragment>| classify(level, cfg, seed, &pipelines, fragments);

    let original = guarded(|| {
        let m = lower(g, t).map_err(|e| e.to_string())?;
        infer_types(&m).map_err(|e| e.to_string())
    });
    let original = match original {
        Ok(m) => m,
        Err(f) => {
            fragments.push(o1_fragment(level, "compile original", &f));
            return finish(fragments);
        }
    };
    let case = Case {
        cfg,
        level,
        inputs: (0..cfg.input_draws.max(1)).map(|_| draw_inputs(&original, &mut rng)).collect(),
    };
    let mutant_seed: u64 = rng.gen();

    let primary = pipelines.first().cloned().unwrap_or_default();
    let optimized = match guarded(|| primary.run(&original).map_err(|e| e.to_string())) {
        Ok(m) => m,
        Err(f) => {
            fragments.push(o1_fragment(level, &pipeline_stage(&primary), &f));
            return finish(fragments);
        }
    };
    let reference = case.outputs(&original, Backend::Tree);
    if let Err(f) = &reference[0] {
        fragments.push(o1_fragment(case.level, "execute original on tree", f));
        return finish(fragments);
    }
    let optimized_out = case.outputs(&optimized, Backend::Tree);
    if let Err(f) = &optimized_out[0] {
        fragments.push(o1_fragment(case.level, "execute optimized on tree", f));
        return finish(fragments);
    }

    if cfg.oracles.o2 && !pipelines.is_empty() {
        fragments.extend(case.oracle2(&original, &reference, &pipelines, &optimized, mutant_seed));
    }
    if cfg.oracles.o3 {
        let mut modules: Vec<(&str, &Module, &[Outputs])> = vec![("original", &original, &reference)];
        if !primary.passes.is_empty() {
            modules.push(("optimized", &optimized, &optimized_out));
        }
        fragments.extend(case.oracle3(&modules, targets, pipelines.first()));
    }
    finish(fragments)
}

fn classify(
    level: ConstraintLevel,
    cfg: &CaseConfig,
    seed: u64,
    pipelines: &[Pipeline],
    fragments: Vec<Fragment>,
) -> FuzzVerdict {
    let decisive = fragments.iter().find(|f| cfg.oracles.enabled(f.oracle));
    let (outcome, oracle, trace) = match decisive {
        None => (Outcome::Pass, None, None),
        Some(f) => {
            let trace = (f.oracle == OracleKind::O1).then(|| f.message.clone());
            (f.outcome, Some(f.oracle), trace)
        }
    };
    FuzzVerdict {
        outcome,
        oracle,
        level,
        trace,
        graph_ref: None,
        details: VerdictDetails {
            case_seed: seed,
            pipelines: pipelines.iter().map(|p| p.passes.clone()).collect(),
            fragments,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::from_text;
    use crate::mini_ir::SeededBug;

    fn case(text: &str) -> (ComputationalGraph, NodeInfoTable) {
        let g = from_text(text).unwrap();
        let t = NodeInfoTable::rebuild(&g);
        (g, t)
    }

    #[test]
    fn clean_graph_passes() {
        let (g, t) = case("0 variable int32 (2)\n1 constant int32 () [3]\n2 operator add 0 1\n3 operator negative 2\n");
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &CaseConfig::default(), 1);
        assert_eq!(v.outcome, Outcome::Pass, "{:?}", v.details.fragments);
        assert_eq!(v.oracle, None);
    }

    #[test]
    fn level0_type_error_is_expected() {
        let (g, t) = case("0 constant int16 () [4]\n1 operator sqrt 0\n");
        let v = run_case(&g, &t, ConstraintLevel::Unconstrained, &CaseConfig::default(), 1);
        assert_eq!(v.outcome, Outcome::ExpectedRejection);
        assert_eq!(v.oracle, Some(OracleKind::O1));
        assert!(v.trace.unwrap().starts_with("ERROR inadmissible"));
        // the same failure at level 1 is a crash
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &CaseConfig::default(), 1);
        assert_eq!(v.outcome, Outcome::Crash);
    }

    #[test]
    fn seeded_umod_is_o2() {
        let (g, t) = case("0 constant uint8 () [7]\n1 constant uint8 () [3]\n2 operator floor_mod 0 1\n");
        let cfg = CaseConfig::default().with_faults([SeededBug::FoldUmod].into_iter().collect());
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &cfg, 1);
        assert_eq!((v.outcome, v.oracle), (Outcome::Inconsistency, Some(OracleKind::O2)));
        assert_eq!(v.trace, None);
    }

    #[test]
    fn seeded_vm_negative_is_o3() {
        let (g, t) = case("0 constant int8 (2) [1,2]\n1 operator negative 0\n");
        let cfg = CaseConfig::default().with_faults([SeededBug::VmNegative].into_iter().collect());
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &cfg, 1);
        assert_eq!((v.outcome, v.oracle), (Outcome::Inconsistency, Some(OracleKind::O3)));
    }

    #[test]
    fn seeded_shift_panic_is_o1_crash_even_at_level0() {
        let (g, t) = case("0 constant int8 () [8]\n1 constant int8 () [1]\n2 operator right_shift 0 1\n");
        let cfg = CaseConfig::default().with_faults([SeededBug::FoldShiftPanic].into_iter().collect());
        for level in [ConstraintLevel::Unconstrained, ConstraintLevel::Constrained] {
            let v = run_case(&g, &t, level, &cfg, 1);
            assert_eq!((v.outcome, v.oracle), (Outcome::Crash, Some(OracleKind::O1)));
            assert!(v.trace.as_deref().unwrap().contains("right_shift"));
        }
    }

    #[test]
    fn empty_pipeline_list_skips_o2() {
        let (g, t) = case("0 constant uint8 () [7]\n1 constant uint8 () [3]\n2 operator floor_mod 0 1\n");
        let cfg = CaseConfig { pipelines: Some(vec![]), ..CaseConfig::default() }
            .with_faults([SeededBug::FoldUmod].into_iter().collect());
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &cfg, 1);
        assert_eq!(v.outcome, Outcome::Pass);
        assert!(v.details.pipelines.is_empty());
    }

    #[test]
    fn disabled_oracle_does_not_decide() {
        let (g, t) = case("0 constant int8 (2) [1,2]\n1 operator negative 0\n");
        let cfg = CaseConfig { oracles: OracleSet { o3: false, ..OracleSet::default() }, ..CaseConfig::default() }
            .with_faults([SeededBug::VmNegative].into_iter().collect());
        let v = run_case(&g, &t, ConstraintLevel::Constrained, &cfg, 1);
        assert_eq!(v.outcome, Outcome::Pass);
    }

    #[test]
    fn verdict_json_has_stable_fields() {
        let (g, t) = case("0 constant int16 () [4]\n1 operator sqrt 0\n");
        let v = run_case(&g, &t, ConstraintLevel::Unconstrained, &CaseConfig::default(), 5);
        let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(json["outcome"], "expected_rejection");
        assert_eq!(json["oracle"], "O1");
        assert_eq!(json["level"], 0);
        assert_eq!(json["details"]["case_seed"], 5);
        let back: FuzzVerdict = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(back, v);
    }
}

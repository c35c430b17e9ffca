use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generator::{generate, ConstraintLevel};
use crate::graph_model::{fingerprint, ComputationalGraph, NodeInfoTable};
use crate::oracles::{run_case_with_targets, ExternalTarget, FuzzVerdict};
use crate::relaxation::{normalize_trace, BugRecord, CampaignState};

use super::adapter::AdapterClient;
use super::config::CampaignConfig;
use super::corpus::{CaseRecord, Corpus};
use super::{derive_seed, HarnessError};

const STREAM_GEN: u64 = 1;
const STREAM_CASE: u64 = 2;
const STREAM_SIZE: u64 = 3;
const STREAM_LEVEL: u64 = 4;

/// Seeds and size of one campaign iteration. Fixed by the master seed and
/// the iteration index alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedCase {
    pub iteration: usize,
    pub level: ConstraintLevel,
    pub node_num: usize,
    pub gen_seed: u64,
    pub case_seed: u64,
}

impl PlannedCase {
    pub fn new(cfg: &CampaignConfig, iteration: usize, level: ConstraintLevel) -> Self {
        let i = iteration as u64;
        let mut size_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, i, STREAM_SIZE));
        PlannedCase {
            iteration,
            level,
            node_num: size_rng.gen_range(cfg.node_num.min..=cfg.node_num.max),
            gen_seed: derive_seed(cfg.master_seed, i, STREAM_GEN),
            case_seed: derive_seed(cfg.master_seed, i, STREAM_CASE),
        }
    }

    pub fn generate(&self, cfg: &CampaignConfig) -> (ComputationalGraph, NodeInfoTable) {
        generate(&cfg.gen_config(self.node_num, self.level, self.gen_seed)).expect("validated generator config")
    }

    pub fn run(&self, cfg: &CampaignConfig, targets: &[&dyn ExternalTarget]) -> (ComputationalGraph, FuzzVerdict) {
        let (g, t) = self.generate(cfg);
        let v = run_case_with_targets(&g, &t, self.level, &cfg.case, self.case_seed, targets);
        (g, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPoint {
    pub iteration: usize,
    pub p: f64,
}

/// Campaign summary. Contains no timestamps or paths, so equal campaigns
/// produce byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub master_seed: u64,
    pub iterations: usize,
    pub p0: f64,
    pub alpha: f64,
    pub final_p: f64,
    pub faults: Vec<String>,
    /// level ("level0"/"level1") -> outcome -> count.
    pub outcomes: BTreeMap<String, BTreeMap<String, usize>>,
    /// Crash and Inconsistency verdicts per deciding oracle.
    pub failures_by_oracle: BTreeMap<String, usize>,
    pub new_bugs: usize,
    pub bugs: Vec<BugRecord>,
    /// p after each update, starting with p0 at iteration 0.
    pub p_trajectory: Vec<PPoint>,
    pub adapter_errors: Vec<String>,
}

impl CampaignReport {
    fn new(cfg: &CampaignConfig) -> Self {
        CampaignReport {
            master_seed: cfg.master_seed,
            iterations: 0,
            p0: cfg.p0,
            alpha: cfg.alpha,
            final_p: cfg.p0,
            faults: cfg.case.faults.iter().map(|b| b.id().to_string()).collect(),
            outcomes: BTreeMap::new(),
            failures_by_oracle: BTreeMap::new(),
            new_bugs: 0,
            bugs: Vec::new(),
            p_trajectory: vec![PPoint { iteration: 0, p: cfg.p0 }],
            adapter_errors: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.new_bugs > 0)
    }

    /// Number of verdicts with the given level and outcome name.
    pub fn count(&self, level: ConstraintLevel, outcome: &str) -> usize {
        self.outcomes
            .get(&level_key(level))
            .and_then(|m| m.get(outcome))
            .copied()
            .unwrap_or(0)
    }

    pub fn cases_at(&self, level: ConstraintLevel) -> usize {
        self.outcomes.get(&level_key(level)).map_or(0, |m| m.values().sum())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn level_key(level: ConstraintLevel) -> String {
    format!("level{}", level.as_u8())
}

struct Recorder<'a> {
    cfg: &'a CampaignConfig,
    state: CampaignState,
    corpus: Option<Corpus>,
    report: CampaignReport,
}

impl Recorder<'_> {
    fn record(&mut self, plan: &PlannedCase, g: &ComputationalGraph, mut v: FuzzVerdict) -> Result<(), HarnessError> {
        let r = &mut self.report;
        r.iterations += 1;
        *r.outcomes.entry(level_key(plan.level)).or_default().entry(v.outcome.to_string()).or_default() += 1;
        if !v.outcome.is_failure() {
            return Ok(());
        }
        let oracle = v.oracle.expect("failing verdicts name an oracle");
        *r.failures_by_oracle.entry(oracle.to_string()).or_default() += 1;
        let fp = fingerprint(g);
        let (is_new, key, untraced) = match &v.trace {
            Some(t) => (self.state.is_new_bug(t, &self.cfg.dedup), normalize_trace(t), false),
            None => (self.state.is_new_untraced(&oracle.to_string(), &fp), format!("{oracle}:{fp}"), true),
        };
        if !is_new {
            return Ok(());
        }
        self.state.update_on_new_bug(plan.level);
        let r = &mut self.report;
        r.p_trajectory.push(PPoint { iteration: plan.iteration, p: self.state.p() });
        let mut graph_file = String::new();
        if let Some(corpus) = &self.corpus {
            let stem = format!("case-{:06}", plan.iteration);
            v.graph_ref = Some(format!("{stem}.graph"));
            let record = CaseRecord {
                iteration: plan.iteration,
                level: plan.level,
                node_num: plan.node_num,
                gen_seed: plan.gen_seed,
                case_seed: plan.case_seed,
                fingerprint: fp,
                case: self.cfg.case.clone(),
                verdict: v.clone(),
            };
            graph_file = corpus.write_case(&stem, g, &record)?;
        }
        let bug = BugRecord {
            id: r.bugs.len(),
            iteration: plan.iteration,
            level: plan.level,
            oracle: oracle.to_string(),
            outcome: v.outcome.to_string(),
            key,
            untraced,
            graph_file,
            gen_seed: plan.gen_seed,
            case_seed: plan.case_seed,
        };
        if let Some(corpus) = &self.corpus {
            corpus.append_bug(&bug)?;
        }
        r.bugs.push(bug);
        r.new_bugs += 1;
        Ok(())
    }
}

/// Runs a campaign, starting the configured adapters.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, HarnessError> {
    cfg.validate()?;
    let clients = cfg
        .adapters
        .iter()
        .map(|spec| AdapterClient::start(spec.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<&dyn ExternalTarget> = clients.iter().map(|c| c as &dyn ExternalTarget).collect();
    let mut report = run_campaign_with_targets(cfg, &targets)?;
    for c in &clients {
        report.adapter_errors.extend(c.take_errors());
    }
    if let Some(path) = &cfg.report_path {
        write_report(path, &report)?;
    }
    Ok(report)
}

pub fn write_report(path: &std::path::Path, report: &CampaignReport) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, report.to_json())?;
    Ok(())
}

/// The campaign loop with caller-supplied external targets. Does not write
/// the report file.
pub fn run_campaign_with_targets(
    cfg: &CampaignConfig,
    targets: &[&dyn ExternalTarget],
) -> Result<CampaignReport, HarnessError> {
    cfg.validate()?;
    let corpus = cfg.corpus_dir.as_deref().map(Corpus::create).transpose()?;
    let state = CampaignState::new(cfg.p0, cfg.alpha, derive_seed(cfg.master_seed, 0, STREAM_LEVEL))
        .expect("validated p0 and alpha");
    let mut rec = Recorder { cfg, state, corpus, report: CampaignReport::new(cfg) };
    let pool = (cfg.parallelism > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build())
        .transpose()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    // Levels for a batch are drawn before it runs; at parallelism 1 the
    // batch is a single case, so every draw sees all earlier updates.
    let batch = if cfg.parallelism == 1 { 1 } else { cfg.parallelism * 4 };
    let start = Instant::now();
    let mut next = 0;
    while next < cfg.iterations {
        if cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            break;
        }
        let n = batch.min(cfg.iterations - next);
        let plans: Vec<PlannedCase> =
            (next..next + n).map(|i| PlannedCase::new(cfg, i, rec.state.select_level())).collect();
        let results: Vec<(ComputationalGraph, FuzzVerdict)> = match &pool {
            None => plans.iter().map(|p| p.run(cfg, targets)).collect(),
            Some(pool) => pool.install(|| plans.par_iter().map(|p| p.run(cfg, targets)).collect()),
        };
        for (plan, (g, v)) in plans.iter().zip(results) {
            rec.record(plan, &g, v)?;
        }
        next += n;
    }
    rec.report.final_p = rec.state.p();
    Ok(rec.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::SeededBug;

    fn small(iterations: usize, seed: u64) -> CampaignConfig {
        CampaignConfig { iterations, master_seed: seed, ..CampaignConfig::default() }
    }

    #[test]
    fn clean_campaign_finds_nothing() {
        let r = run_campaign(&small(200, 1)).unwrap();
        assert_eq!(r.iterations, 200);
        assert_eq!(r.new_bugs, 0, "{:?}", r.bugs);
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.count(ConstraintLevel::Constrained, "crash"), 0);
        assert_eq!(r.count(ConstraintLevel::Constrained, "inconsistency"), 0);
        assert_eq!(r.cases_at(ConstraintLevel::Unconstrained) + r.cases_at(ConstraintLevel::Constrained), 200);
    }

    #[test]
    fn seeded_campaign_records_and_persists() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(300, 2);
        cfg.case.faults = [SeededBug::FoldUmod].into_iter().collect();
        cfg.corpus_dir = Some(dir.path().to_path_buf());
        let r = run_campaign(&cfg).unwrap();
        assert!(r.new_bugs >= 1);
        assert_eq!(r.exit_code(), 1);
        // one p update per new bug
        assert_eq!(r.p_trajectory.len(), r.new_bugs + 1);
        let log = super::super::corpus::read_bug_log(dir.path()).unwrap();
        assert_eq!(log, r.bugs);
        let (g, rec) = super::super::corpus::load_case(&dir.path().join(&r.bugs[0].graph_file)).unwrap();
        assert_eq!(fingerprint(&g), rec.fingerprint);
        assert_eq!(rec.verdict.oracle.map(|o| o.to_string()), Some(r.bugs[0].oracle.clone()));
    }

    #[test]
    fn p_one_stays_at_level0() {
        let mut cfg = small(100, 3);
        cfg.p0 = 1.0;
        let r = run_campaign(&cfg).unwrap();
        assert_eq!(r.cases_at(ConstraintLevel::Unconstrained), 100);
        for outcome in r.outcomes["level0"].keys() {
            assert!(["pass", "crash", "expected_rejection"].contains(&outcome.as_str()), "{outcome}");
        }
    }

    #[test]
    fn planned_cases_ignore_parallelism() {
        let a = small(10, 4);
        let b = CampaignConfig { parallelism: 4, ..a.clone() };
        for i in 0..10 {
            assert_eq!(
                PlannedCase::new(&a, i, ConstraintLevel::Constrained),
                PlannedCase::new(&b, i, ConstraintLevel::Constrained)
            );
        }
    }

    #[test]
    fn parallel_clean_campaign() {
        let cfg = CampaignConfig { parallelism: 4, ..small(100, 5) };
        let r = run_campaign(&cfg).unwrap();
        assert_eq!(r.iterations, 100);
        assert_eq!(r.new_bugs, 0);
    }
}

//! Hyper-parameter sweeps over p0 and alpha.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::campaign::{run_campaign, PPoint};
use super::config::{CampaignConfig, ConfigError};
use super::{derive_seed, HarnessError};

const STREAM_SWEEP: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub p0: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl SweepGrid {
    /// `p0` from `lo` to `hi` inclusive in `steps` equal intervals.
    pub fn p0_range(lo: f64, hi: f64, steps: usize, alpha: f64) -> Self {
        let p0 = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps.max(1) as f64).collect();
        SweepGrid { p0, alpha: vec![alpha] }
    }

    /// Grid points in p0-major order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.p0.iter().flat_map(|&p| self.alpha.iter().map(move |&a| (p, a))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p0: f64,
    pub alpha: f64,
    pub master_seed: u64,
    pub iterations: usize,
    pub new_bugs: usize,
    pub bugs_by_oracle: BTreeMap<String, usize>,
    pub final_p: f64,
    pub p_trajectory: Vec<PPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub master_seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep reports serialize");
        s.push('\n');
        s
    }

    /// One row per grid point.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["p0", "alpha", "master_seed", "iterations", "new_bugs", "o1", "o2", "o3", "final_p"])
            .expect("in-memory csv");
        for p in &self.points {
            let by = |k: &str| p.bugs_by_oracle.get(k).copied().unwrap_or(0).to_string();
            w.write_record([
                p.p0.to_string(),
                p.alpha.to_string(),
                p.master_seed.to_string(),
                p.iterations.to_string(),
                p.new_bugs.to_string(),
                by("O1"),
                by("O2"),
                by("O3"),
                p.final_p.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// Runs one sub-campaign per grid point. Each point gets its own derived
/// master seed and, if the base config has a corpus, its own subdirectory.
pub fn sweep(base: &CampaignConfig, grid: &SweepGrid) -> Result<SweepReport, HarnessError> {
    let points = grid.points();
    if points.is_empty() {
        return Err(ConfigError::Invalid("sweep grid is empty".into()).into());
    }
    let mut out = Vec::with_capacity(points.len());
    for (k, (p0, alpha)) in points.into_iter().enumerate() {
        let cfg = CampaignConfig {
            p0,
            alpha,
            master_seed: derive_seed(base.master_seed, k as u64, STREAM_SWEEP),
            corpus_dir: base.corpus_dir.as_ref().map(|d| d.join(format!("point-{k:03}"))),
            report_path: None,
            ..base.clone()
        };
        let r = run_campaign(&cfg)?;
        let mut bugs_by_oracle = BTreeMap::new();
        for b in &r.bugs {
            *bugs_by_oracle.entry(b.oracle.clone()).or_default() += 1;
        }
        out.push(SweepPoint {
            p0,
            alpha,
            master_seed: cfg.master_seed,
            iterations: r.iterations,
            new_bugs: r.new_bugs,
            bugs_by_oracle,
            final_p: r.final_p,
            p_trajectory: r.p_trajectory,
        });
    }
    Ok(SweepReport { master_seed: base.master_seed, points: out })
}

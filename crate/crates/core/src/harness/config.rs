use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generator::{ConstraintLevel, GenConfig, KindWeights, ShapePolicy};
use crate::oracles::CaseConfig;
use crate::relaxation::DedupConfig;

use super::adapter::AdapterSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Inclusive range the per-case node count is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeNumRange {
    pub min: usize,
    pub max: usize,
}

impl Default for NodeNumRange {
    fn default() -> Self {
        NodeNumRange { min: 10, max: 30 }
    }
}

/// Everything that determines a campaign. Together with `master_seed` it
/// fixes the campaign byte for byte at parallelism 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub iterations: usize,
    /// Optional wall-clock budget; no new cases start once it is spent.
    pub max_seconds: Option<f64>,
    pub master_seed: u64,
    pub p0: f64,
    pub alpha: f64,
    pub node_num: NodeNumRange,
    pub parallelism: usize,
    pub corpus_dir: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub dedup: DedupConfig,
    pub case: CaseConfig,
    pub shape: ShapePolicy,
    pub weights: KindWeights,
    pub adapters: Vec<AdapterSpec>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            iterations: 1000,
            max_seconds: None,
            master_seed: 0,
            p0: 0.6,
            alpha: 0.01,
            node_num: NodeNumRange::default(),
            parallelism: 1,
            corpus_dir: None,
            report_path: None,
            dedup: DedupConfig::default(),
            case: CaseConfig::default(),
            shape: ShapePolicy::default(),
            weights: KindWeights::default(),
            adapters: Vec::new(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if let Some(s) = self.max_seconds {
            if !(s > 0.0) {
                return bad(format!("max_seconds must be positive, got {s}"));
            }
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad(format!("p0 must lie in [0, 1], got {}", self.p0));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.node_num.min == 0 || self.node_num.min > self.node_num.max {
            return bad(format!("node_num needs 1 <= min <= max, got {}..={}", self.node_num.min, self.node_num.max));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if !self.dedup.is_valid() {
            return bad("dedup needs similarity_threshold in (0, 1] and shingle_size >= 1".into());
        }
        if self.case.input_draws == 0 {
            return bad("case.input_draws must be at least 1".into());
        }
        if !(self.case.rel_tol >= 0.0) {
            return bad("case.rel_tol must be nonnegative".into());
        }
        self.gen_config(1, ConstraintLevel::Constrained, 0)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for a in &self.adapters {
            if a.command.is_empty() {
                return bad(format!("adapter {:?} has an empty command", a.name));
            }
            if !(a.timeout_secs > 0.0) {
                return bad(format!("adapter {:?} needs a positive timeout", a.name));
            }
        }
        Ok(())
    }

    pub fn gen_config(&self, node_num: usize, level: ConstraintLevel, seed: u64) -> GenConfig {
        GenConfig { node_num, level, seed, shape: self.shape.clone(), weights: self.weights.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::{PassKind, SeededBug};

    #[test]
    fn parses_documented_example() {
        let cfg = CampaignConfig::from_toml(
            r#"
iterations = 500
master_seed = 7
p0 = 0.6
alpha = 0.01
parallelism = 2
corpus_dir = "corpus"

[node_num]
min = 5
max = 40

[dedup]
similarity_threshold = 0.9

[case]
input_draws = 2
faults = ["fold-umod"]
pipelines = [["inline", "fold_constant"]]

[[adapters]]
name = "ref"
command = ["optfuzz-ref-adapter", "--mode", "echo"]
"#,
        )
        .unwrap();
        assert_eq!(cfg.iterations, 500);
        assert_eq!(cfg.node_num, NodeNumRange { min: 5, max: 40 });
        assert!(cfg.case.faults.has(SeededBug::FoldUmod));
        assert_eq!(cfg.case.pipelines, Some(vec![vec![PassKind::Inline, PassKind::FoldConstant]]));
        assert_eq!(cfg.adapters[0].timeout_secs, 10.0);
        assert_eq!(cfg.case.random_pipelines, 2);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = CampaignConfig { master_seed: 3, ..CampaignConfig::default() };
        assert_eq!(CampaignConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "p0 = 1.5",
            "alpha = 0.0",
            "iterations = 0",
            "parallelism = 0",
            "[node_num]\nmin = 4\nmax = 2",
            "[case]\nfaults = [\"no-such-bug\"]",
            "[case]\npipelines = [[\"no_such_pass\"]]",
            "bogus = 1",
            "[weights]\nvariable = 0.0\nconstant = 0.0",
        ] {
            assert!(CampaignConfig::from_toml(text).is_err(), "{text}");
        }
    }
}

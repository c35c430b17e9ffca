//! Constraint-level feedback loop and trace-based bug deduplication.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::generator::ConstraintLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub similarity_threshold: f64,
    pub shingle_size: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            similarity_threshold: 0.90,
            shingle_size: 3,
        }
    }
}

impl DedupConfig {
    pub fn is_valid(&self) -> bool {
        self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0 && self.shingle_size >= 1
    }
}

/// Token shingle multiset of one normalized trace, with its squared
/// Euclidean norm. Counts are small integers, so sums are exact and
/// identical traces score exactly 1.
#[derive(Debug, Clone)]
struct Shingles {
    counts: BTreeMap<String, f64>,
    norm2: f64,
}

impl Shingles {
    fn new(trace: &str, k: usize) -> Self {
        let tokens = tokenize(trace);
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        if !tokens.is_empty() {
            // Traces shorter than one shingle count as a single shingle.
            let k = k.min(tokens.len());
            for w in tokens.windows(k) {
                *counts.entry(w.join(" ")).or_default() += 1.0;
            }
        }
        let norm2 = counts.values().map(|c| c * c).sum::<f64>();
        Shingles { counts, norm2 }
    }

    fn cosine(&self, other: &Shingles) -> f64 {
        match (self.counts.is_empty(), other.counts.is_empty()) {
            (true, true) => return 1.0,
            (true, false) | (false, true) => return 0.0,
            _ => {}
        }
        let (small, large) = if self.counts.len() <= other.counts.len() { (self, other) } else { (other, self) };
        let dot: f64 = small
            .counts
            .iter()
            .filter_map(|(s, c)| large.counts.get(s).map(|d| c * d))
            .sum();
        (dot / (self.norm2 * other.norm2).sqrt()).clamp(0.0, 1.0)
    }
}

fn normalizers() -> &'static [(Regex, &'static str)] {
    static R: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    R.get_or_init(|| {
        vec![
            (Regex::new(r"0x[0-9a-f]+").unwrap(), " <hex> "),
            (Regex::new(r"(?:[a-z]:)?(?:[\w.\-]*/)+[\w.\-]+").unwrap(), " <path> "),
            (Regex::new(r"\b\d+(?:\.\d+)?\b").unwrap(), " <num> "),
        ]
    })
}

/// Lowercases and replaces hex addresses, file paths and numbers by
/// placeholders. Numbers glued to letters (`int16`, `float32`) are kept.
pub fn normalize_trace(trace: &str) -> String {
    let mut s = trace.to_lowercase();
    for (re, rep) in normalizers() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    tokenize(&s).join(" ")
}

fn tokenize(s: &str) -> Vec<String> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN.get_or_init(|| Regex::new(r"<\w+>|[\w]+").unwrap());
    re.find_iter(s).map(|m| m.as_str().to_string()).collect()
}

/// Cosine similarity of shingle multisets of the normalized traces.
pub fn trace_similarity(a: &str, b: &str, shingle_size: usize) -> f64 {
    let a = Shingles::new(&normalize_trace(a), shingle_size);
    let b = Shingles::new(&normalize_trace(b), shingle_size);
    a.cosine(&b)
}

/// Mutable campaign-wide state: the level-0 probability and the bug history.
#[derive(Debug, Clone)]
pub struct CampaignState {
    p: f64,
    alpha: f64,
    rng: ChaCha8Rng,
    history: Vec<String>,
    shingles: Vec<Shingles>,
    untraced: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelaxationError {
    #[error("p0 must lie in [0, 1], got {0}")]
    BadP0(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

impl CampaignState {
    pub fn new(p0: f64, alpha: f64, seed: u64) -> Result<Self, RelaxationError> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(RelaxationError::BadP0(p0));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RelaxationError::BadAlpha(alpha));
        }
        Ok(CampaignState {
            p: p0,
            alpha,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: Vec::new(),
            shingles: Vec::new(),
            untraced: BTreeSet::new(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Recorded normalized traces, in recording order.
    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn select_level(&mut self) -> ConstraintLevel {
        if self.rng.gen::<f64>() < self.p {
            ConstraintLevel::Unconstrained
        } else {
            ConstraintLevel::Constrained
        }
    }

    pub fn update_on_new_bug(&mut self, level: ConstraintLevel) {
        self.p = match level {
            ConstraintLevel::Unconstrained => (self.p + self.alpha).min(1.0),
            ConstraintLevel::Constrained => (self.p - self.alpha).max(0.0),
        };
    }

    /// Highest similarity of `trace` against the recorded history.
    pub fn max_similarity(&self, trace: &str, d: &DedupConfig) -> f64 {
        let s = Shingles::new(&normalize_trace(trace), d.shingle_size);
        self.shingles.iter().map(|h| h.cosine(&s)).fold(0.0, f64::max)
    }

    /// True iff every recorded trace is less similar than the threshold;
    /// a new trace is appended to the history.
    pub fn is_new_bug(&mut self, trace: &str, d: &DedupConfig) -> bool {
        let normalized = normalize_trace(trace);
        let s = Shingles::new(&normalized, d.shingle_size);
        if self.shingles.iter().any(|h| h.cosine(&s) >= d.similarity_threshold) {
            return false;
        }
        self.history.push(normalized);
        self.shingles.push(s);
        true
    }

    /// Verdicts without a trace are keyed by oracle kind and graph
    /// fingerprint; returns true the first time a key is seen.
    pub fn is_new_untraced(&mut self, oracle: &str, graph_fingerprint: &str) -> bool {
        self.untraced.insert(format!("{oracle}:{graph_fingerprint}"))
    }
}

/// One line of the persisted bug history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugRecord {
    pub id: usize,
    /// Campaign iteration that produced the case.
    pub iteration: usize,
    pub level: ConstraintLevel,
    pub oracle: String,
    pub outcome: String,
    /// Normalized trace, or `oracle:fingerprint` for untraced verdicts.
    pub key: String,
    #[serde(default)]
    pub untraced: bool,
    /// Graph file relative to the corpus directory; empty without a corpus.
    pub graph_file: String,
    pub gen_seed: u64,
    pub case_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_extremes() {
        let mut s = CampaignState::new(1.0, 0.01, 0).unwrap();
        assert!((0..1000).all(|_| s.select_level() == ConstraintLevel::Unconstrained));
        let mut s = CampaignState::new(0.0, 0.01, 0).unwrap();
        assert!((0..1000).all(|_| s.select_level() == ConstraintLevel::Constrained));
    }

    #[test]
    fn level_frequency() {
        let mut s = CampaignState::new(0.6, 0.01, 17).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| s.select_level() == ConstraintLevel::Unconstrained).count();
        assert!((zeros as f64 / n as f64 - 0.6).abs() <= 0.01);
    }

    #[test]
    fn update_rule() {
        let mut s = CampaignState::new(0.5, 0.01, 0).unwrap();
        s.update_on_new_bug(ConstraintLevel::Unconstrained);
        assert!((s.p() - 0.51).abs() < 1e-12);
        let mut s = CampaignState::new(0.5, 0.01, 0).unwrap();
        s.update_on_new_bug(ConstraintLevel::Constrained);
        assert!((s.p() - 0.49).abs() < 1e-12);
        let mut s = CampaignState::new(1.0, 0.01, 0).unwrap();
        s.update_on_new_bug(ConstraintLevel::Unconstrained);
        assert_eq!(s.p(), 1.0);
    }

    #[test]
    fn bad_parameters() {
        assert!(CampaignState::new(1.5, 0.01, 0).is_err());
        assert!(CampaignState::new(0.5, 0.0, 0).is_err());
        assert!(CampaignState::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_trace("Panic at /src/fold.rs:120 addr 0xDEAD: int16 value 42"),
            "panic at <path> <num> addr <hex> int16 value <num>"
        );
    }

    #[test]
    fn similarity_basics() {
        let t = "ERROR type_mismatch at main.body.0: add expects int32 and int32";
        assert_eq!(trace_similarity(t, t, 3), 1.0);
        assert_eq!(trace_similarity("alpha beta gamma", "delta epsilon zeta", 3), 0.0);
        assert_eq!(trace_similarity("", "", 3), 1.0);
        assert_eq!(trace_similarity("", "x", 3), 0.0);
        let moved = "ERROR type_mismatch at main.body.7: add expects int32 and int32";
        assert_eq!(trace_similarity(t, moved, 3), 1.0);
    }

    #[test]
    fn dedup_records_once() {
        let d = DedupConfig::default();
        let mut s = CampaignState::new(0.5, 0.01, 0).unwrap();
        assert!(s.is_new_bug("panic in fold_constant while folding right_shift", &d));
        assert!(!s.is_new_bug("panic in fold_constant while folding right_shift", &d));
        assert!(s.is_new_bug("vm result differs from tree backend on negative", &d));
        assert_eq!(s.history().len(), 2);
        assert!(s.is_new_untraced("O2", "abc"));
        assert!(!s.is_new_untraced("O2", "abc"));
        assert!(s.is_new_untraced("O3", "abc"));
    }
}

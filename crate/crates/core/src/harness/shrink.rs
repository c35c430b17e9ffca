//! Greedy failure-preserving graph reduction.

use crate::generator::ConstraintLevel;
use crate::graph_model::{ComputationalGraph, NodeId, NodeInfoTable};
use crate::oracles::{run_case, CaseConfig, FuzzVerdict};
use crate::relaxation::{trace_similarity, DedupConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("the verdict no longer reproduces on the original graph")]
pub struct NotReproducible;

/// How a candidate graph is re-run and compared against the target verdict.
#[derive(Debug, Clone)]
pub struct Reproducer<'a> {
    pub level: ConstraintLevel,
    pub case: &'a CaseConfig,
    pub case_seed: u64,
    pub target: &'a FuzzVerdict,
    pub dedup: &'a DedupConfig,
}

impl Reproducer<'_> {
    /// Runs `g` and returns its verdict if it matches the target: same
    /// outcome and oracle and, for traced verdicts, a similar trace.
    pub fn check(&self, g: &ComputationalGraph) -> Option<FuzzVerdict> {
        let t = NodeInfoTable::rebuild(g);
        let v = run_case(g, &t, self.level, self.case, self.case_seed);
        let same_class = v.outcome == self.target.outcome && v.oracle == self.target.oracle;
        let similar = match (&v.trace, &self.target.trace) {
            (Some(a), Some(b)) => trace_similarity(a, b, self.dedup.shingle_size) >= self.dedup.similarity_threshold,
            (None, None) => true,
            _ => false,
        };
        (same_class && similar).then_some(v)
    }

    /// True iff no single-node removal (with its consumers) keeps the failure.
    pub fn is_one_minimal(&self, g: &ComputationalGraph) -> bool {
        g.ids().all(|id| self.check(&g.remove_with_consumers(id)).is_none())
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkOutcome {
    pub graph: ComputationalGraph,
    pub verdict: FuzzVerdict,
    /// Graphs executed, including the initial replay.
    pub attempts: usize,
}

/// Repeatedly deletes any node (and its transitive consumers) whose removal
/// keeps the failure, until a full sweep deletes nothing. The result is
/// 1-minimal with respect to single-node removal.
pub fn shrink(g: &ComputationalGraph, r: &Reproducer<'_>) -> Result<ShrinkOutcome, NotReproducible> {
    let mut verdict = r.check(g).ok_or(NotReproducible)?;
    let mut cur = g.clone();
    let mut attempts = 1;
    loop {
        let mut changed = false;
        // Later nodes first: their removal drops fewer consumers, and ids
        // below the cursor stay valid after a deletion.
        let mut i = cur.len();
        while i > 0 {
            i -= 1;
            if i >= cur.len() {
                continue;
            }
            let cand = cur.remove_with_consumers(NodeId(i));
            attempts += 1;
            if let Some(v) = r.check(&cand) {
                cur = cand;
                verdict = v;
                changed = true;
            }
        }
        if !changed {
            return Ok(ShrinkOutcome { graph: cur, verdict, attempts });
        }
    }
}

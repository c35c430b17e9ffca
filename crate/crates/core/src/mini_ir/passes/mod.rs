//! Optimization passes. Every pass takes a type-annotated module and returns
//! a module with identical observable behavior; [`Pipeline::run`] re-checks
//! types after each application.

mod anf;
mod canon;
mod cse;
mod dce;
mod fold;
mod inline;
mod simplify;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::expr::Module;
use super::faults::{Faults, SeededBug, UnknownBug};
use super::typeck::{infer_types, TypeError};

pub use anf::{is_a_normal_form, to_a_normal_form};
pub use canon::canonicalize_ops;
pub use cse::eliminate_common_subexpr;
pub use dce::dead_code_elimination;
pub use fold::fold_constant;
pub use inline::{inline, INLINE_MAX_SIZE};
pub use simplify::simplify_expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PassKind {
    FoldConstant,
    DeadCodeElimination,
    EliminateCommonSubexpr,
    Inline,
    SimplifyExpr,
    ToANormalForm,
    CanonicalizeOps,
}

impl PassKind {
    /// Order of the full pipeline.
    pub const ALL: [PassKind; 7] = [
        PassKind::Inline,
        PassKind::FoldConstant,
        PassKind::SimplifyExpr,
        PassKind::CanonicalizeOps,
        PassKind::ToANormalForm,
        PassKind::EliminateCommonSubexpr,
        PassKind::DeadCodeElimination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassKind::FoldConstant => "fold_constant",
            PassKind::DeadCodeElimination => "dead_code_elimination",
            PassKind::EliminateCommonSubexpr => "eliminate_common_subexpr",
            PassKind::Inline => "inline",
            PassKind::SimplifyExpr => "simplify_expr",
            PassKind::ToANormalForm => "to_a_normal_form",
            PassKind::CanonicalizeOps => "canonicalize_ops",
        }
    }

    pub fn apply(self, m: &Module, faults: &Faults) -> Module {
        match self {
            PassKind::FoldConstant => fold::run(m, faults),
            PassKind::DeadCodeElimination => dce::run(m, faults),
            PassKind::EliminateCommonSubexpr => cse::run(m, faults),
            PassKind::Inline => inline::run(m, faults),
            PassKind::SimplifyExpr => simplify_expr(m),
            PassKind::ToANormalForm => to_a_normal_form(m),
            PassKind::CanonicalizeOps => canonicalize_ops(m),
        }
    }
}

impl fmt::Display for PassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pass `{0}`")]
pub struct UnknownPass(pub String);

impl FromStr for PassKind {
    type Err = UnknownPass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PassKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPass(s.to_string()))
    }
}

impl TryFrom<String> for PassKind {
    type Error = UnknownPass;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PassKind> for String {
    fn from(p: PassKind) -> String {
        p.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(TypeError),
    #[error("{error} (after {pass})")]
    Pass { pass: PassKind, error: TypeError },
}

/// An ordered list of passes plus the seeded defects active in them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pipeline {
    pub passes: Vec<PassKind>,
    pub faults: Faults,
}

impl Pipeline {
    pub fn new(passes: Vec<PassKind>) -> Self {
        Pipeline { passes, faults: Faults::none() }
    }

    pub fn full() -> Self {
        Pipeline::new(PassKind::ALL.to_vec())
    }

    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    /// Returns a copy of the pipeline with the seeded defect `bug_id` active.
    pub fn inject_bug(&self, bug_id: &str) -> Result<Pipeline, UnknownBug> {
        let bug: SeededBug = bug_id.parse()?;
        let mut out = self.clone();
        out.faults.insert(bug);
        Ok(out)
    }

    /// A random nonempty subset of the passes in random order.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, faults: &Faults) -> Pipeline {
        let mut passes = PassKind::ALL.to_vec();
        passes.shuffle(rng);
        let n = rng.gen_range(1..=passes.len());
        passes.truncate(n);
        Pipeline { passes, faults: faults.clone() }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.passes.iter().map(|p| p.name()).collect()
    }

    /// Type-checks `m`, then applies each pass and re-checks its output.
    pub fn run(&self, m: &Module) -> Result<Module, PipelineError> {
        let mut cur = infer_types(m).map_err(PipelineError::Input)?;
        for pass in &self.passes {
            let next = pass.apply(&cur, &self.faults);
            cur = infer_types(&next).map_err(|error| PipelineError::Pass { pass: *pass, error })?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in PassKind::ALL {
            assert_eq!(p.name().parse::<PassKind>().unwrap(), p);
        }
        assert!("fuse_ops".parse::<PassKind>().is_err());
    }

    #[test]
    fn inject_unknown_bug() {
        assert_eq!(Pipeline::full().inject_bug("nope"), Err(UnknownBug("nope".into())));
        let p = Pipeline::full().inject_bug("fold-umod").unwrap();
        assert!(p.faults.has(SeededBug::FoldUmod));
        assert_eq!(p.passes, Pipeline::full().passes);
    }
}

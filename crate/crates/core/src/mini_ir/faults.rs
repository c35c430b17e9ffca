//! Catalog of deliberately injectable defects, used to check that the
//! oracles catch real miscompilations.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracles::OracleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SeededBug {
    /// fold_constant folds unsigned `floor_mod` to its left operand.
    FoldUmod,
    /// eliminate_common_subexpr keys constants by type only.
    CseMerge,
    /// inline binds the last parameter to the first argument when their
    /// types agree.
    InlineDropArg,
    /// dead_code_elimination does not see uses inside tuples.
    DceLive,
    /// the vm backend compiles `negative` as `copy`.
    VmNegative,
    /// fold_constant panics when folding `right_shift`.
    FoldShiftPanic,
}

impl SeededBug {
    pub const ALL: [SeededBug; 6] = [
        SeededBug::FoldUmod,
        SeededBug::CseMerge,
        SeededBug::InlineDropArg,
        SeededBug::DceLive,
        SeededBug::VmNegative,
        SeededBug::FoldShiftPanic,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SeededBug::FoldUmod => "fold-umod",
            SeededBug::CseMerge => "cse-merge",
            SeededBug::InlineDropArg => "inline-drop-arg",
            SeededBug::DceLive => "dce-live",
            SeededBug::VmNegative => "vm-negative",
            SeededBug::FoldShiftPanic => "fold-shift-panic",
        }
    }

    /// The oracle that is expected to report this defect.
    pub fn expected_oracle(self) -> OracleKind {
        match self {
            SeededBug::FoldUmod | SeededBug::CseMerge | SeededBug::InlineDropArg => OracleKind::O2,
            SeededBug::VmNegative => OracleKind::O3,
            SeededBug::DceLive | SeededBug::FoldShiftPanic => OracleKind::O1,
        }
    }
}

impl fmt::Display for SeededBug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown seeded bug `{0}`")]
pub struct UnknownBug(pub String);

impl FromStr for SeededBug {
    type Err = UnknownBug;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SeededBug::ALL
            .into_iter()
            .find(|b| b.id() == s)
            .ok_or_else(|| UnknownBug(s.to_string()))
    }
}

impl TryFrom<String> for SeededBug {
    type Error = UnknownBug;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SeededBug> for String {
    fn from(b: SeededBug) -> String {
        b.id().to_string()
    }
}

/// Set of active seeded defects. Empty for the reference toolchain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Faults(BTreeSet<SeededBug>);

impl Faults {
    pub fn none() -> Self {
        Faults::default()
    }

    pub fn has(&self, bug: SeededBug) -> bool {
        self.0.contains(&bug)
    }

    pub fn insert(&mut self, bug: SeededBug) {
        self.0.insert(bug);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = SeededBug> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<SeededBug> for Faults {
    fn from_iter<I: IntoIterator<Item = SeededBug>>(iter: I) -> Self {
        Faults(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for b in SeededBug::ALL {
            assert_eq!(b.id().parse::<SeededBug>().unwrap(), b);
        }
        assert_eq!("nope".parse::<SeededBug>(), Err(UnknownBug("nope".into())));
    }
}

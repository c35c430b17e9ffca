//! Generation-based fuzzing of graph-level compiler optimizations.
//!
//! The crate generates computational graphs under a tunable constraint
//! level ([`generator`]), lowers them into a small functional tensor IR with
//! optimization passes and three execution backends ([`mini_ir`]), and
//! classifies each run through crash, optimization-inconsistency and
//! cross-backend oracles ([`oracles`]). [`relaxation`] adapts the constraint
//! level from bug feedback and deduplicates traces; [`harness`] drives whole
//! campaigns, shrinks failures and talks to external compiler adapters.

pub mod generator;
pub mod graph_model;
pub mod harness;
pub mod mini_ir;
pub mod opset;
pub mod oracles;
pub mod relaxation;

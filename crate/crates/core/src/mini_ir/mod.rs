//! A small functional tensor IR: lowering from computational graphs, type
//! inference, optimization passes, execution backends and function-rewrite
//! mutators.

pub mod backend;
mod expr;
pub mod faults;
mod lower;
mod mutate;
pub mod passes;
pub mod text;
mod typeck;

pub use backend::{run_backend, run_backend_with, Backend, RuntimeError};
pub use expr::{Expr, Function, Module, NameGen, Param, Type, MAIN};
pub use faults::{Faults, SeededBug, UnknownBug};
pub use lower::{func_name, graph_inputs, lower, node_var, LoweringError};
pub use mutate::{mutate_function_rewrite, NoTarget, RewriteStrategy};
pub use passes::{PassKind, Pipeline, PipelineError};
pub use text::{parse_module, print_module, IrParseError};
pub use typeck::{infer_types, main_type, type_of, TypeError, TypeErrorKind};

//! Execution backends. All of them dispatch element math to the shared
//! kernels, so on a well-typed module they must agree exactly.

mod graph;
mod tree;
mod vm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expr::{Module, Type};
use super::faults::Faults;
use crate::graph_model::{TensorType, TensorValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Recursive evaluation of the expression tree.
    Tree,
    /// Symbolic flattening of main into a tape of primitive applications.
    Graph,
    /// Compilation to stack bytecode.
    Vm,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Tree, Backend::Graph, Backend::Vm];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Tree => "tree",
            Backend::Graph => "graph",
            Backend::Vm => "vm",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ERROR {kind} at {path}: {message}")]
pub struct RuntimeError {
    pub kind: &'static str,
    pub path: String,
    pub message: String,
}

impl RuntimeError {
    pub(crate) fn new(kind: &'static str, path: impl Into<String>, message: impl Into<String>) -> Self {
        RuntimeError { kind, path: path.into(), message: message.into() }
    }
}

/// Nesting limit for calls; modules produced from graphs never come close.
pub(crate) const MAX_CALL_DEPTH: usize = 512;

/// Runs main on `inputs` (keyed by parameter name). Tuple results are
/// flattened left to right.
pub fn run_backend(
    m: &Module,
    inputs: &BTreeMap<String, TensorValue>,
    backend: Backend,
) -> Result<Vec<TensorValue>, RuntimeError> {
    run_backend_with(m, inputs, backend, &Faults::none())
}

pub fn run_backend_with(
    m: &Module,
    inputs: &BTreeMap<String, TensorValue>,
    backend: Backend,
    faults: &Faults,
) -> Result<Vec<TensorValue>, RuntimeError> {
    let args = main_args(m, inputs)?;
    match backend {
        Backend::Tree => tree::run(m, args),
        Backend::Graph => graph::run(m, args),
        Backend::Vm => vm::run(m, args, faults),
    }
}

/// Checks `inputs` against main's parameters and orders them.
fn main_args(m: &Module, inputs: &BTreeMap<String, TensorValue>) -> Result<Vec<TensorValue>, RuntimeError> {
    let main = m.main().ok_or_else(|| RuntimeError::new("bad_module", "@main", "module has no main"))?;
    main.params
        .iter()
        .map(|p| {
            let v = inputs
                .get(&p.name)
                .ok_or_else(|| RuntimeError::new("bad_input", "@main", format!("no input for %{}", p.name)))?;
            if p.ty != Type::Tensor(TensorType::of(v)) {
                return Err(RuntimeError::new(
                    "bad_input",
                    "@main",
                    format!("%{} expects {}, got {}", p.name, p.ty, TensorType::of(v)),
                ));
            }
            Ok(v.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{DType, Shape};
    use crate::mini_ir::text::parse_module;

    fn run_all(src: &str, inputs: &[(&str, TensorValue)]) -> Vec<Vec<TensorValue>> {
        let m = parse_module(src).unwrap();
        let inputs: BTreeMap<String, TensorValue> = inputs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Backend::ALL.iter().map(|b| run_backend(&m, &inputs, *b).unwrap()).collect()
    }

    fn i32s(shape: &[usize], v: &[i64]) -> TensorValue {
        TensorValue::from_i64s(DType::Int32, Shape(shape.to_vec()), v).unwrap()
    }

    #[test]
    fn constant_main() {
        for out in run_all("def @main() { const int32 () [5] }", &[]) {
            assert_eq!(out, vec![i32s(&[], &[5])]);
        }
    }

    #[test]
    fn calls_closures_and_tuples() {
        let src = "\
def @f(%a: int32(2), %b: int32()) { let %s = add(%a, %b); tuple(%s, negative(%s)) }
def @g() { fn(%x: int32(2)) { @f(%x, const int32 () [10]).1 } }
def @main(%x: int32(2)) {
  let %k = const int32 () [1];
  let %h = fn(%y: int32(2)) { subtract(%y, %k) };
  tuple(@g()(%x), %h(%x), @f(%x, %k))
}
";
        let expected = vec![i32s(&[2], &[-11, -12]), i32s(&[2], &[0, 1]), i32s(&[2], &[2, 3]), i32s(&[2], &[-2, -3])];
        for out in run_all(src, &[("x", i32s(&[2], &[1, 2]))]) {
            assert_eq!(out, expected);
        }
    }

    #[test]
    fn bad_inputs() {
        let m = parse_module("def @main(%x: int32()) { %x }").unwrap();
        for b in Backend::ALL {
            assert_eq!(run_backend(&m, &BTreeMap::new(), b).unwrap_err().kind, "bad_input");
            let wrong = [("x".to_string(), i32s(&[1], &[1]))].into_iter().collect();
            assert_eq!(run_backend(&m, &wrong, b).unwrap_err().kind, "bad_input");
        }
    }

    #[test]
    fn seeded_vm_fault() {
        let m = parse_module("def @main() { negative(const int32 () [3]) }").unwrap();
        let faults: Faults = [crate::mini_ir::faults::SeededBug::VmNegative].into_iter().collect();
        let inputs = BTreeMap::new();
        assert_eq!(run_backend_with(&m, &inputs, Backend::Tree, &faults).unwrap(), vec![i32s(&[], &[-3])]);
        assert_eq!(run_backend_with(&m, &inputs, Backend::Vm, &faults).unwrap(), vec![i32s(&[], &[3])]);
    }
}

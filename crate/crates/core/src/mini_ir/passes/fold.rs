use crate::graph_model::{DTypeClass, TensorValue};
use crate::mini_ir::expr::{Expr, Module};
use crate::mini_ir::faults::{Faults, SeededBug};
use crate::opset::{eval_elementwise, Op};

/// Evaluates every primitive whose arguments are all constants, propagating
/// let-bound constants into their uses.
pub fn fold_constant(m: &Module) -> Module {
    run(m, &Faults::none())
}

pub(super) fn run(m: &Module, faults: &Faults) -> Module {
    m.map_bodies(|_, body| {
        let mut scope = Vec::new();
        fold(body, &mut scope, faults)
    })
}

type Scope = Vec<(String, Option<TensorValue>)>;

fn lookup<'s>(scope: &'s Scope, v: &str) -> Option<&'s TensorValue> {
    scope.iter().rev().find(|(n, _)| n == v).and_then(|(_, c)| c.as_ref())
}

fn fold(e: Expr, scope: &mut Scope, faults: &Faults) -> Expr {
    match e {
        Expr::Var(v) => match lookup(scope, &v) {
            Some(c) => Expr::Const(c.clone()),
            None => Expr::Var(v),
        },
        e @ (Expr::Const(_) | Expr::FuncRef(_)) => e,
        Expr::Prim { op, args } => {
            let args: Vec<Expr> = args.into_iter().map(|a| fold(a, scope, faults)).collect();
            let consts: Option<Vec<&TensorValue>> = args
                .iter()
                .map(|a| match a {
                    Expr::Const(c) => Some(c),
                    _ => None,
                })
                .collect();
            match consts {
                Some(values) => match evaluate(op, &values, faults) {
                    Some(v) => Expr::Const(v),
                    None => Expr::Prim { op, args },
                },
                None => Expr::Prim { op, args },
            }
        }
        Expr::Let { var, ty, value, body } => {
            let value = fold(*value, scope, faults);
            let c = match &value {
                Expr::Const(c) => Some(c.clone()),
                _ => None,
            };
            scope.push((var.clone(), c));
            let body = fold(*body, scope, faults);
            scope.pop();
            Expr::Let { var, ty, value: Box::new(value), body: Box::new(body) }
        }
        Expr::Closure { params, body } => {
            let n = scope.len();
            scope.extend(params.iter().map(|p| (p.name.clone(), None)));
            let body = fold(*body, scope, faults);
            scope.truncate(n);
            Expr::Closure { params, body: Box::new(body) }
        }
        Expr::Call { callee, args } => Expr::Call {
            callee: Box::new(fold(*callee, scope, faults)),
            args: args.into_iter().map(|a| fold(a, scope, faults)).collect(),
        },
        Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| fold(a, scope, faults)).collect()),
        Expr::Proj { tuple, index } => match fold(*tuple, scope, faults) {
            Expr::Tuple(mut items) if index < items.len() && items.iter().all(Expr::is_atomic) => {
                items.swap_remove(index)
            }
            tuple => Expr::Proj { tuple: Box::new(tuple), index },
        },
    }
}

fn evaluate(op: Op, values: &[&TensorValue], faults: &Faults) -> Option<TensorValue> {
    if op == Op::RightShift && faults.has(SeededBug::FoldShiftPanic) {
        panic!("fold_constant: no folding rule for right_shift on {}", values[0].dtype());
    }
    let out = eval_elementwise(op, values).ok()?;
    if op == Op::FloorMod
        && faults.has(SeededBug::FoldUmod)
        && values[0].dtype().class() == DTypeClass::UnsignedInt
        && values[0].shape() == out.shape()
    {
        return Some(values[0].clone());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::text::{parse_module, print_module};

    fn fold_text(src: &str) -> String {
        print_module(&fold_constant(&parse_module(src).unwrap()))
    }

    #[test]
    fn folds_constant_add() {
        assert_eq!(
            fold_text("def @main() { add(const int32 () [2], const int32 () [3]) }"),
            "def @main() {\n  const int32 () [5]\n}\n"
        );
    }

    #[test]
    fn propagates_through_lets_and_respects_shadowing() {
        let out = fold_text(
            "def @main(%x: int8()) { let %a = const int8 () [2]; let %b = multiply(%a, %a); let %c = fn(%a: int8()) { add(%a, %b) }; %c(%x) }",
        );
        assert!(out.contains("let %b = const int8 () [4];"), "{out}");
        assert!(out.contains("add(%a, const int8 () [4])"), "{out}");
    }

    #[test]
    fn seeded_umod_fault() {
        let m = parse_module("def @main() { floor_mod(const uint8 () [7], const uint8 () [3]) }").unwrap();
        let good = run(&m, &Faults::none());
        let bad = run(&m, &[SeededBug::FoldUmod].into_iter().collect());
        assert_eq!(print_module(&good), "def @main() {\n  const uint8 () [1]\n}\n");
        assert_eq!(print_module(&bad), "def @main() {\n  const uint8 () [7]\n}\n");
    }

    #[test]
    #[should_panic(expected = "right_shift")]
    fn seeded_shift_panic() {
        let m = parse_module("def @main() { right_shift(const int8 () [8], const int8 () [1]) }").unwrap();
        run(&m, &[SeededBug::FoldShiftPanic].into_iter().collect());
    }
}

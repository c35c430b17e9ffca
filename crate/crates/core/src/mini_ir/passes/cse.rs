use std::collections::{BTreeMap, HashMap};

use super::anf::to_a_normal_form;
use crate::mini_ir::expr::{Expr, Module, NameGen};
use crate::mini_ir::faults::{Faults, SeededBug};
use crate::mini_ir::text::print_expr;

/// Normalizes to A-normal form, then replaces every let binding whose value
/// repeats an earlier binding in scope by a reference to the earlier one.
/// Copies (`let %a = %b`) are propagated away as well.
pub fn eliminate_common_subexpr(m: &Module) -> Module {
    run(m, &Faults::none())
}

pub(super) fn run(m: &Module, faults: &Faults) -> Module {
    let anf = to_a_normal_form(m);
    let mut names = NameGen::for_module(&anf);
    let loose_consts = faults.has(SeededBug::CseMerge);
    anf.map_bodies(|_, body| {
        let mut cx = Cse { available: HashMap::new(), subst: BTreeMap::new(), loose_consts };
        cx.expr(body, &mut names)
    })
}

struct Cse {
    /// Printed value → variable holding it.
    available: HashMap<String, String>,
    /// Eliminated variables → their replacement.
    subst: BTreeMap<String, Expr>,
    loose_consts: bool,
}

impl Cse {
    fn key(&self, value: &Expr) -> Option<String> {
        match value {
            Expr::Const(c) if self.loose_consts => Some(format!("const {} {}", c.dtype(), c.shape())),
            Expr::Const(_) | Expr::Prim { .. } | Expr::Tuple(_) | Expr::Proj { .. } | Expr::Call { .. } => {
                Some(print_expr(value))
            }
            _ => None,
        }
    }

    fn expr(&mut self, e: Expr, names: &mut NameGen) -> Expr {
        match e {
            Expr::Let { var, ty, value, body } => {
                let value = self.expr(*value, names);
                if let Expr::Var(_) = value {
                    self.subst.insert(var, value);
                    return self.expr(*body, names);
                }
                if let Some(key) = self.key(&value) {
                    if let Some(prev) = self.available.get(&key) {
                        self.subst.insert(var, Expr::Var(prev.clone()));
                        return self.expr(*body, names);
                    }
                    self.available.insert(key, var.clone());
                }
                let body = self.expr(*body, names);
                Expr::Let { var, ty, value: Box::new(value), body: Box::new(body) }
            }
            Expr::Closure { params, body } => {
                let saved = self.available.clone();
                let body = self.expr(*body, names);
                self.available = saved;
                Expr::Closure { params, body: Box::new(body) }
            }
            // Operands are atomic after normalization.
            e => e.substitute(&self.subst, names),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::text::{parse_module, print_module};

    #[test]
    fn shares_duplicate_subtrees() {
        let m = parse_module("def @main(%x: float32()) { add(sqrt(%x), sqrt(%x)) }").unwrap();
        assert_eq!(
            print_module(&eliminate_common_subexpr(&m)),
            "def @main(%x: float32()) {\n  let %t_1 = sqrt(%x);\n  add(%t_1, %t_1)\n}\n"
        );
    }

    #[test]
    fn distinct_constants_stay_apart_unless_faulty() {
        let m = parse_module(
            "def @main() { let %a = const int8 () [1]; let %b = const int8 () [2]; subtract(%a, %b) }",
        )
        .unwrap();
        let good = print_module(&eliminate_common_subexpr(&m));
        assert!(good.contains("subtract(%a, %b)"), "{good}");
        let bad = print_module(&run(&m, &[SeededBug::CseMerge].into_iter().collect()));
        assert!(bad.contains("subtract(%a, %a)"), "{bad}");
    }
}

use std::collections::BTreeSet;

use crate::mini_ir::expr::{Expr, Module};
use crate::mini_ir::faults::{Faults, SeededBug};

/// Removes let bindings whose variable is never used. All expressions are
/// pure, so any unused binding is dead.
pub fn dead_code_elimination(m: &Module) -> Module {
    run(m, &Faults::none())
}

pub(super) fn run(m: &Module, faults: &Faults) -> Module {
    let blind_tuples = faults.has(SeededBug::DceLive);
    m.map_bodies(|_, body| dce(body, blind_tuples))
}

fn dce(e: Expr, blind_tuples: bool) -> Expr {
    e.map_bottom_up(&mut |e| match e {
        Expr::Let { var, ty, value, body } => {
            let used = if blind_tuples { uses_outside_tuples(&body) } else { body.free_vars() };
            if used.contains(&var) {
                Expr::Let { var, ty, value, body }
            } else {
                *body
            }
        }
        e => e,
    })
}

fn uses_outside_tuples(e: &Expr) -> BTreeSet<String> {
    let stripped = e.clone().map_bottom_up(&mut |e| match e {
        Expr::Tuple(_) => Expr::Tuple(Vec::new()),
        e => e,
    });
    stripped.free_vars()
}

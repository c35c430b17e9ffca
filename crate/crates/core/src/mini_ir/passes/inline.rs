use std::collections::BTreeMap;

use crate::mini_ir::expr::{Expr, Module, NameGen, Param};
use crate::mini_ir::faults::{Faults, SeededBug};

/// Largest callee body, in expression nodes, that gets inlined.
pub const INLINE_MAX_SIZE: usize = 32;

const MAX_ROUNDS: usize = 16;

/// Replaces direct calls to small non-recursive globals by the callee body,
/// with parameters let-bound to the arguments. Repeats until no such call
/// remains.
pub fn inline(m: &Module) -> Module {
    run(m, &Faults::none())
}

pub(super) fn run(m: &Module, faults: &Faults) -> Module {
    let mut names = NameGen::for_module(m);
    let drop_arg = faults.has(SeededBug::InlineDropArg);
    let mut cur = m.clone();
    for _ in 0..MAX_ROUNDS {
        let inlinable: BTreeMap<String, (Vec<Param>, Expr)> = cur
            .functions
            .iter()
            .filter(|(name, f)| f.body.size() <= INLINE_MAX_SIZE && !cur.is_recursive(name))
            .map(|(name, f)| (name.clone(), (f.params.clone(), f.body.clone())))
            .collect();
        let mut changed = false;
        let next = cur.map_bodies(|this, body| {
            body.map_bottom_up(&mut |e| match e {
                Expr::Call { callee, args } => match &*callee {
                    Expr::FuncRef(g) if g != this && inlinable.contains_key(g) => {
                        let (params, body) = &inlinable[g];
                        if params.len() != args.len() {
                            return Expr::Call { callee, args };
                        }
                        changed = true;
                        expand(params, body, args, drop_arg, &mut names)
                    }
                    _ => Expr::Call { callee, args },
                },
                e => e,
            })
        });
        cur = next;
        if !changed {
            break;
        }
    }
    cur
}

fn expand(params: &[Param], body: &Expr, args: Vec<Expr>, drop_arg: bool, names: &mut NameGen) -> Expr {
    let mut renames = BTreeMap::new();
    let fresh: Vec<String> = params
        .iter()
        .map(|p| {
            let n = names.fresh(&p.name);
            renames.insert(p.name.clone(), Expr::Var(n.clone()));
            n
        })
        .collect();
    let body = freshen(body.clone(), &mut renames, names);
    let mut args = args;
    let last = params.len().saturating_sub(1);
    if drop_arg && params.len() >= 2 && params[last].ty == params[0].ty {
        args[last] = args[0].clone();
    }
    params
        .iter()
        .zip(fresh)
        .zip(args)
        .rev()
        .fold(body, |body, ((p, name), arg)| Expr::Let {
            var: name,
            ty: Some(p.ty.clone()),
            value: Box::new(arg),
            body: Box::new(body),
        })
}

/// Renames every binder in `e` to a fresh name.
fn freshen(e: Expr, renames: &mut BTreeMap<String, Expr>, names: &mut NameGen) -> Expr {
    match e {
        Expr::Var(v) => renames.get(&v).cloned().unwrap_or(Expr::Var(v)),
        e @ (Expr::Const(_) | Expr::FuncRef(_)) => e,
        Expr::Prim { op, args } => Expr::Prim { op, args: args.into_iter().map(|a| freshen(a, renames, names)).collect() },
        Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| freshen(a, renames, names)).collect()),
        Expr::Call { callee, args } => Expr::Call {
            callee: Box::new(freshen(*callee, renames, names)),
            args: args.into_iter().map(|a| freshen(a, renames, names)).collect(),
        },
        Expr::Proj { tuple, index } => Expr::Proj { tuple: Box::new(freshen(*tuple, renames, names)), index },
        Expr::Let { var, ty, value, body } => {
            let value = freshen(*value, renames, names);
            let new = names.fresh(&var);
            let saved = renames.insert(var.clone(), Expr::Var(new.clone()));
            let body = freshen(*body, renames, names);
            restore(renames, var, saved);
            Expr::Let { var: new, ty, value: Box::new(value), body: Box::new(body) }
        }
        Expr::Closure { params, body } => {
            let mut saved = Vec::new();
            let params: Vec<Param> = params
                .into_iter()
                .map(|p| {
                    let new = names.fresh(&p.name);
                    saved.push((p.name.clone(), renames.insert(p.name, Expr::Var(new.clone()))));
                    Param { name: new, ty: p.ty }
                })
                .collect();
            let body = freshen(*body, renames, names);
            for (name, old) in saved.into_iter().rev() {
                restore(renames, name, old);
            }
            Expr::Closure { params, body: Box::new(body) }
        }
    }
}

fn restore(renames: &mut BTreeMap<String, Expr>, name: String, old: Option<Expr>) {
    match old {
        Some(e) => renames.insert(name, e),
        None => renames.remove(&name),
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::text::{parse_module, print_module};
    use crate::mini_ir::typeck::infer_types;

    const SRC: &str = "\
def @f(%a: int8(), %b: int8()) { let %c = subtract(%a, %b); %c }
def @main(%x: int8(), %y: int8()) { @f(%y, %x) }
";

    #[test]
    fn inlines_small_calls() {
        let m = parse_module(SRC).unwrap();
        let out = inline(&m);
        assert_eq!(
            print_module(&out).split("def @main").nth(1).unwrap(),
            "(%x: int8(), %y: int8()) {\n  let %a_1: int8() = %y;\n  let %b_2: int8() = %x;\n  let %c_3 = subtract(%a_1, %b_2);\n  %c_3\n}\n"
        );
        infer_types(&out).unwrap();
    }

    #[test]
    fn recursive_and_large_calls_stay() {
        let m = parse_module("def @f(%a: int8()) { @f(%a) }\ndef @main(%x: int8()) { @f(%x) }").unwrap();
        assert_eq!(inline(&m), m);
    }

    #[test]
    fn seeded_fault_rebinds_last_parameter() {
        let m = parse_module(SRC).unwrap();
        let out = print_module(&run(&m, &[SeededBug::InlineDropArg].into_iter().collect()));
        assert!(out.contains("let %b_2: int8() = %y;"), "{out}");
    }
}

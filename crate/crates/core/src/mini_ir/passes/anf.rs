use std::collections::BTreeSet;

use crate::mini_ir::expr::{Expr, Module, NameGen, Param, Type};

/// Binds every compound argument of a primitive, call or tuple to a fresh
/// let variable and flattens nested lets. Binders are renamed where needed
/// so that every name is bound at most once per function.
pub fn to_a_normal_form(m: &Module) -> Module {
    let mut names = NameGen::for_module(m);
    let mut out = m.clone();
    for f in out.functions.values_mut() {
        let mut n = Normalizer { names: &mut names, bound: BTreeSet::new(), renames: Vec::new() };
        let params: Vec<Param> = f.params.iter().map(|p| n.bind_param(p)).collect();
        f.body = n.norm(f.body.clone());
        f.params = params;
    }
    out
}

/// True iff every primitive argument is a variable or a constant.
pub fn is_a_normal_form(m: &Module) -> bool {
    let mut ok = true;
    for f in m.functions.values() {
        f.body.walk(&mut |e| {
            if let Expr::Prim { args, .. } = e {
                ok &= args.iter().all(Expr::is_atomic);
            }
        });
    }
    ok
}

type Binding = (String, Option<Type>, Expr);

struct Normalizer<'a> {
    names: &'a mut NameGen,
    /// Names bound so far in the current function.
    bound: BTreeSet<String>,
    /// Scoped renaming of source names.
    renames: Vec<(String, String)>,
}

impl Normalizer<'_> {
    fn bind(&mut self, name: &str) -> String {
        let new = if self.bound.contains(name) { self.names.fresh(name) } else { name.to_string() };
        self.bound.insert(new.clone());
        self.renames.push((name.to_string(), new.clone()));
        new
    }

    fn bind_param(&mut self, p: &Param) -> Param {
        Param { name: self.bind(&p.name), ty: p.ty.clone() }
    }

    fn resolve(&self, name: &str) -> String {
        self.renames
            .iter()
            .rev()
            .find(|(from, _)| from == name)
            .map(|(_, to)| to.clone())
            .unwrap_or_else(|| name.to_string())
    }

    fn norm(&mut self, e: Expr) -> Expr {
        let mark = self.renames.len();
        let mut binds = Vec::new();
        let result = self.value(e, &mut binds);
        self.renames.truncate(mark);
        wrap(binds, result)
    }

    /// Normalizes `e` into an expression with atomic operands, emitting the
    /// bindings it depends on into `binds`.
    fn value(&mut self, e: Expr, binds: &mut Vec<Binding>) -> Expr {
        match e {
            Expr::Var(v) => Expr::Var(self.resolve(&v)),
            e @ (Expr::Const(_) | Expr::FuncRef(_)) => e,
            Expr::Prim { op, args } => Expr::Prim { op, args: args.into_iter().map(|a| self.atom(a, binds)).collect() },
            Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| self.atom(a, binds)).collect()),
            Expr::Call { callee, args } => {
                let callee = self.atom(*callee, binds);
                let args = args.into_iter().map(|a| self.atom(a, binds)).collect();
                Expr::Call { callee: Box::new(callee), args }
            }
            Expr::Proj { tuple, index } => Expr::Proj { tuple: Box::new(self.atom(*tuple, binds)), index },
            Expr::Closure { params, body } => {
                let mark = self.renames.len();
                let params: Vec<Param> = params.iter().map(|p| self.bind_param(p)).collect();
                let body = self.norm(*body);
                self.renames.truncate(mark);
                Expr::Closure { params, body: Box::new(body) }
            }
            Expr::Let { var, ty, value, body } => {
                let value = self.value(*value, binds);
                let mark = self.renames.len();
                let var = self.bind(&var);
                binds.push((var, ty, value));
                let result = self.value(*body, binds);
                self.renames.truncate(mark);
                result
            }
        }
    }

    fn atom(&mut self, e: Expr, binds: &mut Vec<Binding>) -> Expr {
        let v = self.value(e, binds);
        if v.is_atomic() || matches!(v, Expr::FuncRef(_)) {
            return v;
        }
        let name = self.names.fresh("t");
        self.bound.insert(name.clone());
        binds.push((name.clone(), None, v));
        Expr::Var(name)
    }
}

fn wrap(binds: Vec<Binding>, result: Expr) -> Expr {
    binds.into_iter().rev().fold(result, |body, (var, ty, value)| Expr::Let {
        var,
        ty,
        value: Box::new(value),
        body: Box::new(body),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mini_ir::text::{parse_module, print_module};

    #[test]
    fn binds_compound_arguments() {
        let m = parse_module("def @main(%x: float32()) { add(sqrt(%x), negative(exp(%x))) }").unwrap();
        let out = to_a_normal_form(&m);
        assert!(is_a_normal_form(&out));
        assert!(!is_a_normal_form(&m));
        assert_eq!(
            print_module(&out),
            "def @main(%x: float32()) {\n  let %t_1 = sqrt(%x);\n  let %t_2 = exp(%x);\n  let %t_3 = negative(%t_2);\n  add(%t_1, %t_3)\n}\n"
        );
    }

    #[test]
    fn flattening_keeps_outer_binding_visible() {
        let m = parse_module(
            "def @main(%x: int8()) { let %a = const int8 () [1]; let %b = { let %a = const int8 () [2]; %a }; add(%a, %b) }",
        )
        .unwrap();
        let out = print_module(&to_a_normal_form(&m));
        assert_eq!(
            out,
            "def @main(%x: int8()) {\n  let %a = const int8 () [1];\n  let %a_1 = const int8 () [2];\n  let %b = %a_1;\n  add(%a, %b)\n}\n"
        );
    }
}

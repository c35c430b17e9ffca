use crate::graph_model::{DTypeClass, Scalar, TensorType, TensorValue};
use crate::mini_ir::expr::{Expr, Module, Type};
use crate::mini_ir::typeck::{param_env, type_of};
use crate::opset::Op;

/// Algebraic simplifications that are exact under the kernel semantics:
///
/// * `add(x, 0)`, `multiply(x, 0)`, `subtract(x, x)` on integers
/// * `subtract(x, 0)`, `multiply(x, 1)`, `divide(x, 1)` on integers and floats
/// * `negative(negative(x))`, `logical_not(logical_not(x))`,
///   `bitwise_not(bitwise_not(x))`, `copy(x)`
/// * `logical_and(x, x)`, `logical_or(x, x)`
///
/// A rule returning `x` only fires when `x` already has the result type, so
/// broadcasting is never lost. Float zero means +0.0 only.
pub fn simplify_expr(m: &Module) -> Module {
    m.map_bodies(|name, body| {
        let f = &m.functions[name];
        let mut s = Simplifier { module: m, env: param_env(&f.params), defs: Vec::new() };
        s.expr(body)
    })
}

struct Simplifier<'m> {
    module: &'m Module,
    env: Vec<(String, Type)>,
    /// Let-bound values in scope, `None` for parameters.
    defs: Vec<(String, Option<Expr>)>,
}

impl Simplifier<'_> {
    fn ty(&self, e: &Expr) -> Option<TensorType> {
        match type_of(self.module, &self.env, e) {
            Ok(Type::Tensor(t)) => Some(t),
            _ => None,
        }
    }

    /// The value bound to `v`, provided every variable it mentions still
    /// refers to the same binding at this point.
    fn definition(&self, v: &str) -> Option<&Expr> {
        let pos = self.defs.iter().rposition(|(n, _)| n == v)?;
        let value = self.defs[pos].1.as_ref()?;
        let shadowed = value
            .free_vars()
            .iter()
            .any(|fv| self.defs[pos + 1..].iter().any(|(n, _)| n == fv));
        (!shadowed).then_some(value)
    }

    /// Looks through variables bound to constants or primitives.
    fn resolve<'a>(&'a self, e: &'a Expr) -> &'a Expr {
        match e {
            Expr::Var(v) => match self.definition(v) {
                Some(d @ (Expr::Const(_) | Expr::Prim { .. })) => d,
                _ => e,
            },
            _ => e,
        }
    }

    fn expr(&mut self, e: Expr) -> Expr {
        match e {
            Expr::Let { var, ty, value, body } => {
                let value = self.expr(*value);
                let vty = ty.clone().or_else(|| type_of(self.module, &self.env, &value).ok());
                let Some(vty) = vty else {
                    // Ill-typed input: leave the rest untouched.
                    return Expr::Let { var, ty, value: Box::new(value), body };
                };
                self.env.push((var.clone(), vty));
                self.defs.push((var.clone(), Some(value.clone())));
                let body = self.expr(*body);
                self.env.pop();
                self.defs.pop();
                Expr::Let { var, ty, value: Box::new(value), body: Box::new(body) }
            }
            Expr::Closure { params, body } => {
                let (ne, nd) = (self.env.len(), self.defs.len());
                self.env.extend(param_env(&params));
                self.defs.extend(params.iter().map(|p| (p.name.clone(), None)));
                let body = self.expr(*body);
                self.env.truncate(ne);
                self.defs.truncate(nd);
                Expr::Closure { params, body: Box::new(body) }
            }
            Expr::Prim { op, args } => {
                let args: Vec<Expr> = args.into_iter().map(|a| self.expr(a)).collect();
                let prim = Expr::Prim { op, args };
                self.rewrite(prim)
            }
            Expr::Call { callee, args } => Expr::Call {
                callee: Box::new(self.expr(*callee)),
                args: args.into_iter().map(|a| self.expr(a)).collect(),
            },
            Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| self.expr(a)).collect()),
            Expr::Proj { tuple, index } => Expr::Proj { tuple: Box::new(self.expr(*tuple)), index },
            e => e,
        }
    }

    fn rewrite(&self, prim: Expr) -> Expr {
        let Expr::Prim { op, args } = &prim else { unreachable!() };
        let Some(rt) = self.ty(&prim) else { return prim };
        let class = rt.dtype.class();
        let is_int = matches!(class, DTypeClass::SignedInt | DTypeClass::UnsignedInt);
        let is_float = class == DTypeClass::Float;
        // `x` when it already has the result type
        let keep = |x: &Expr| (self.ty(x).as_ref() == Some(&rt)).then(|| x.clone());
        let zeros = || Expr::Const(TensorValue::zeros(rt.dtype, rt.shape.clone()));
        let is_const = |e: &Expr, pred: fn(&Scalar) -> bool| match self.resolve(e) {
            Expr::Const(c) => c.all(pred),
            _ => false,
        };
        let zero = |e: &Expr| is_const(e, is_pos_zero);
        let one = |e: &Expr| is_const(e, Scalar::is_one);
        let same = |a: &Expr, b: &Expr| matches!((a, b), (Expr::Var(x), Expr::Var(y)) if x == y);

        let out = match (op, args.as_slice()) {
            (Op::Add, [x, z]) | (Op::Add, [z, x]) if is_int && zero(z) => keep(x),
            (Op::Subtract, [x, z]) if (is_int || is_float) && zero(z) => keep(x),
            (Op::Subtract, [x, y]) if is_int && same(x, y) => Some(zeros()),
            (Op::Multiply, [x, o]) | (Op::Multiply, [o, x]) if (is_int || is_float) && one(o) => keep(x),
            (Op::Multiply, [_, z]) | (Op::Multiply, [z, _]) if is_int && zero(z) => Some(zeros()),
            (Op::Divide, [x, o]) if (is_int || is_float) && one(o) => keep(x),
            (Op::LogicalAnd | Op::LogicalOr, [x, y]) if same(x, y) => keep(x),
            (Op::Copy, [x]) => keep(x),
            (Op::Negative | Op::LogicalNot | Op::BitwiseNot, [x]) => match self.resolve(x) {
                Expr::Prim { op: inner, args } if inner == op => keep(&args[0]),
                _ => None,
            },
            _ => None,
        };
        out.unwrap_or(prim)
    }
}

fn is_pos_zero(s: &Scalar) -> bool {
    match s {
        Scalar::Float(f) => f.to_bits() == 0,
        other => other.is_zero(),
    }
}

use crate::mini_ir::expr::{Expr, Module};
use crate::opset::Op;

/// Puts constants on the right of commutative operators and folds a negated
/// operand into the surrounding add/subtract:
/// `subtract(x, negative(y))` → `add(x, y)`, `add(x, negative(y))` →
/// `subtract(x, y)`.
pub fn canonicalize_ops(m: &Module) -> Module {
    m.map_bodies(|_, body| body.map_bottom_up(&mut canonicalize))
}

fn canonicalize(e: Expr) -> Expr {
    let Expr::Prim { op, mut args } = e else { return e };
    if op.is_commutative() && matches!(args[0], Expr::Const(_)) && !matches!(args[1], Expr::Const(_)) {
        args.swap(0, 1);
    }
    if op == Op::Add && is_negation(&args[0]) && !is_negation(&args[1]) {
        args.swap(0, 1);
    }
    match (op, args.as_mut_slice()) {
        (Op::Subtract | Op::Add, [_, y]) if is_negation(y) => {
            let Expr::Prim { args: mut inner, .. } = std::mem::replace(y, Expr::Tuple(Vec::new())) else {
                unreachable!()
            };
            *y = inner.remove(0);
            let op = if op == Op::Subtract { Op::Add } else { Op::Subtract };
            Expr::Prim { op, args }
        }
        _ => Expr::Prim { op, args },
    }
}

fn is_negation(e: &Expr) -> bool {
    matches!(e, Expr::Prim { op: Op::Negative, .. })
}

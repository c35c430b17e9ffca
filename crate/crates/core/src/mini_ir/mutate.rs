//! Semantics-preserving rewrites of the function-call structure.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expr::{Expr, Function, Module, NameGen, Param, MAIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RewriteStrategy {
    /// New global `g` calls `f`; every reference to `f` goes through `g`.
    WrapperCall = 1,
    /// New global `g` returns `f`; every `f` becomes `g()`.
    ReturnFunction = 2,
    /// `f` becomes a local closure inside new global `g`, which replaces it.
    LocalClosure = 3,
}

impl RewriteStrategy {
    pub const ALL: [RewriteStrategy; 3] =
        [RewriteStrategy::WrapperCall, RewriteStrategy::ReturnFunction, RewriteStrategy::LocalClosure];

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(RewriteStrategy::WrapperCall),
            2 => Some(RewriteStrategy::ReturnFunction),
            3 => Some(RewriteStrategy::LocalClosure),
            _ => None,
        }
    }
}

impl fmt::Display for RewriteStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rewrite-{}", *self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("module has no rewritable global function")]
pub struct NoTarget;

/// Replaces `FuncRef(from)` with `with()` in every function except `skip`.
fn redirect(m: &mut Module, from: &str, skip: &str, with: impl Fn() -> Expr) {
    for (name, f) in m.functions.iter_mut() {
        if name == skip {
            continue;
        }
        f.body = f.body.clone().map_bottom_up(&mut |e| match e {
            Expr::FuncRef(g) if g == from => with(),
            e => e,
        });
    }
}

/// Applies `strategy` to a randomly chosen global other than main.
pub fn mutate_function_rewrite(m: &Module, strategy: RewriteStrategy, seed: u64) -> Result<Module, NoTarget> {
    let candidates: Vec<&String> = m
        .functions
        .keys()
        .filter(|n| n.as_str() != MAIN && !m.is_recursive(n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (*candidates.choose(&mut rng).ok_or(NoTarget)?).clone();
    let f = m.functions[&target].clone();
    let mut names = NameGen::for_module(m);
    let g = names.fresh(&format!("{target}_w"));
    let forward = |params: &[Param]| params.iter().map(|p| Expr::var(p.name.clone())).collect::<Vec<_>>();
    let mut out = m.clone();
    match strategy {
        RewriteStrategy::WrapperCall => {
            let body = Expr::global_call(target.clone(), forward(&f.params));
            out.functions.insert(g.clone(), Function { params: f.params.clone(), body, ret: f.ret.clone() });
            let g2 = g.clone();
            redirect(&mut out, &target, &g, move || Expr::FuncRef(g2.clone()));
        }
        RewriteStrategy::ReturnFunction => {
            let ret = f.signature();
            out.functions.insert(g.clone(), Function { params: Vec::new(), body: Expr::FuncRef(target.clone()), ret });
            let g2 = g.clone();
            redirect(&mut out, &target, &g, move || Expr::global_call(g2.clone(), Vec::new()));
        }
        RewriteStrategy::LocalClosure => {
            let local = names.fresh("local");
            let closure = Expr::Closure { params: f.params.clone(), body: Box::new(f.body.clone()) };
            let body = Expr::let_(local.clone(), closure, Expr::call(Expr::var(local), forward(&f.params)));
            out.functions.remove(&target);
            out.functions.insert(g.clone(), Function { params: f.params.clone(), body, ret: f.ret.clone() });
            let g2 = g.clone();
            redirect(&mut out, &target, "", move || Expr::FuncRef(g2.clone()));
        }
    }
    Ok(out)
}

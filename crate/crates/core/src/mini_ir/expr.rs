use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::graph_model::{TensorType, TensorValue};
use crate::opset::Op;

/// Name of the entry function.
pub const MAIN: &str = "main";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Tensor(TensorType),
    Func { params: Vec<Type>, ret: Box<Type> },
    Tuple(Vec<Type>),
}

impl Type {
    pub fn as_tensor(&self) -> Option<&TensorType> {
        match self {
            Type::Tensor(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Tensor(t) => write!(f, "{t}"),
            Type::Func { params, ret } => {
                write!(f, "fn(")?;
                for (i, p) in params.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ") -> {ret}")
            }
            Type::Tuple(items) => {
                write!(f, "tuple(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: Type) -> Self {
        Param { name: name.into(), ty }
    }
}

/// Expressions of the functional tensor IR. Variable names are stored
/// without the `%` sigil, global names without `@`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Const(TensorValue),
    Prim { op: Op, args: Vec<Expr> },
    Let { var: String, ty: Option<Type>, value: Box<Expr>, body: Box<Expr> },
    FuncRef(String),
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Closure { params: Vec<Param>, body: Box<Expr> },
    Tuple(Vec<Expr>),
    Proj { tuple: Box<Expr>, index: usize },
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn prim(op: Op, args: Vec<Expr>) -> Expr {
        Expr::Prim { op, args }
    }

    pub fn let_(var: impl Into<String>, value: Expr, body: Expr) -> Expr {
        Expr::Let { var: var.into(), ty: None, value: Box::new(value), body: Box::new(body) }
    }

    pub fn call(callee: Expr, args: Vec<Expr>) -> Expr {
        Expr::Call { callee: Box::new(callee), args }
    }

    pub fn global_call(name: impl Into<String>, args: Vec<Expr>) -> Expr {
        Expr::call(Expr::FuncRef(name.into()), args)
    }

    pub fn proj(tuple: Expr, index: usize) -> Expr {
        Expr::Proj { tuple: Box::new(tuple), index }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Expr::Var(_) | Expr::Const(_))
    }

    /// Number of expression nodes.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    /// Pre-order traversal over every sub-expression.
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Var(_) | Expr::Const(_) | Expr::FuncRef(_) => {}
            Expr::Prim { args, .. } | Expr::Tuple(args) => args.iter().for_each(|a| a.walk(f)),
            Expr::Let { value, body, .. } => {
                value.walk(f);
                body.walk(f);
            }
            Expr::Call { callee, args } => {
                callee.walk(f);
                args.iter().for_each(|a| a.walk(f));
            }
            Expr::Closure { body, .. } => body.walk(f),
            Expr::Proj { tuple, .. } => tuple.walk(f),
        }
    }

    /// Rebuilds the expression bottom-up, applying `f` to every rebuilt node.
    pub fn map_bottom_up(self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let e = match self {
            e @ (Expr::Var(_) | Expr::Const(_) | Expr::FuncRef(_)) => e,
            Expr::Prim { op, args } => Expr::Prim { op, args: args.into_iter().map(|a| a.map_bottom_up(f)).collect() },
            Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| a.map_bottom_up(f)).collect()),
            Expr::Let { var, ty, value, body } => Expr::Let {
                var,
                ty,
                value: Box::new(value.map_bottom_up(f)),
                body: Box::new(body.map_bottom_up(f)),
            },
            Expr::Call { callee, args } => Expr::Call {
                callee: Box::new(callee.map_bottom_up(f)),
                args: args.into_iter().map(|a| a.map_bottom_up(f)).collect(),
            },
            Expr::Closure { params, body } => Expr::Closure { params, body: Box::new(body.map_bottom_up(f)) },
            Expr::Proj { tuple, index } => Expr::Proj { tuple: Box::new(tuple.map_bottom_up(f)), index },
        };
        f(e)
    }

    /// Free local variables.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Expr::Const(_) | Expr::FuncRef(_) => {}
            Expr::Prim { args, .. } | Expr::Tuple(args) => args.iter().for_each(|a| a.collect_free(bound, out)),
            Expr::Let { var, value, body, .. } => {
                value.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            Expr::Call { callee, args } => {
                callee.collect_free(bound, out);
                args.iter().for_each(|a| a.collect_free(bound, out));
            }
            Expr::Closure { params, body } => {
                let n = bound.len();
                bound.extend(params.iter().map(|p| p.name.clone()));
                body.collect_free(bound, out);
                bound.truncate(n);
            }
            Expr::Proj { tuple, .. } => tuple.collect_free(bound, out),
        }
    }

    /// Capture-avoiding substitution of free variables. Binders that would
    /// capture a free variable of a replacement are renamed via `names`.
    pub fn substitute(self, map: &BTreeMap<String, Expr>, names: &mut NameGen) -> Expr {
        if map.is_empty() {
            return self;
        }
        match self {
            Expr::Var(v) => map.get(&v).cloned().unwrap_or(Expr::Var(v)),
            e @ (Expr::Const(_) | Expr::FuncRef(_)) => e,
            Expr::Prim { op, args } => Expr::Prim { op, args: args.into_iter().map(|a| a.substitute(map, names)).collect() },
            Expr::Tuple(items) => Expr::Tuple(items.into_iter().map(|a| a.substitute(map, names)).collect()),
            Expr::Call { callee, args } => Expr::Call {
                callee: Box::new(callee.substitute(map, names)),
                args: args.into_iter().map(|a| a.substitute(map, names)).collect(),
            },
            Expr::Proj { tuple, index } => Expr::Proj { tuple: Box::new(tuple.substitute(map, names)), index },
            Expr::Let { var, ty, value, body } => {
                let value = value.substitute(map, names);
                let (var, inner) = rebind(var, map, names);
                Expr::Let { var, ty, value: Box::new(value), body: Box::new(body.substitute(&inner, names)) }
            }
            Expr::Closure { params, body } => {
                let mut inner = map.clone();
                let mut new_params = Vec::with_capacity(params.len());
                for p in params {
                    let (name, next) = rebind(p.name, &inner, names);
                    inner = next;
                    new_params.push(Param { name, ty: p.ty });
                }
                Expr::Closure { params: new_params, body: Box::new(body.substitute(&inner, names)) }
            }
        }
    }
}

/// Handles a binder during substitution: drops the shadowed mapping and
/// renames the binder if it would capture a variable of a replacement.
fn rebind(var: String, map: &BTreeMap<String, Expr>, names: &mut NameGen) -> (String, BTreeMap<String, Expr>) {
    let mut inner = map.clone();
    inner.remove(&var);
    let captures = inner.values().any(|e| e.free_vars().contains(&var));
    if captures {
        let fresh = names.fresh(&var);
        inner.insert(var, Expr::Var(fresh.clone()));
        (fresh, inner)
    } else {
        (var, inner)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Function {
    pub params: Vec<Param>,
    pub body: Expr,
    pub ret: Option<Type>,
}

impl Function {
    pub fn new(params: Vec<Param>, body: Expr) -> Self {
        Function { params, body, ret: None }
    }

    pub fn signature(&self) -> Option<Type> {
        Some(Type::Func {
            params: self.params.iter().map(|p| p.ty.clone()).collect(),
            ret: Box::new(self.ret.clone()?),
        })
    }
}

/// Global functions by name; `main` is the entry point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Module {
    pub functions: BTreeMap<String, Function>,
}

impl Module {
    pub fn new() -> Self {
        Module::default()
    }

    pub fn with_main(main: Function) -> Self {
        let mut m = Module::new();
        m.functions.insert(MAIN.to_string(), main);
        m
    }

    pub fn main(&self) -> Option<&Function> {
        self.functions.get(MAIN)
    }

    pub fn get(&self, name: &str) -> Option<&Function> {
        self.functions.get(name)
    }

    /// Applies `f` to every function body.
    pub fn map_bodies(&self, mut f: impl FnMut(&str, Expr) -> Expr) -> Module {
        let functions = self
            .functions
            .iter()
            .map(|(name, func)| {
                let body = f(name, func.body.clone());
                (name.clone(), Function { params: func.params.clone(), body, ret: func.ret.clone() })
            })
            .collect();
        Module { functions }
    }

    /// Globals referenced from the body of `name`.
    pub fn callees(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Some(f) = self.get(name) {
            f.body.walk(&mut |e| {
                if let Expr::FuncRef(g) = e {
                    out.insert(g.clone());
                }
            });
        }
        out
    }

    /// True if `name` can reach itself through global references.
    pub fn is_recursive(&self, name: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<String> = self.callees(name).into_iter().collect();
        while let Some(g) = stack.pop() {
            if g == name {
                return true;
            }
            if seen.insert(g.clone()) {
                stack.extend(self.callees(&g));
            }
        }
        false
    }

    /// Every local and global name used anywhere in the module.
    pub fn all_names(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.functions.keys().cloned().collect();
        for f in self.functions.values() {
            out.extend(f.params.iter().map(|p| p.name.clone()));
            f.body.walk(&mut |e| match e {
                Expr::Var(v) | Expr::Let { var: v, .. } => {
                    out.insert(v.clone());
                }
                Expr::Closure { params, .. } => out.extend(params.iter().map(|p| p.name.clone())),
                _ => {}
            });
        }
        out
    }
}

/// Generates names that do not clash with a set of used names.
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    used: BTreeSet<String>,
    counter: usize,
}

impl NameGen {
    pub fn new(used: BTreeSet<String>) -> Self {
        NameGen { used, counter: 0 }
    }

    pub fn for_module(m: &Module) -> Self {
        NameGen::new(m.all_names())
    }

    pub fn fresh(&mut self, hint: &str) -> String {
        let stem: String = hint.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_').to_string();
        let stem = if stem.is_empty() { "t".to_string() } else { stem };
        loop {
            self.counter += 1;
            let name = format!("{stem}_{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{DType, Shape};

    fn c(v: i64) -> Expr {
        Expr::Const(TensorValue::from_i64s(DType::Int32, Shape::scalar(), &[v]).unwrap())
    }

    #[test]
    fn free_vars_respect_binders() {
        let e = Expr::let_("a", Expr::var("x"), Expr::prim(Op::Add, vec![Expr::var("a"), Expr::var("y")]));
        assert_eq!(e.free_vars(), ["x", "y"].iter().map(|s| s.to_string()).collect());
        assert_eq!(e.size(), 5);
    }

    #[test]
    fn substitution_avoids_capture() {
        // let a = 1; add(a, x)   with x := a
        let e = Expr::let_("a", c(1), Expr::prim(Op::Add, vec![Expr::var("a"), Expr::var("x")]));
        let mut map = BTreeMap::new();
        map.insert("x".to_string(), Expr::var("a"));
        let mut names = NameGen::new(["a", "x"].iter().map(|s| s.to_string()).collect());
        let out = e.substitute(&map, &mut names);
        let Expr::Let { var, body, .. } = &out else { panic!() };
        assert_ne!(var, "a");
        assert_eq!(**body, Expr::prim(Op::Add, vec![Expr::var(var.clone()), Expr::var("a")]));
    }

    #[test]
    fn recursion_detection() {
        let mut m = Module::with_main(Function::new(vec![], Expr::global_call("f", vec![])));
        m.functions.insert("f".into(), Function::new(vec![], Expr::global_call("g", vec![])));
        m.functions.insert("g".into(), Function::new(vec![], c(0)));
        assert!(!m.is_recursive("f"));
        m.functions.insert("g".into(), Function::new(vec![], Expr::global_call("f", vec![])));
        assert!(m.is_recursive("f"));
    }

    #[test]
    fn fresh_names_are_unused() {
        let mut g = NameGen::new(["n_1".to_string()].into_iter().collect());
        assert_eq!(g.fresh("n3"), "n_2");
        assert_eq!(g.fresh("n3"), "n_3");
    }
}

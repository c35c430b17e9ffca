use std::collections::BTreeMap;
use std::fmt;

use super::expr::{Expr, Function, Module, Param, Type, MAIN};
use crate::graph_model::{broadcast_shapes, TensorType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TypeErrorKind {
    DtypeMismatch,
    ShapeMismatch,
    Inadmissible,
    ArityMismatch,
    ArgumentMismatch,
    AnnotationMismatch,
    NotATensor,
    NotCallable,
    NotATuple,
    Unbound,
    Recursive,
    MissingMain,
}

impl TypeErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            TypeErrorKind::DtypeMismatch => "dtype_mismatch",
            TypeErrorKind::ShapeMismatch => "shape_mismatch",
            TypeErrorKind::Inadmissible => "inadmissible",
            TypeErrorKind::ArityMismatch => "arity_mismatch",
            TypeErrorKind::ArgumentMismatch => "argument_mismatch",
            TypeErrorKind::AnnotationMismatch => "annotation_mismatch",
            TypeErrorKind::NotATensor => "not_a_tensor",
            TypeErrorKind::NotCallable => "not_callable",
            TypeErrorKind::NotATuple => "not_a_tuple",
            TypeErrorKind::Unbound => "unbound",
            TypeErrorKind::Recursive => "recursive",
            TypeErrorKind::MissingMain => "missing_main",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    /// `@function/%binding/op` style location of the offending expression.
    pub path: String,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {} at {}: {}", self.kind.name(), self.path, self.message)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    InProgress,
    Done,
}

struct Checker<'m> {
    module: &'m Module,
    state: BTreeMap<String, State>,
    done: BTreeMap<String, Function>,
    path: Vec<String>,
}

type Env = Vec<(String, Type)>;

impl<'m> Checker<'m> {
    fn error<T>(&self, kind: TypeErrorKind, message: impl Into<String>) -> Result<T, TypeError> {
        Err(TypeError { kind, path: self.path.join("/"), message: message.into() })
    }

    fn signature(&mut self, name: &str) -> Result<Type, TypeError> {
        let Some(f) = self.module.get(name) else {
            return self.error(TypeErrorKind::Unbound, format!("unknown global @{name}"));
        };
        if let Some(sig) = f.signature() {
            return Ok(sig);
        }
        match self.state.get(name) {
            Some(State::InProgress) => {
                return self.error(TypeErrorKind::Recursive, format!("@{name} is recursive without a return annotation"))
            }
            Some(State::Done) => {}
            None => self.check_function(name)?,
        }
        Ok(self.done[name].signature().expect("checked functions carry a return type"))
    }

    fn check_function(&mut self, name: &str) -> Result<(), TypeError> {
        if self.state.contains_key(name) {
            return Ok(());
        }
        let f = &self.module.functions[name];
        self.state.insert(name.to_string(), State::InProgress);
        let saved = std::mem::replace(&mut self.path, vec![format!("@{name}")]);
        let mut env: Env = f.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
        let (body, ret) = self.infer(&f.body, &mut env)?;
        if let Some(ann) = &f.ret {
            if *ann != ret {
                return self.error(TypeErrorKind::AnnotationMismatch, format!("declared return {ann}, body has {ret}"));
            }
        }
        self.path = saved;
        self.done.insert(name.to_string(), Function { params: f.params.clone(), body, ret: Some(ret) });
        self.state.insert(name.to_string(), State::Done);
        Ok(())
    }

    fn infer(&mut self, e: &Expr, env: &mut Env) -> Result<(Expr, Type), TypeError> {
        match e {
            Expr::Var(v) => match env.iter().rev().find(|(n, _)| n == v) {
                Some((_, ty)) => Ok((e.clone(), ty.clone())),
                None => self.error(TypeErrorKind::Unbound, format!("unbound variable %{v}")),
            },
            Expr::Const(value) => Ok((e.clone(), Type::Tensor(TensorType::of(value)))),
            Expr::FuncRef(g) => {
                let sig = self.signature(g)?;
                Ok((e.clone(), sig))
            }
            Expr::Prim { op, args } => {
                self.path.push(op.name().to_string());
                let mut typed = Vec::with_capacity(args.len());
                let mut tys = Vec::with_capacity(args.len());
                for (i, a) in args.iter().enumerate() {
                    let (a, ty) = self.infer(a, env)?;
                    match ty {
                        Type::Tensor(t) => tys.push(t),
                        other => {
                            return self.error(TypeErrorKind::NotATensor, format!("argument {i} of {op} has type {other}"))
                        }
                    }
                    typed.push(a);
                }
                if tys.len() != op.arity() {
                    return self.error(
                        TypeErrorKind::ArityMismatch,
                        format!("{op} takes {} arguments, got {}", op.arity(), tys.len()),
                    );
                }
                let dtype = tys[0].dtype;
                if let Some(other) = tys.iter().find(|t| t.dtype != dtype) {
                    return self.error(
                        TypeErrorKind::DtypeMismatch,
                        format!("{op} operands have dtypes {dtype} and {}", other.dtype),
                    );
                }
                if !op.admits(dtype) {
                    return self.error(TypeErrorKind::Inadmissible, format!("{op} does not admit {dtype}"));
                }
                let mut shape = tys[0].shape.clone();
                for t in &tys[1..] {
                    shape = match broadcast_shapes(&shape, &t.shape) {
                        Ok(s) => s,
                        Err(err) => return self.error(TypeErrorKind::ShapeMismatch, format!("{op}: {err}")),
                    };
                }
                self.path.pop();
                let ty = Type::Tensor(TensorType::new(op.spec().result_dtype(dtype), shape));
                Ok((Expr::Prim { op: *op, args: typed }, ty))
            }
            Expr::Let { var, ty, value, body } => {
                self.path.push(format!("%{var}"));
                let (value, vty) = self.infer(value, env)?;
                if let Some(ann) = ty {
                    if *ann != vty {
                        return self.error(
                            TypeErrorKind::AnnotationMismatch,
                            format!("%{var} declared {ann}, value has {vty}"),
                        );
                    }
                }
                self.path.pop();
                env.push((var.clone(), vty.clone()));
                let r = self.infer(body, env);
                env.pop();
                let (body, bty) = r?;
                Ok((
                    Expr::Let { var: var.clone(), ty: Some(vty), value: Box::new(value), body: Box::new(body) },
                    bty,
                ))
            }
            Expr::Call { callee, args } => {
                self.path.push("call".into());
                let (callee, cty) = self.infer(callee, env)?;
                let Type::Func { params, ret } = cty else {
                    return self.error(TypeErrorKind::NotCallable, format!("callee has type {cty}"));
                };
                if params.len() != args.len() {
                    return self.error(
                        TypeErrorKind::ArityMismatch,
                        format!("callee takes {} arguments, got {}", params.len(), args.len()),
                    );
                }
                let mut typed = Vec::with_capacity(args.len());
                for (i, (a, pty)) in args.iter().zip(&params).enumerate() {
                    let (a, aty) = self.infer(a, env)?;
                    if aty != *pty {
                        return self.error(
                            TypeErrorKind::ArgumentMismatch,
                            format!("argument {i} has type {aty}, parameter expects {pty}"),
                        );
                    }
                    typed.push(a);
                }
                self.path.pop();
                Ok((Expr::Call { callee: Box::new(callee), args: typed }, *ret))
            }
            Expr::Closure { params, body } => {
                self.path.push("fn".into());
                let n = env.len();
                env.extend(params.iter().map(|p| (p.name.clone(), p.ty.clone())));
                let r = self.infer(body, env);
                env.truncate(n);
                let (body, ret) = r?;
                self.path.pop();
                let ty = Type::Func { params: params.iter().map(|p| p.ty.clone()).collect(), ret: Box::new(ret) };
                Ok((Expr::Closure { params: params.clone(), body: Box::new(body) }, ty))
            }
            Expr::Tuple(items) => {
                let mut typed = Vec::with_capacity(items.len());
                let mut tys = Vec::with_capacity(items.len());
                for item in items {
                    let (a, t) = self.infer(item, env)?;
                    typed.push(a);
                    tys.push(t);
                }
                Ok((Expr::Tuple(typed), Type::Tuple(tys)))
            }
            Expr::Proj { tuple, index } => {
                let (tuple, tty) = self.infer(tuple, env)?;
                match tty {
                    Type::Tuple(mut items) if *index < items.len() => {
                        Ok((Expr::Proj { tuple: Box::new(tuple), index: *index }, items.swap_remove(*index)))
                    }
                    other => self.error(TypeErrorKind::NotATuple, format!("cannot project .{index} out of {other}")),
                }
            }
        }
    }
}

/// Type-checks every function and returns the module with every let binding
/// and function return type annotated. Idempotent on its own output.
pub fn infer_types(m: &Module) -> Result<Module, TypeError> {
    if m.main().is_none() {
        return Err(TypeError {
            kind: TypeErrorKind::MissingMain,
            path: "@main".into(),
            message: "module has no main function".into(),
        });
    }
    let mut c = Checker { module: m, state: BTreeMap::new(), done: BTreeMap::new(), path: Vec::new() };
    // main first so that errors in the entry point are reported from it
    c.check_function(MAIN)?;
    for name in m.functions.keys() {
        c.check_function(name)?;
    }
    Ok(Module { functions: c.done })
}

/// Type of `e` in module `m` under the local bindings `env`.
pub fn type_of(m: &Module, env: &[(String, Type)], e: &Expr) -> Result<Type, TypeError> {
    let mut c = Checker { module: m, state: BTreeMap::new(), done: BTreeMap::new(), path: vec!["<expr>".into()] };
    let mut env = env.to_vec();
    c.infer(e, &mut env).map(|(_, t)| t)
}

/// Type of main's result, for a module that type-checks.
pub fn main_type(m: &Module) -> Result<Type, TypeError> {
    let typed = infer_types(m)?;
    Ok(typed.main().and_then(|f| f.ret.clone()).expect("typed main has a return type"))
}

pub fn param_env(params: &[Param]) -> Vec<(String, Type)> {
    params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{DType, Shape};
    use crate::mini_ir::text::{parse_module, print_module};

    fn check(src: &str) -> Result<Module, TypeError> {
        infer_types(&parse_module(src).unwrap())
    }

    #[test]
    fn add_of_int32_constants() {
        let m = check("def @main() { add(const int32 () [1], const int32 () [2]) }").unwrap();
        assert_eq!(
            m.main().unwrap().ret,
            Some(Type::Tensor(TensorType::new(DType::Int32, Shape::scalar())))
        );
    }

    #[test]
    fn dtype_mismatch() {
        let e = check("def @main() { add(const int32 () [1], const float32 () [2.0]) }").unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::DtypeMismatch);
        assert_eq!(e.to_string(), "ERROR dtype_mismatch at @main/add: add operands have dtypes int32 and float32");
    }

    #[test]
    fn sqrt_int16_is_inadmissible() {
        let e = check("def @main() { let %a = sqrt(const int16 () [4]); %a }").unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::Inadmissible);
        assert_eq!(e.path, "@main/%a/sqrt");
    }

    #[test]
    fn broadcast_and_comparison() {
        let m = check("def @main(%x: float32(2,1), %y: float32(3)) { less(%x, %y) }").unwrap();
        assert_eq!(m.main().unwrap().ret.as_ref().unwrap().to_string(), "bool(2,3)");
        let e = check("def @main(%x: float32(2), %y: float32(3)) { less(%x, %y) }").unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::ShapeMismatch);
    }

    #[test]
    fn closure_returning_function() {
        let src = "\
def @f(%x: int8(2)) { negative(%x) }
def @g() { fn(%y: int8(2)) { @f(%y) } }
def @main(%a: int8(2)) { @g()(%a) }
";
        let m = check(src).unwrap();
        assert_eq!(m.get("g").unwrap().ret.as_ref().unwrap().to_string(), "fn(int8(2)) -> int8(2)");
        assert_eq!(m.main().unwrap().ret.as_ref().unwrap().to_string(), "int8(2)");
    }

    #[test]
    fn fixpoint() {
        let src = "\
def @f(%x: int8(2), %z: int8()) { let %q = add(%x, %z); tuple(%q, %x) }
def @main(%a: int8(2)) { let %t = @f(%a, const int8 () [3]); %t.1 }
";
        let once = check(src).unwrap();
        let twice = infer_types(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(print_module(&once), print_module(&twice));
    }

    #[test]
    fn structural_errors() {
        let kinds = [
            ("def @main() { %x }", TypeErrorKind::Unbound),
            ("def @main() { @nope() }", TypeErrorKind::Unbound),
            ("def @f() { @f() }\ndef @main() { @f() }", TypeErrorKind::Recursive),
            ("def @f(%a: int8()) { %a }\ndef @main() { @f() }", TypeErrorKind::ArityMismatch),
            ("def @f(%a: int8()) { %a }\ndef @main() { @f(const int16 () [1]) }", TypeErrorKind::ArgumentMismatch),
            ("def @main() { const int8 () [1](const int8 () [1]) }", TypeErrorKind::NotCallable),
            ("def @main() { tuple(const int8 () [1]).1 }", TypeErrorKind::NotATuple),
            ("def @main() { let %a: int16() = const int8 () [1]; %a }", TypeErrorKind::AnnotationMismatch),
            ("def @f() { const int8 () [1] }", TypeErrorKind::MissingMain),
            ("def @main() { negative(tuple()) }", TypeErrorKind::NotATensor),
        ];
        for (src, kind) in kinds {
            assert_eq!(check(src).unwrap_err().kind, kind, "{src}");
        }
    }
}

use std::rc::Rc;

use super::{RuntimeError, MAX_CALL_DEPTH};
use crate::graph_model::TensorValue;
use crate::mini_ir::expr::{Expr, Module, MAIN};
use crate::opset::eval_elementwise;

#[derive(Clone)]
enum Value {
    Tensor(Rc<TensorValue>),
    Tuple(Rc<Vec<Value>>),
    Global(Rc<str>),
    Closure(Rc<Closure>),
}

struct Closure {
    params: Vec<String>,
    body: Expr,
    env: Env,
}

/// Persistent linked environment.
#[derive(Clone, Default)]
struct Env(Option<Rc<(String, Value, Env)>>);

impl Env {
    fn bind(&self, name: &str, v: Value) -> Env {
        Env(Some(Rc::new((name.to_string(), v, self.clone()))))
    }

    fn get(&self, name: &str) -> Option<&Value> {
        let mut cur = &self.0;
        while let Some(node) = cur {
            if node.0 == name {
                return Some(&node.1);
            }
            cur = &node.2 .0;
        }
        None
    }
}

struct Interp<'m> {
    module: &'m Module,
    depth: usize,
    path: String,
}

pub(super) fn run(m: &Module, args: Vec<TensorValue>) -> Result<Vec<TensorValue>, RuntimeError> {
    let mut it = Interp { module: m, depth: 0, path: format!("@{MAIN}") };
    let args = args.into_iter().map(|a| Value::Tensor(Rc::new(a))).collect();
    let out = it.call_global(MAIN, args)?;
    let mut flat = Vec::new();
    flatten(&out, &mut flat, &it.path)?;
    Ok(flat)
}

fn flatten(v: &Value, out: &mut Vec<TensorValue>, path: &str) -> Result<(), RuntimeError> {
    match v {
        Value::Tensor(t) => out.push((**t).clone()),
        Value::Tuple(items) => {
            for i in items.iter() {
                flatten(i, out, path)?;
            }
        }
        Value::Global(_) | Value::Closure(_) => {
            return Err(RuntimeError::new("bad_result", path, "main returned a function"))
        }
    }
    Ok(())
}

impl Interp<'_> {
    fn err<T>(&self, kind: &'static str, message: impl Into<String>) -> Result<T, RuntimeError> {
        Err(RuntimeError::new(kind, self.path.clone(), message))
    }

    fn call_global(&mut self, name: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        let Some(f) = self.module.get(name) else {
            return self.err("unbound", format!("unknown global @{name}"));
        };
        if f.params.len() != args.len() {
            return self.err("arity", format!("@{name} takes {} arguments, got {}", f.params.len(), args.len()));
        }
        let env = f.params.iter().zip(args).fold(Env::default(), |env, (p, a)| env.bind(&p.name, a));
        let saved = std::mem::replace(&mut self.path, format!("@{name}"));
        let r = self.enter(|it| it.eval(&f.body, env));
        self.path = saved;
        r
    }

    fn enter(&mut self, f: impl FnOnce(&mut Self) -> Result<Value, RuntimeError>) -> Result<Value, RuntimeError> {
        if self.depth >= MAX_CALL_DEPTH {
            return self.err("stack_overflow", "call depth limit exceeded");
        }
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        r
    }

    fn tensor(&self, v: Value) -> Result<Rc<TensorValue>, RuntimeError> {
        match v {
            Value::Tensor(t) => Ok(t),
            _ => self.err("type", "expected a tensor"),
        }
    }

    fn eval(&mut self, mut e: &Expr, mut env: Env) -> Result<Value, RuntimeError> {
        // let chains are walked iteratively
        while let Expr::Let { var, value, body, .. } = e {
            let v = self.eval(value, env.clone())?;
            env = env.bind(var, v);
            e = body;
        }
        match e {
            Expr::Var(v) => match env.get(v) {
                Some(x) => Ok(x.clone()),
                None => self.err("unbound", format!("unbound variable %{v}")),
            },
            Expr::Const(c) => Ok(Value::Tensor(Rc::new(c.clone()))),
            Expr::FuncRef(g) => Ok(Value::Global(Rc::from(g.as_str()))),
            Expr::Prim { op, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    let v = self.eval(a, env.clone())?;
                    vals.push(self.tensor(v)?);
                }
                let refs: Vec<&TensorValue> = vals.iter().map(|v| &**v).collect();
                match eval_elementwise(*op, &refs) {
                    Ok(t) => Ok(Value::Tensor(Rc::new(t))),
                    Err(err) => self.err("kernel", format!("{op}: {err}")),
                }
            }
            Expr::Tuple(items) => {
                let vals = items.iter().map(|i| self.eval(i, env.clone())).collect::<Result<Vec<_>, _>>()?;
                Ok(Value::Tuple(Rc::new(vals)))
            }
            Expr::Proj { tuple, index } => match self.eval(tuple, env)? {
                Value::Tuple(items) if *index < items.len() => Ok(items[*index].clone()),
                _ => self.err("type", format!("cannot project .{index}")),
            },
            Expr::Closure { params, body } => Ok(Value::Closure(Rc::new(Closure {
                params: params.iter().map(|p| p.name.clone()).collect(),
                body: (**body).clone(),
                env,
            }))),
            Expr::Call { callee, args } => {
                let f = self.eval(callee, env.clone())?;
                let args = args.iter().map(|a| self.eval(a, env.clone())).collect::<Result<Vec<_>, _>>()?;
                match f {
                    Value::Global(name) => self.call_global(&name, args),
                    Value::Closure(c) => {
                        if c.params.len() != args.len() {
                            return self.err("arity", "closure arity mismatch");
                        }
                        let env = c.params.iter().zip(args).fold(c.env.clone(), |env, (p, a)| env.bind(p, a));
                        self.enter(|it| it.eval(&c.body, env))
                    }
                    _ => self.err("type", "callee is not a function"),
                }
            }
            Expr::Let { .. } => unreachable!(),
        }
    }
}

use std::rc::Rc;

use super::{RuntimeError, MAX_CALL_DEPTH};
use crate::graph_model::TensorValue;
use crate::mini_ir::expr::{Expr, Module, MAIN};
use crate::opset::{eval_elementwise, Op};

/// One tape entry; operands are indices of earlier entries.
enum Instr {
    Input(usize),
    Const(TensorValue),
    Prim(Op, Vec<usize>),
}

/// Symbolic value produced while flattening.
#[derive(Clone)]
enum Sym {
    Slot(usize),
    Tuple(Rc<Vec<Sym>>),
    Global(Rc<str>),
    Closure(Rc<(Vec<String>, Expr, Env)>),
}

type Env = Rc<Vec<(String, Sym)>>;

struct Flattener<'m> {
    module: &'m Module,
    tape: Vec<Instr>,
    depth: usize,
    path: String,
}

pub(super) fn run(m: &Module, args: Vec<TensorValue>) -> Result<Vec<TensorValue>, RuntimeError> {
    let mut fl = Flattener { module: m, tape: Vec::new(), depth: 0, path: format!("@{MAIN}") };
    let inputs: Vec<Sym> = (0..args.len())
        .map(|i| {
            fl.tape.push(Instr::Input(i));
            Sym::Slot(i)
        })
        .collect();
    let out = fl.call_global(MAIN, inputs)?;
    let mut slots = Vec::new();
    flatten(&out, &mut slots, &fl.path)?;
    execute(&fl.tape, &args, &slots)
}

fn flatten(s: &Sym, out: &mut Vec<usize>, path: &str) -> Result<(), RuntimeError> {
    match s {
        Sym::Slot(i) => out.push(*i),
        Sym::Tuple(items) => {
            for i in items.iter() {
                flatten(i, out, path)?;
            }
        }
        _ => return Err(RuntimeError::new("bad_result", path, "main returned a function")),
    }
    Ok(())
}

/// Executes the entries the outputs depend on, in tape order.
fn execute(tape: &[Instr], args: &[TensorValue], outputs: &[usize]) -> Result<Vec<TensorValue>, RuntimeError> {
    let mut live = vec![false; tape.len()];
    for o in outputs {
        live[*o] = true;
    }
    for i in (0..tape.len()).rev() {
        if live[i] {
            if let Instr::Prim(_, operands) = &tape[i] {
                for o in operands {
                    live[*o] = true;
                }
            }
        }
    }
    let mut values: Vec<Option<Rc<TensorValue>>> = vec![None; tape.len()];
    for (i, instr) in tape.iter().enumerate() {
        if !live[i] {
            continue;
        }
        values[i] = Some(match instr {
            Instr::Input(k) => Rc::new(args[*k].clone()),
            Instr::Const(c) => Rc::new(c.clone()),
            Instr::Prim(op, operands) => {
                let refs: Vec<&TensorValue> = operands.iter().map(|o| &**values[*o].as_ref().unwrap()).collect();
                let t = eval_elementwise(*op, &refs)
                    .map_err(|e| RuntimeError::new("kernel", format!("tape[{i}]"), format!("{op}: {e}")))?;
                Rc::new(t)
            }
        });
    }
    Ok(outputs.iter().map(|o| (**values[*o].as_ref().unwrap()).clone()).collect())
}

impl Flattener<'_> {
    fn err<T>(&self, kind: &'static str, message: impl Into<String>) -> Result<T, RuntimeError> {
        Err(RuntimeError::new(kind, self.path.clone(), message))
    }

    fn call_global(&mut self, name: &str, args: Vec<Sym>) -> Result<Sym, RuntimeError> {
        let Some(f) = self.module.get(name) else {
            return self.err("unbound", format!("unknown global @{name}"));
        };
        if f.params.len() != args.len() {
            return self.err("arity", format!("@{name} takes {} arguments, got {}", f.params.len(), args.len()));
        }
        let env: Env = Rc::new(f.params.iter().map(|p| p.name.clone()).zip(args).collect());
        let saved = std::mem::replace(&mut self.path, format!("@{name}"));
        let r = self.enter(&f.body, env);
        self.path = saved;
        r
    }

    fn enter(&mut self, body: &Expr, env: Env) -> Result<Sym, RuntimeError> {
        if self.depth >= MAX_CALL_DEPTH {
            return self.err("stack_overflow", "call depth limit exceeded");
        }
        self.depth += 1;
        let r = self.sym(body, env);
        self.depth -= 1;
        r
    }

    fn sym(&mut self, mut e: &Expr, mut env: Env) -> Result<Sym, RuntimeError> {
        while let Expr::Let { var, value, body, .. } = e {
            let v = self.sym(value, env.clone())?;
            let mut next = (*env).clone();
            next.push((var.clone(), v));
            env = Rc::new(next);
            e = body;
        }
        match e {
            Expr::Var(v) => match env.iter().rev().find(|(n, _)| n == v) {
                Some((_, s)) => Ok(s.clone()),
                None => self.err("unbound", format!("unbound variable %{v}")),
            },
            Expr::Const(c) => {
                self.tape.push(Instr::Const(c.clone()));
                Ok(Sym::Slot(self.tape.len() - 1))
            }
            Expr::FuncRef(g) => Ok(Sym::Global(Rc::from(g.as_str()))),
            Expr::Prim { op, args } => {
                let mut operands = Vec::with_capacity(args.len());
                for a in args {
                    match self.sym(a, env.clone())? {
                        Sym::Slot(i) => operands.push(i),
                        _ => return self.err("type", format!("{op} operand is not a tensor")),
                    }
                }
                self.tape.push(Instr::Prim(*op, operands));
                Ok(Sym::Slot(self.tape.len() - 1))
            }
            Expr::Tuple(items) => {
                let syms = items.iter().map(|i| self.sym(i, env.clone())).collect::<Result<Vec<_>, _>>()?;
                Ok(Sym::Tuple(Rc::new(syms)))
            }
            Expr::Proj { tuple, index } => match self.sym(tuple, env)? {
                Sym::Tuple(items) if *index < items.len() => Ok(items[*index].clone()),
                _ => self.err("type", format!("cannot project .{index}")),
            },
            Expr::Closure { params, body } => Ok(Sym::Closure(Rc::new((
                params.iter().map(|p| p.name.clone()).collect(),
                (**body).clone(),
                env,
            )))),
            Expr::Call { callee, args } => {
                let f = self.sym(callee, env.clone())?;
                let args = args.iter().map(|a| self.sym(a, env.clone())).collect::<Result<Vec<_>, _>>()?;
                match f {
                    Sym::Global(name) => self.call_global(&name, args),
                    Sym::Closure(c) => {
                        let (params, body, cenv) = &*c;
                        if params.len() != args.len() {
                            return self.err("arity", "closure arity mismatch");
                        }
                        let mut next = (**cenv).clone();
                        next.extend(params.iter().cloned().zip(args));
                        self.enter(body, Rc::new(next))
                    }
                    Sym::Slot(_) | Sym::Tuple(_) => self.err("type", "callee is not a function"),
                }
            }
            Expr::Let { .. } => unreachable!(),
        }
    }
}

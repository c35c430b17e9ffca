use std::collections::BTreeMap;
use std::rc::Rc;

use super::{RuntimeError, MAX_CALL_DEPTH};
use crate::graph_model::TensorValue;
use crate::mini_ir::expr::{Expr, Module, MAIN};
use crate::mini_ir::faults::{Faults, SeededBug};
use crate::opset::{eval_elementwise, Op};

#[derive(Debug, Clone)]
enum Instr {
    Const(usize),
    Load(usize),
    Store(usize),
    Prim(Op, usize),
    Tuple(usize),
    Proj(usize),
    Global(usize),
    /// Builds a closure over code `code`, capturing the given local slots.
    Closure { code: usize, captures: Vec<usize> },
    Call(usize),
    Ret,
}

#[derive(Debug, Default)]
struct Code {
    name: String,
    n_params: usize,
    n_locals: usize,
    instrs: Vec<Instr>,
}

#[derive(Clone)]
enum Value {
    Tensor(Rc<TensorValue>),
    Tuple(Rc<Vec<Value>>),
    Global(usize),
    Closure(Rc<(usize, Vec<Value>)>),
}

struct Program {
    codes: Vec<Code>,
    consts: Vec<Rc<TensorValue>>,
    main: usize,
}

struct Compiler<'a> {
    globals: BTreeMap<&'a str, usize>,
    codes: Vec<Code>,
    consts: Vec<Rc<TensorValue>>,
    faulty_negative: bool,
}

/// Per-code compilation state: visible names and their slots.
struct Scope {
    names: Vec<(String, usize)>,
    n_locals: usize,
}

impl Scope {
    fn bind(&mut self, name: &str) -> usize {
        let slot = self.n_locals;
        self.n_locals += 1;
        self.names.push((name.to_string(), slot));
        slot
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.names.iter().rev().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

impl<'a> Compiler<'a> {
    fn compile(m: &'a Module, faults: &Faults) -> Result<Program, RuntimeError> {
        let globals: BTreeMap<&str, usize> = m.functions.keys().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut c = Compiler {
            codes: m.functions.keys().map(|_| Code::default()).collect(),
            globals,
            consts: Vec::new(),
            faulty_negative: faults.has(SeededBug::VmNegative),
        };
        for (i, (name, f)) in m.functions.iter().enumerate() {
            let mut scope = Scope { names: Vec::new(), n_locals: 0 };
            for p in &f.params {
                scope.bind(&p.name);
            }
            let mut instrs = Vec::new();
            c.expr(&f.body, &mut scope, &mut instrs, name)?;
            instrs.push(Instr::Ret);
            c.codes[i] = Code { name: name.clone(), n_params: f.params.len(), n_locals: scope.n_locals, instrs };
        }
        let main = *c
            .globals
            .get(MAIN)
            .ok_or_else(|| RuntimeError::new("bad_module", "@main", "module has no main"))?;
        Ok(Program { codes: c.codes, consts: c.consts, main })
    }

    fn expr(&mut self, e: &Expr, scope: &mut Scope, out: &mut Vec<Instr>, fname: &str) -> Result<(), RuntimeError> {
        let unbound = |what: String| RuntimeError::new("unbound", format!("@{fname}"), what);
        match e {
            Expr::Var(v) => out.push(Instr::Load(scope.lookup(v).ok_or_else(|| unbound(format!("unbound variable %{v}")))?)),
            Expr::Const(c) => {
                self.consts.push(Rc::new(c.clone()));
                out.push(Instr::Const(self.consts.len() - 1));
            }
            Expr::FuncRef(g) => {
                out.push(Instr::Global(*self.globals.get(g.as_str()).ok_or_else(|| unbound(format!("unknown global @{g}")))?))
            }
            Expr::Prim { op, args } => {
                for a in args {
                    self.expr(a, scope, out, fname)?;
                }
                let op = if *op == Op::Negative && self.faulty_negative { Op::Copy } else { *op };
                out.push(Instr::Prim(op, args.len()));
            }
            Expr::Let { var, value, body, .. } => {
                self.expr(value, scope, out, fname)?;
                let mark = scope.names.len();
                let slot = scope.bind(var);
                out.push(Instr::Store(slot));
                self.expr(body, scope, out, fname)?;
                scope.names.truncate(mark);
            }
            Expr::Tuple(items) => {
                for i in items {
                    self.expr(i, scope, out, fname)?;
                }
                out.push(Instr::Tuple(items.len()));
            }
            Expr::Proj { tuple, index } => {
                self.expr(tuple, scope, out, fname)?;
                out.push(Instr::Proj(*index));
            }
            Expr::Call { callee, args } => {
                self.expr(callee, scope, out, fname)?;
                for a in args {
                    self.expr(a, scope, out, fname)?;
                }
                out.push(Instr::Call(args.len()));
            }
            Expr::Closure { params, body } => {
                let mut inner = Scope { names: Vec::new(), n_locals: 0 };
                for p in params {
                    inner.bind(&p.name);
                }
                let param_names: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
                let mut captures = Vec::new();
                for fv in body.free_vars() {
                    if param_names.contains(&fv.as_str()) {
                        continue;
                    }
                    let slot = scope.lookup(&fv).ok_or_else(|| unbound(format!("unbound variable %{fv}")))?;
                    captures.push(slot);
                    inner.bind(&fv);
                }
                let mut instrs = Vec::new();
                self.expr(body, &mut inner, &mut instrs, fname)?;
                instrs.push(Instr::Ret);
                self.codes.push(Code {
                    name: format!("{fname}/fn"),
                    n_params: params.len(),
                    n_locals: inner.n_locals,
                    instrs,
                });
                out.push(Instr::Closure { code: self.codes.len() - 1, captures });
            }
        }
        Ok(())
    }
}

struct Frame {
    code: usize,
    pc: usize,
    locals: Vec<Option<Value>>,
}

pub(super) fn run(m: &Module, args: Vec<TensorValue>, faults: &Faults) -> Result<Vec<TensorValue>, RuntimeError> {
    let prog = Compiler::compile(m, faults)?;
    let args = args.into_iter().map(|a| Value::Tensor(Rc::new(a))).collect();
    let out = execute(&prog, args)?;
    let mut flat = Vec::new();
    flatten(&out, &mut flat)?;
    Ok(flat)
}

fn flatten(v: &Value, out: &mut Vec<TensorValue>) -> Result<(), RuntimeError> {
    match v {
        Value::Tensor(t) => out.push((**t).clone()),
        Value::Tuple(items) => {
            for i in items.iter() {
                flatten(i, out)?;
            }
        }
        _ => return Err(RuntimeError::new("bad_result", "@main", "main returned a function")),
    }
    Ok(())
}

fn new_frame(prog: &Program, code: usize, args: Vec<Value>) -> Frame {
    let mut locals: Vec<Option<Value>> = args.into_iter().map(Some).collect();
    locals.resize(prog.codes[code].n_locals, None);
    Frame { code, pc: 0, locals }
}

fn execute(prog: &Program, args: Vec<Value>) -> Result<Value, RuntimeError> {
    let mut frames = vec![new_frame(prog, prog.main, args)];
    let mut stack: Vec<Value> = Vec::new();
    loop {
        let frame = frames.last_mut().expect("frame stack never empties before return");
        let code = &prog.codes[frame.code];
        let err = |kind: &'static str, msg: String| RuntimeError::new(kind, format!("@{}", code.name), msg);
        let instr = &code.instrs[frame.pc];
        frame.pc += 1;
        match instr {
            Instr::Const(i) => stack.push(Value::Tensor(prog.consts[*i].clone())),
            Instr::Load(s) => stack.push(frame.locals[*s].clone().ok_or_else(|| err("unbound", format!("slot {s} unset")))?),
            Instr::Store(s) => frame.locals[*s] = stack.pop(),
            Instr::Prim(op, n) => {
                let args = stack.split_off(stack.len() - n);
                let mut tensors = Vec::with_capacity(*n);
                for a in &args {
                    match a {
                        Value::Tensor(t) => tensors.push(&**t),
                        _ => return Err(err("type", format!("{op} operand is not a tensor"))),
                    }
                }
                let t = eval_elementwise(*op, &tensors).map_err(|e| err("kernel", format!("{op}: {e}")))?;
                stack.push(Value::Tensor(Rc::new(t)));
            }
            Instr::Tuple(n) => {
                let items = stack.split_off(stack.len() - n);
                stack.push(Value::Tuple(Rc::new(items)));
            }
            Instr::Proj(i) => match stack.pop() {
                Some(Value::Tuple(items)) if *i < items.len() => stack.push(items[*i].clone()),
                _ => return Err(err("type", format!("cannot project .{i}"))),
            },
            Instr::Global(g) => stack.push(Value::Global(*g)),
            Instr::Closure { code, captures } => {
                let captured = captures
                    .iter()
                    .map(|s| frame.locals[*s].clone().ok_or_else(|| err("unbound", format!("slot {s} unset"))))
                    .collect::<Result<Vec<_>, _>>()?;
                stack.push(Value::Closure(Rc::new((*code, captured))));
            }
            Instr::Call(n) => {
                let args = stack.split_off(stack.len() - n);
                let callee = stack.pop();
                let (target, all) = match callee {
                    Some(Value::Global(g)) => (g, args),
                    Some(Value::Closure(c)) => {
                        let mut all = args;
                        all.extend(c.1.iter().cloned());
                        (c.0, all)
                    }
                    _ => return Err(err("type", "callee is not a function".into())),
                };
                if prog.codes[target].n_params != *n {
                    return Err(err("arity", format!("{} takes {} arguments, got {n}", prog.codes[target].name, prog.codes[target].n_params)));
                }
                if frames.len() >= MAX_CALL_DEPTH {
                    return Err(err("stack_overflow", "call depth limit exceeded".into()));
                }
                frames.push(new_frame(prog, target, all));
            }
            Instr::Ret => {
                frames.pop();
                if frames.is_empty() {
                    return stack.pop().ok_or_else(|| RuntimeError::new("bad_result", "@main", "empty stack"));
                }
            }
        }
    }
}

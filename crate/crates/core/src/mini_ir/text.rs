//! Canonical text form of IR modules.
//!
//! ```text
//! def @f3(%n1: int32(2)) -> int32(2) {
//!   let %n2: int32(2) = add(%n1, const int32 () [1]);
//!   %n2
//! }
//! ```

use std::fmt::Write as _;

use super::expr::{Expr, Function, Module, Param, Type};
use crate::graph_model::{DType, Shape, TensorType, TensorValue};
use crate::opset::Op;

pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, (name, f)) in m.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "def @{name}(");
        write_params(&mut out, &f.params);
        out.push(')');
        if let Some(ret) = &f.ret {
            let _ = write!(out, " -> {ret}");
        }
        out.push_str(" {\n");
        write_block(&mut out, &f.body, 1);
        out.push_str("}\n");
    }
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_inline(&mut out, e, 0);
    out
}

fn write_params(out: &mut String, params: &[Param]) {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "%{}: {}", p.name, p.ty);
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Writes `e` as a sequence of let lines followed by the result line.
fn write_block(out: &mut String, mut e: &Expr, level: usize) {
    while let Expr::Let { var, ty, value, body } = e {
        indent(out, level);
        let _ = write!(out, "let %{var}");
        if let Some(ty) = ty {
            let _ = write!(out, ": {ty}");
        }
        out.push_str(" = ");
        write_inline(out, value, level);
        out.push_str(";\n");
        e = body;
    }
    indent(out, level);
    write_inline(out, e, level);
    out.push('\n');
}

fn write_list(out: &mut String, items: &[Expr], level: usize) {
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_inline(out, a, level);
    }
}

fn write_inline(out: &mut String, e: &Expr, level: usize) {
    match e {
        Expr::Var(v) => {
            let _ = write!(out, "%{v}");
        }
        Expr::Const(v) => {
            let _ = write!(out, "const {v}");
        }
        Expr::FuncRef(g) => {
            let _ = write!(out, "@{g}");
        }
        Expr::Prim { op, args } => {
            let _ = write!(out, "{op}(");
            write_list(out, args, level);
            out.push(')');
        }
        Expr::Tuple(items) => {
            out.push_str("tuple(");
            write_list(out, items, level);
            out.push(')');
        }
        Expr::Call { callee, args } => {
            write_inline(out, callee, level);
            out.push('(');
            write_list(out, args, level);
            out.push(')');
        }
        Expr::Proj { tuple, index } => {
            write_inline(out, tuple, level);
            let _ = write!(out, ".{index}");
        }
        Expr::Closure { params, body } => {
            out.push_str("fn(");
            write_params(out, params);
            out.push_str(") {\n");
            write_block(out, body, level + 1);
            indent(out, level);
            out.push('}');
        }
        Expr::Let { .. } => {
            out.push_str("{\n");
            write_block(out, e, level + 1);
            indent(out, level);
            out.push('}');
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct IrParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Local(String),
    Global(String),
    Ident(String),
    Int(usize),
    Data(String),
    Arrow,
    Punct(char),
}

struct Lexer;

impl Lexer {
    fn lex(src: &str) -> Result<Vec<(Tok, usize)>, IrParseError> {
        let bytes = src.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        let mut line = 1;
        let word = |i: &mut usize| {
            let start = *i;
            while *i < bytes.len() && (bytes[*i].is_ascii_alphanumeric() || bytes[*i] == b'_') {
                *i += 1;
            }
            src[start..*i].to_string()
        };
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                b'\n' => {
                    line += 1;
                    i += 1;
                }
                c if c.is_ascii_whitespace() => i += 1,
                b'#' => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                }
                b'%' | b'@' => {
                    i += 1;
                    let name = word(&mut i);
                    if name.is_empty() {
                        return Err(IrParseError { line, message: format!("empty name after `{}`", c as char) });
                    }
                    out.push((if c == b'%' { Tok::Local(name) } else { Tok::Global(name) }, line));
                }
                b'[' => {
                    let start = i;
                    while i < bytes.len() && bytes[i] != b']' {
                        if bytes[i] == b'\n' {
                            line += 1;
                        }
                        i += 1;
                    }
                    if i == bytes.len() {
                        return Err(IrParseError { line, message: "unterminated tensor data".into() });
                    }
                    i += 1;
                    out.push((Tok::Data(src[start..i].to_string()), line));
                }
                b'-' if bytes.get(i + 1) == Some(&b'>') => {
                    i += 2;
                    out.push((Tok::Arrow, line));
                }
                c if c.is_ascii_digit() => {
                    let w = word(&mut i);
                    let n = w
                        .parse()
                        .map_err(|_| IrParseError { line, message: format!("bad integer `{w}`") })?;
                    out.push((Tok::Int(n), line));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let w = word(&mut i);
                    out.push((Tok::Ident(w), line));
                }
                b'(' | b')' | b'{' | b'}' | b',' | b';' | b':' | b'=' | b'.' => {
                    out.push((Tok::Punct(c as char), line));
                    i += 1;
                }
                _ => {
                    return Err(IrParseError { line, message: format!("unexpected character `{}`", c as char) });
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.1)
            .unwrap_or(1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, IrParseError> {
        Err(IrParseError { line: self.line(), message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn expect_punct(&mut self, c: char) -> Result<(), IrParseError> {
        if self.is_punct(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {:?}", self.peek()))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == kw)
    }

    fn ident(&mut self) -> Result<String, IrParseError> {
        match self.next() {
            Some(Tok::Ident(w)) => Ok(w),
            other => {
                self.pos -= 1;
                self.err(format!("expected identifier, found {other:?}"))
            }
        }
    }

    fn local(&mut self) -> Result<String, IrParseError> {
        match self.next() {
            Some(Tok::Local(w)) => Ok(w),
            other => {
                self.pos -= 1;
                self.err(format!("expected %name, found {other:?}"))
            }
        }
    }

    /// Comma-separated items until `close`, consuming the closing token.
    fn list<T>(&mut self, close: char, mut item: impl FnMut(&mut Self) -> Result<T, IrParseError>) -> Result<Vec<T>, IrParseError> {
        let mut out = Vec::new();
        if self.is_punct(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.is_punct(',') {
                self.pos += 1;
            } else {
                self.expect_punct(close)?;
                return Ok(out);
            }
        }
    }

    fn shape(&mut self) -> Result<Shape, IrParseError> {
        self.expect_punct('(')?;
        let dims = self.list(')', |p| match p.next() {
            Some(Tok::Int(0)) => {
                p.pos -= 1;
                p.err("shape extents must be at least 1")
            }
            Some(Tok::Int(n)) => Ok(n),
            other => {
                p.pos -= 1;
                p.err(format!("expected extent, found {other:?}"))
            }
        })?;
        Ok(Shape(dims))
    }

    fn dtype(&mut self) -> Result<DType, IrParseError> {
        let w = self.ident()?;
        match w.parse() {
            Ok(d) => Ok(d),
            Err(_) => {
                self.pos -= 1;
                self.err(format!("unknown dtype `{w}`"))
            }
        }
    }

    fn ty(&mut self) -> Result<Type, IrParseError> {
        if self.is_keyword("fn") {
            self.pos += 1;
            self.expect_punct('(')?;
            let params = self.list(')', |p| p.ty())?;
            match self.next() {
                Some(Tok::Arrow) => {}
                _ => {
                    self.pos -= 1;
                    return self.err("expected `->` in function type");
                }
            }
            let ret = self.ty()?;
            return Ok(Type::Func { params, ret: Box::new(ret) });
        }
        if self.is_keyword("tuple") {
            self.pos += 1;
            self.expect_punct('(')?;
            return Ok(Type::Tuple(self.list(')', |p| p.ty())?));
        }
        let dtype = self.dtype()?;
        let shape = self.shape()?;
        Ok(Type::Tensor(TensorType::new(dtype, shape)))
    }

    fn params(&mut self) -> Result<Vec<Param>, IrParseError> {
        self.expect_punct('(')?;
        self.list(')', |p| {
            let name = p.local()?;
            p.expect_punct(':')?;
            Ok(Param { name, ty: p.ty()? })
        })
    }

    fn expr(&mut self) -> Result<Expr, IrParseError> {
        if self.is_keyword("let") {
            self.pos += 1;
            let var = self.local()?;
            let ty = if self.is_punct(':') {
                self.pos += 1;
                Some(self.ty()?)
            } else {
                None
            };
            self.expect_punct('=')?;
            let value = self.expr()?;
            self.expect_punct(';')?;
            let body = self.expr()?;
            return Ok(Expr::Let { var, ty, value: Box::new(value), body: Box::new(body) });
        }
        let mut e = self.primary()?;
        loop {
            if self.is_punct('(') {
                self.pos += 1;
                let args = self.list(')', |p| p.expr())?;
                e = Expr::Call { callee: Box::new(e), args };
            } else if self.is_punct('.') {
                self.pos += 1;
                match self.next() {
                    Some(Tok::Int(i)) => e = Expr::proj(e, i),
                    _ => {
                        self.pos -= 1;
                        return self.err("expected tuple index after `.`");
                    }
                }
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, IrParseError> {
        match self.next() {
            Some(Tok::Local(v)) => Ok(Expr::Var(v)),
            Some(Tok::Global(g)) => Ok(Expr::FuncRef(g)),
            Some(Tok::Punct('(')) => {
                let e = self.expr()?;
                self.expect_punct(')')?;
                Ok(e)
            }
            Some(Tok::Punct('{')) => {
                let e = self.expr()?;
                self.expect_punct('}')?;
                Ok(e)
            }
            Some(Tok::Ident(w)) => match w.as_str() {
                "const" => {
                    let dtype = self.dtype()?;
                    let shape = self.shape()?;
                    match self.next() {
                        Some(Tok::Data(d)) => match TensorValue::parse_data(dtype, shape, &d) {
                            Ok(v) => Ok(Expr::Const(v)),
                            Err(e) => {
                                self.pos -= 1;
                                self.err(e.to_string())
                            }
                        },
                        _ => {
                            self.pos -= 1;
                            self.err("expected tensor data")
                        }
                    }
                }
                "fn" => {
                    let params = self.params()?;
                    self.expect_punct('{')?;
                    let body = self.expr()?;
                    self.expect_punct('}')?;
                    Ok(Expr::Closure { params, body: Box::new(body) })
                }
                "tuple" => {
                    self.expect_punct('(')?;
                    Ok(Expr::Tuple(self.list(')', |p| p.expr())?))
                }
                name => {
                    let op: Op = match name.parse() {
                        Ok(op) => op,
                        Err(_) => {
                            self.pos -= 1;
                            return self.err(format!("unknown operator `{name}`"));
                        }
                    };
                    self.expect_punct('(')?;
                    let args = self.list(')', |p| p.expr())?;
                    Ok(Expr::Prim { op, args })
                }
            },
            other => {
                self.pos = self.pos.saturating_sub(1);
                self.err(format!("expected expression, found {other:?}"))
            }
        }
    }

    fn module(&mut self) -> Result<Module, IrParseError> {
        let mut m = Module::new();
        while self.peek().is_some() {
            if !self.is_keyword("def") {
                return self.err("expected `def`");
            }
            self.pos += 1;
            let name = match self.next() {
                Some(Tok::Global(g)) => g,
                _ => {
                    self.pos -= 1;
                    return self.err("expected @name after `def`");
                }
            };
            let params = self.params()?;
            let ret = if self.peek() == Some(&Tok::Arrow) {
                self.pos += 1;
                Some(self.ty()?)
            } else {
                None
            };
            self.expect_punct('{')?;
            let body = self.expr()?;
            self.expect_punct('}')?;
            if m.functions.insert(name.clone(), Function { params, body, ret }).is_some() {
                return self.err(format!("duplicate definition of @{name}"));
            }
        }
        Ok(m)
    }
}

pub fn parse_module(src: &str) -> Result<Module, IrParseError> {
    let toks = Lexer::lex(src)?;
    Parser { toks, pos: 0 }.module()
}

pub fn parse_expr(src: &str) -> Result<Expr, IrParseError> {
    let toks = Lexer::lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
def @f3(%n1: int32(2), %n0: float32()) -> int32(2) {
  let %n2: int32(2) = add(%n1, const int32 () [1]);
  %n2
}

def @main(%n0: float32(), %n1: int32(2)) {
  let %g = fn(%x: int32(2)) {
    let %y = negative(%x);
    %y
  };
  let %t = tuple(@f3(%n1, %n0), %g(%n1), const float32 (2) [NaN,-0.5]);
  let %u = {
    let %z = %t.0;
    @w()(%z)
  };
  tuple(%u, %t.2)
}
";

    #[test]
    fn round_trips_byte_identically() {
        let m = parse_module(SAMPLE).unwrap();
        assert_eq!(m.functions.len(), 2);
        assert_eq!(print_module(&m), SAMPLE);
        assert_eq!(parse_module(&print_module(&m)).unwrap(), m);
    }

    #[test]
    fn types_parse() {
        let e = parse_expr("fn(%f: fn(int8(), tuple(bool(3))) -> uint8(1,2)) { %f }").unwrap();
        let Expr::Closure { params, .. } = e else { panic!() };
        assert_eq!(params[0].ty.to_string(), "fn(int8(), tuple(bool(3))) -> uint8(1,2)");
    }

    #[test]
    fn errors_carry_lines() {
        let err = parse_module("def @main() {\n  add(%x,\n}").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(parse_expr("sqrtx(%a)").is_err());
        assert!(parse_expr("const int8 (2) [1]").is_err());
        assert!(parse_expr("const int8 (0) []").is_err());
        assert!(parse_module("def @a() { %x }\ndef @a() { %x }").is_err());
    }
}

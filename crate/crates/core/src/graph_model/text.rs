//! Line-oriented canonical text form of a computational graph:
//!
//! ```text
//! 0 variable float32 (2,3)
//! 1 constant int16 () [3]
//! 2 operator sqrt 1
//! 3 function body=2 inputs=1 outputs=2
//! 4 call 3 2
//! ```
//!
//! Lines starting with `#` and blank lines are ignored when parsing.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{ComputationalGraph, DType, GraphError, Node, NodeId, Shape, TensorValue};
use crate::opset::Op;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Structure {
        line: usize,
        #[source]
        source: GraphError,
    },
}

pub fn to_text(g: &ComputationalGraph) -> String {
    let mut out = String::new();
    for (id, node) in g.iter() {
        let _ = match node {
            Node::Variable { dtype, shape } => writeln!(out, "{id} variable {dtype} {shape}"),
            Node::Constant { value } => writeln!(
                out,
                "{id} constant {} {} {}",
                value.dtype(),
                value.shape(),
                value.data_text()
            ),
            Node::Operator { op, parents } => {
                write!(out, "{id} operator {op}").and_then(|_| {
                    for p in parents {
                        write!(out, " {p}")?;
                    }
                    writeln!(out)
                })
            }
            Node::Function { body, inputs, outputs } => writeln!(
                out,
                "{id} function body={} inputs={} outputs={}",
                join(body),
                join(inputs),
                join(outputs)
            ),
            Node::Call { func, output } => writeln!(out, "{id} call {func} {output}"),
        };
    }
    out
}

fn join(ids: &[NodeId]) -> String {
    ids.iter().map(|i| i.0.to_string()).collect::<Vec<_>>().join(",")
}

pub fn from_text(text: &str) -> Result<ComputationalGraph, GraphParseError> {
    let mut g = ComputationalGraph::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        let syntax = |message: String| GraphParseError::Syntax { line: lineno, message };
        let mut fields = line.splitn(3, char::is_whitespace);
        let id: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| syntax("missing node id".into()))?;
        if id != g.len() {
            return Err(syntax(format!("expected node id {}, found {id}", g.len())));
        }
        let kind = fields.next().ok_or_else(|| syntax("missing node kind".into()))?;
        let rest = fields.next().unwrap_or("").trim();
        let node = match kind {
            "variable" => {
                let (dtype, shape) = dtype_shape(rest).map_err(syntax)?;
                Node::Variable { dtype, shape }
            }
            "constant" => {
                let (head, data) = rest
                    .split_once('[')
                    .ok_or_else(|| syntax("constant without data".into()))?;
                let (dtype, shape) = dtype_shape(head.trim()).map_err(syntax)?;
                let value = TensorValue::parse_data(dtype, shape, &format!("[{data}"))
                    .map_err(|e| syntax(e.to_string()))?;
                Node::Constant { value }
            }
            "operator" => {
                let mut parts = rest.split_whitespace();
                let op: Op = parts
                    .next()
                    .ok_or_else(|| syntax("missing operator name".into()))?
                    .parse()
                    .map_err(|e: crate::opset::UnknownOperator| syntax(e.to_string()))?;
                let parents = parts.map(parse_id).collect::<Result<Vec<_>, _>>().map_err(syntax)?;
                Node::Operator { op, parents }
            }
            "function" => {
                let mut body = None;
                let mut inputs = None;
                let mut outputs = None;
                for part in rest.split_whitespace() {
                    let (key, value) = part
                        .split_once('=')
                        .ok_or_else(|| syntax(format!("bad function field `{part}`")))?;
                    let ids = parse_ids(value).map_err(syntax)?;
                    match key {
                        "body" => body = Some(ids),
                        "inputs" => inputs = Some(ids),
                        "outputs" => outputs = Some(ids),
                        _ => return Err(syntax(format!("unknown function field `{key}`"))),
                    }
                }
                let missing = |f: &str| syntax(format!("function missing `{f}`"));
                Node::Function {
                    body: body.ok_or_else(|| missing("body"))?,
                    inputs: inputs.ok_or_else(|| missing("inputs"))?,
                    outputs: outputs.ok_or_else(|| missing("outputs"))?,
                }
            }
            "call" => {
                let ids = rest.split_whitespace().map(parse_id).collect::<Result<Vec<_>, _>>().map_err(syntax)?;
                match ids.as_slice() {
                    [func, output] => Node::Call { func: *func, output: *output },
                    _ => return Err(syntax("call takes a function and an output".into())),
                }
            }
            other => return Err(syntax(format!("unknown node kind `{other}`"))),
        };
        g.push(node)
            .map_err(|source| GraphParseError::Structure { line: lineno, source })?;
    }
    Ok(g)
}

fn dtype_shape(s: &str) -> Result<(DType, Shape), String> {
    let (d, sh) = s
        .split_once(char::is_whitespace)
        .ok_or_else(|| format!("expected `<dtype> <shape>`, got `{s}`"))?;
    let dtype = d.parse::<DType>().map_err(|e| e.to_string())?;
    let shape = sh.trim().parse::<Shape>().map_err(|e| e.to_string())?;
    Ok((dtype, shape))
}

fn parse_id(s: &str) -> Result<NodeId, String> {
    s.parse().map(NodeId).map_err(|_| format!("bad node id `{s}`"))
}

fn parse_ids(s: &str) -> Result<Vec<NodeId>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_id).collect()
}

/// Short stable hash of the canonical text.
pub fn fingerprint(g: &ComputationalGraph) -> String {
    let digest = Sha256::digest(to_text(g).as_bytes());
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
0 variable float32 (2,3)
1 constant int16 () [3]
2 operator sqrt 1
3 operator add 0 0
4 function body=2 inputs=1 outputs=2
5 call 4 2
";

    #[test]
    fn parses_and_prints_byte_identically() {
        let g = from_text(SAMPLE).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(to_text(&g), SAMPLE);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(from_text("1 variable int8 ()"), Err(GraphParseError::Syntax { .. })));
        assert!(matches!(
            from_text("0 operator add 0 0"),
            Err(GraphParseError::Structure { source: GraphError::ForwardReference { .. }, .. })
        ));
        assert!(from_text("0 variable int8 ()\n1 operator add 0").is_err());
        assert!(from_text("0 blob").is_err());
        assert!(from_text("0 constant int8 () [999]").is_err());
    }

    #[test]
    fn empty_lists_and_comments() {
        let text = "# comment\n0 constant bool (2) [true,false]\n1 function body=0 inputs= outputs=0\n";
        let g = from_text(text).unwrap();
        assert_eq!(to_text(&g), "0 constant bool (2) [true,false]\n1 function body=0 inputs= outputs=0\n");
    }

    #[test]
    fn fingerprint_is_stable() {
        let g = from_text(SAMPLE).unwrap();
        assert_eq!(fingerprint(&g), fingerprint(&from_text(SAMPLE).unwrap()));
        assert_eq!(fingerprint(&g).len(), 16);
        assert_ne!(fingerprint(&g), fingerprint(&g.prefix(3)));
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{broadcast_shapes, subgraph_boundary, ComputationalGraph, Node, NodeId, NodeInfo, NodeInfoTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    DtypeMismatch,
    ShapeMismatch,
    OperatorDtypeInadmissible,
    MalformedFunction,
    MalformedCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub node: NodeId,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {:?}: {}", self.node, self.kind, self.detail)
    }
}

/// Checks the integrity constraints of every node. The result is sorted by
/// node id; an empty list means the graph is well-typed and well-formed.
///
/// Operators whose operands already lack a type are skipped, since the
/// violation is reported at the operand.
pub fn validate_graph(g: &ComputationalGraph, t: &NodeInfoTable) -> Vec<ConstraintViolation> {
    debug_assert_eq!(g.len(), t.len(), "info table out of lockstep");
    let mut out = Vec::new();
    let mut report = |node: NodeId, kind: ViolationKind, detail: String| {
        out.push(ConstraintViolation { node, kind, detail });
    };
    for (id, node) in g.iter() {
        match node {
            Node::Variable { .. } | Node::Constant { .. } => {}
            Node::Operator { op, parents } => {
                if let Some(p) = parents.iter().find(|p| !g.node(**p).is_tensor()) {
                    report(id, ViolationKind::MalformedFunction, format!("function node {p} used as operand of {op}"));
                    continue;
                }
                let Some(types) = parents
                    .iter()
                    .map(|p| t.tensor_type(*p))
                    .collect::<Option<Vec<_>>>()
                else {
                    continue;
                };
                let dtype = types[0].dtype;
                if let Some(other) = types.iter().find(|ty| ty.dtype != dtype) {
                    report(id, ViolationKind::DtypeMismatch, format!("{op} operands have dtypes {dtype} and {}", other.dtype));
                }
                if !op.admits(dtype) {
                    report(id, ViolationKind::OperatorDtypeInadmissible, format!("{op} does not admit {dtype}"));
                }
                if types.len() == 2 {
                    if let Err(e) = broadcast_shapes(&types[0].shape, &types[1].shape) {
                        report(id, ViolationKind::ShapeMismatch, format!("{op}: {e}"));
                    }
                }
            }
            Node::Function { body, inputs, outputs } => {
                if let Err(detail) = check_function(g, id, body, inputs, outputs) {
                    report(id, ViolationKind::MalformedFunction, detail);
                }
            }
            Node::Call { func, output } => {
                let ok = match g.node(*func) {
                    Node::Function { outputs, .. } => outputs.contains(output),
                    _ => false,
                };
                if !ok {
                    report(id, ViolationKind::MalformedCall, format!("call of {func} with output {output}"));
                } else if let NodeInfo::Call { ty: None, .. } = t.get(id) {
                    report(id, ViolationKind::MalformedCall, format!("output {output} has no type"));
                }
            }
        }
    }
    out.sort_by_key(|v| v.node);
    out
}

fn check_function(
    g: &ComputationalGraph,
    id: NodeId,
    body: &[NodeId],
    inputs: &[NodeId],
    outputs: &[NodeId],
) -> Result<(), String> {
    if body.is_empty() {
        return Err("empty body".into());
    }
    if body.windows(2).any(|w| w[0] >= w[1]) {
        return Err("body is not a sorted set".into());
    }
    if let Some(b) = body.iter().find(|b| !matches!(g.node(**b), Node::Variable { .. } | Node::Constant { .. } | Node::Operator { .. })) {
        return Err(format!("body member {b} is a function or call node"));
    }
    if body.iter().any(|b| *b >= id) {
        return Err("body member does not precede the function".into());
    }
    let (exp_inputs, exp_outputs) = subgraph_boundary(g, body);
    if exp_inputs != inputs {
        return Err(format!("inputs {inputs:?} differ from boundary {exp_inputs:?}"));
    }
    if exp_outputs != outputs {
        return Err(format!("outputs {outputs:?} differ from boundary {exp_outputs:?}"));
    }
    if !is_connected(g, body) {
        return Err("body is not connected".into());
    }
    Ok(())
}

fn is_connected(g: &ComputationalGraph, body: &[NodeId]) -> bool {
    let pos = |id: NodeId| body.binary_search(&id).ok();
    let mut adj = vec![Vec::new(); body.len()];
    for (i, b) in body.iter().enumerate() {
        if let Node::Operator { parents, .. } = g.node(*b) {
            for p in parents {
                if let Some(j) = pos(*p) {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
    }
    let mut seen = vec![false; body.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::{DType, Shape, TensorValue};
    use crate::opset::Op;

    fn build(nodes: Vec<Node>) -> (ComputationalGraph, NodeInfoTable) {
        let mut g = ComputationalGraph::new();
        for n in nodes {
            g.push(n).unwrap();
        }
        let t = NodeInfoTable::rebuild(&g);
        (g, t)
    }

    #[test]
    fn empty_graph_is_valid() {
        let (g, t) = build(vec![]);
        assert!(validate_graph(&g, &t).is_empty());
    }

    #[test]
    fn sqrt_of_int16_is_inadmissible() {
        let (g, t) = build(vec![
            Node::Constant {
                value: TensorValue::from_i64s(DType::Int16, Shape::scalar(), &[4]).unwrap(),
            },
            Node::Operator {
                op: Op::Sqrt,
                parents: vec![NodeId(0)],
            },
        ]);
        let v = validate_graph(&g, &t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].node, NodeId(1));
        assert_eq!(v[0].kind, ViolationKind::OperatorDtypeInadmissible);
    }

    #[test]
    fn broadcastable_add_is_valid() {
        let (g, t) = build(vec![
            Node::Variable { dtype: DType::Float32, shape: Shape::new([1, 2]) },
            Node::Variable { dtype: DType::Float32, shape: Shape::new([3, 1]) },
            Node::Operator { op: Op::Add, parents: vec![NodeId(0), NodeId(1)] },
        ]);
        assert!(validate_graph(&g, &t).is_empty());
    }

    #[test]
    fn mismatches_are_reported_in_order() {
        let (g, t) = build(vec![
            Node::Variable { dtype: DType::Float32, shape: Shape::new([2, 3]) },
            Node::Variable { dtype: DType::Int32, shape: Shape::new([4]) },
            Node::Variable { dtype: DType::Int32, shape: Shape::new([2]) },
            Node::Operator { op: Op::Add, parents: vec![NodeId(1), NodeId(2)] },
            Node::Operator { op: Op::Add, parents: vec![NodeId(0), NodeId(1)] },
        ]);
        let v = validate_graph(&g, &t);
        let kinds: Vec<_> = v.iter().map(|v| (v.node.0, v.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (3, ViolationKind::ShapeMismatch),
                (4, ViolationKind::DtypeMismatch),
                (4, ViolationKind::ShapeMismatch)
            ]
        );
    }

    #[test]
    fn malformed_function_and_call() {
        let (g, t) = build(vec![
            Node::Variable { dtype: DType::Int8, shape: Shape::scalar() },
            Node::Operator { op: Op::Negative, parents: vec![NodeId(0)] },
            // wrong inputs: boundary of {1} is [0]
            Node::Function { body: vec![NodeId(1)], inputs: vec![], outputs: vec![NodeId(1)] },
            Node::Call { func: NodeId(0), output: NodeId(1) },
        ]);
        let v = validate_graph(&g, &t);
        let kinds: Vec<_> = v.iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::MalformedFunction, ViolationKind::MalformedCall]);
    }
}

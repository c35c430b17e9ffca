use std::collections::BTreeMap;

use super::{ComputationalGraph, Node, NodeId, TensorValue};
use crate::opset::{eval_elementwise, EvalError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphEvalError {
    #[error("no input bound for variable node {0}")]
    MissingInput(NodeId),
    #[error("node {node}: {source}")]
    Kernel {
        node: NodeId,
        #[source]
        source: EvalError,
    },
    #[error("node {0} does not produce a tensor")]
    NotATensor(NodeId),
    #[error("call {0} is malformed")]
    MalformedCall(NodeId),
}

/// Directly evaluates every tensor node of `g`, independent of any IR.
/// Call nodes re-execute their function's body on the function inputs.
/// Function nodes evaluate to `None`.
pub fn evaluate_graph(
    g: &ComputationalGraph,
    inputs: &BTreeMap<NodeId, TensorValue>,
) -> Result<Vec<Option<TensorValue>>, GraphEvalError> {
    let mut values: Vec<Option<TensorValue>> = Vec::with_capacity(g.len());
    for (id, node) in g.iter() {
        let v = match node {
            Node::Function { .. } => None,
            Node::Call { func, output } => {
                let Node::Function { body, inputs: fin, .. } = g.node(*func) else {
                    return Err(GraphEvalError::MalformedCall(id));
                };
                let mut local: BTreeMap<NodeId, TensorValue> = BTreeMap::new();
                for i in fin {
                    let v = values[i.0].clone().ok_or(GraphEvalError::NotATensor(*i))?;
                    local.insert(*i, v);
                }
                for b in body {
                    let v = eval_node(g, *b, |p| local.get(&p).cloned(), inputs)?;
                    local.insert(*b, v);
                }
                Some(local.remove(output).ok_or(GraphEvalError::MalformedCall(id))?)
            }
            _ => Some(eval_node(g, id, |p| values[p.0].clone(), inputs)?),
        };
        values.push(v);
    }
    Ok(values)
}

fn eval_node(
    g: &ComputationalGraph,
    id: NodeId,
    lookup: impl Fn(NodeId) -> Option<TensorValue>,
    inputs: &BTreeMap<NodeId, TensorValue>,
) -> Result<TensorValue, GraphEvalError> {
    match g.node(id) {
        Node::Variable { .. } => inputs.get(&id).cloned().ok_or(GraphEvalError::MissingInput(id)),
        Node::Constant { value } => Ok(value.clone()),
        Node::Operator { op, parents } => {
            let args = parents
                .iter()
                .map(|p| lookup(*p).ok_or(GraphEvalError::NotATensor(*p)))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&TensorValue> = args.iter().collect();
            eval_elementwise(*op, &refs).map_err(|source| GraphEvalError::Kernel { node: id, source })
        }
        Node::Function { .. } | Node::Call { .. } => Err(GraphEvalError::NotATensor(id)),
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{broadcast_shapes, ComputationalGraph, DType, Node, NodeId, Shape, ShapeMismatch, TensorValue};

/// Static type of a tensor-producing node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorType {
    pub dtype: DType,
    pub shape: Shape,
}

impl TensorType {
    pub fn new(dtype: DType, shape: Shape) -> Self {
        TensorType { dtype, shape }
    }

    pub fn of(value: &TensorValue) -> Self {
        TensorType::new(value.dtype(), value.shape().clone())
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.dtype, self.shape)
    }
}

/// Per-node metadata mirrored alongside the graph. Inferred types are `None`
/// when inference failed (only possible for unconstrained graphs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeInfo {
    Variable {
        ty: TensorType,
    },
    Constant {
        ty: TensorType,
        value: TensorValue,
    },
    Operator {
        parents: Vec<NodeId>,
        ty: Option<TensorType>,
    },
    Function {
        inputs: Vec<(NodeId, Option<TensorType>)>,
        outputs: Vec<(NodeId, Option<TensorType>)>,
    },
    Call {
        func: NodeId,
        output: NodeId,
        ty: Option<TensorType>,
    },
}

impl NodeInfo {
    /// Tensor type of the node, if it produces a tensor with a known type.
    pub fn tensor_type(&self) -> Option<&TensorType> {
        match self {
            NodeInfo::Variable { ty } | NodeInfo::Constant { ty, .. } => Some(ty),
            NodeInfo::Operator { ty, .. } | NodeInfo::Call { ty, .. } => ty.as_ref(),
            NodeInfo::Function { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferError {
    #[error("operand dtypes {lhs} and {rhs} differ")]
    DtypeMismatch { lhs: DType, rhs: DType },
    #[error(transparent)]
    ShapeMismatch(#[from] ShapeMismatch),
    #[error("node {0} has no inferred tensor type")]
    Untyped(NodeId),
    #[error("call refers to {func}, which is not a function with output {output}")]
    MalformedCall { func: NodeId, output: NodeId },
}

/// Node infos kept in lockstep with a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeInfoTable {
    infos: Vec<NodeInfo>,
}

impl NodeInfoTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Re-derives every info from scratch; inference failures leave the type unknown.
    pub fn rebuild(g: &ComputationalGraph) -> Self {
        let mut t = NodeInfoTable::new();
        for (_, node) in g.iter() {
            let info = infer_info_lenient(node, &t);
            t.push(info);
        }
        t
    }

    pub fn push(&mut self, info: NodeInfo) {
        self.infos.push(info);
    }

    pub fn get(&self, id: NodeId) -> &NodeInfo {
        &self.infos[id.0]
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeInfo)> {
        self.infos.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn tensor_type(&self, id: NodeId) -> Option<&TensorType> {
        self.get(id).tensor_type()
    }
}

/// Derives the info record of `node` from the infos of the nodes it refers to.
pub fn infer_info(node: &Node, t: &NodeInfoTable) -> Result<NodeInfo, InferError> {
    Ok(match node {
        Node::Variable { dtype, shape } => NodeInfo::Variable {
            ty: TensorType::new(*dtype, shape.clone()),
        },
        Node::Constant { value } => NodeInfo::Constant {
            ty: TensorType::of(value),
            value: value.clone(),
        },
        Node::Operator { op, parents } => {
            let types = parents
                .iter()
                .map(|p| t.tensor_type(*p).ok_or(InferError::Untyped(*p)))
                .collect::<Result<Vec<_>, _>>()?;
            let dtype = types[0].dtype;
            let mut shape = types[0].shape.clone();
            for other in &types[1..] {
                if other.dtype != dtype {
                    return Err(InferError::DtypeMismatch {
                        lhs: dtype,
                        rhs: other.dtype,
                    });
                }
                shape = broadcast_shapes(&shape, &other.shape)?;
            }
            NodeInfo::Operator {
                parents: parents.clone(),
                ty: Some(TensorType::new(op.spec().result_dtype(dtype), shape)),
            }
        }
        Node::Function { inputs, outputs, .. } => {
            let collect = |ids: &[NodeId]| {
                ids.iter()
                    .map(|id| (*id, t.tensor_type(*id).cloned()))
                    .collect()
            };
            NodeInfo::Function {
                inputs: collect(inputs),
                outputs: collect(outputs),
            }
        }
        Node::Call { func, output } => {
            let malformed = || InferError::MalformedCall {
                func: *func,
                output: *output,
            };
            match t.get(*func) {
                NodeInfo::Function { outputs, .. } => {
                    let (_, ty) = outputs
                        .iter()
                        .find(|(id, _)| id == output)
                        .ok_or_else(malformed)?;
                    NodeInfo::Call {
                        func: *func,
                        output: *output,
                        ty: Some(ty.clone().ok_or(InferError::Untyped(*output))?),
                    }
                }
                _ => return Err(malformed()),
            }
        }
    })
}

/// Like [`infer_info`], but records an unknown type instead of failing.
pub fn infer_info_lenient(node: &Node, t: &NodeInfoTable) -> NodeInfo {
    infer_info(node, t).unwrap_or_else(|_| match node {
        Node::Operator { parents, .. } => NodeInfo::Operator {
            parents: parents.clone(),
            ty: None,
        },
        Node::Call { func, output } => NodeInfo::Call {
            func: *func,
            output: *output,
            ty: None,
        },
        _ => unreachable!("leaf and function inference cannot fail"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opset::{eval_elementwise, Op};

    fn var(g: &mut ComputationalGraph, t: &mut NodeInfoTable, dtype: DType, dims: &[usize]) -> NodeId {
        let node = Node::Variable {
            dtype,
            shape: Shape::new(dims.to_vec()),
        };
        t.push(infer_info(&node, t).unwrap());
        g.push(node).unwrap()
    }

    #[test]
    fn comparison_infers_bool() {
        let (mut g, mut t) = (ComputationalGraph::new(), NodeInfoTable::new());
        let a = var(&mut g, &mut t, DType::Float32, &[2]);
        let b = var(&mut g, &mut t, DType::Float32, &[2]);
        let node = Node::Operator {
            op: Op::Equal,
            parents: vec![a, b],
        };
        let info = infer_info(&node, &t).unwrap();
        let ty = info.tensor_type().unwrap().clone();
        // Oracle: evaluate the operator on concrete tensors of the parent types.
        let x = TensorValue::from_f64s(DType::Float32, Shape::new([2]), &[1.0, 2.0]).unwrap();
        let y = TensorValue::from_f64s(DType::Float32, Shape::new([2]), &[1.0, 3.0]).unwrap();
        let out = eval_elementwise(Op::Equal, &[&x, &y]).unwrap();
        assert_eq!(ty, TensorType::of(&out));
        assert_eq!(ty, TensorType::new(DType::Bool, Shape::new([2])));
    }

    #[test]
    fn scalar_add_and_dtype_mismatch() {
        let (mut g, mut t) = (ComputationalGraph::new(), NodeInfoTable::new());
        let a = var(&mut g, &mut t, DType::Int64, &[]);
        let b = var(&mut g, &mut t, DType::Int64, &[]);
        let c = var(&mut g, &mut t, DType::Float32, &[]);
        let add = |p| Node::Operator { op: Op::Add, parents: p };
        assert_eq!(
            infer_info(&add(vec![a, b]), &t).unwrap().tensor_type(),
            Some(&TensorType::new(DType::Int64, Shape::scalar()))
        );
        assert_eq!(
            infer_info(&add(vec![a, c]), &t),
            Err(InferError::DtypeMismatch {
                lhs: DType::Int64,
                rhs: DType::Float32
            })
        );
    }

    #[test]
    fn call_inherits_output_info() {
        let (mut g, mut t) = (ComputationalGraph::new(), NodeInfoTable::new());
        let c = Node::Constant {
            value: TensorValue::from_i64s(DType::Int32, Shape::scalar(), &[5]).unwrap(),
        };
        t.push(infer_info(&c, &t).unwrap());
        let c = g.push(c).unwrap();
        let f = Node::Function {
            body: vec![c],
            inputs: vec![],
            outputs: vec![c],
        };
        t.push(infer_info(&f, &t).unwrap());
        let f = g.push(f).unwrap();
        let call = infer_info(&Node::Call { func: f, output: c }, &t).unwrap();
        assert_eq!(call.tensor_type(), t.tensor_type(c));
        assert!(infer_info(&Node::Call { func: c, output: c }, &t).is_err());
    }
}

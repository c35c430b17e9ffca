use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DType, Shape, TensorValue};
use crate::opset::Op;

/// Position of a node in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Variable { dtype: DType, shape: Shape },
    Constant { value: TensorValue },
    Operator { op: Op, parents: Vec<NodeId> },
    /// A subgraph collapsed into a callable unit. `body` is a sorted set of
    /// node ids of this graph.
    Function {
        body: Vec<NodeId>,
        inputs: Vec<NodeId>,
        outputs: Vec<NodeId>,
    },
    Call { func: NodeId, output: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Variable,
    Constant,
    Operator,
    Function,
    Call,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Variable,
        NodeKind::Constant,
        NodeKind::Operator,
        NodeKind::Function,
        NodeKind::Call,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Variable => "variable",
            NodeKind::Constant => "constant",
            NodeKind::Operator => "operator",
            NodeKind::Function => "function",
            NodeKind::Call => "call",
        }
    }
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Variable { .. } => NodeKind::Variable,
            Node::Constant { .. } => NodeKind::Constant,
            Node::Operator { .. } => NodeKind::Operator,
            Node::Function { .. } => NodeKind::Function,
            Node::Call { .. } => NodeKind::Call,
        }
    }

    /// Every node id this node refers to.
    pub fn references(&self) -> Vec<NodeId> {
        match self {
            Node::Variable { .. } | Node::Constant { .. } => Vec::new(),
            Node::Operator { parents, .. } => parents.clone(),
            Node::Function { body, inputs, outputs } => {
                let mut r = body.clone();
                r.extend(inputs);
                r.extend(outputs);
                r
            }
            Node::Call { func, output } => vec![*func, *output],
        }
    }

    /// Produces a tensor (everything except function nodes).
    pub fn is_tensor(&self) -> bool {
        !matches!(self, Node::Function { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("node {node} refers to {target}, which does not precede it")]
    ForwardReference { node: NodeId, target: NodeId },
    #[error("operator {op} at node {node} expects {expected} parents, got {got}")]
    Arity {
        node: NodeId,
        op: Op,
        expected: usize,
        got: usize,
    },
}

/// Append-only DAG. Every reference points to an earlier node, so the
/// insertion order is a topological order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ComputationalGraph {
    nodes: Vec<Node>,
}

impl ComputationalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, node: Node) -> Result<NodeId, GraphError> {
        let id = NodeId(self.nodes.len());
        if let Some(&target) = node.references().iter().find(|r| r.0 >= id.0) {
            return Err(GraphError::ForwardReference { node: id, target });
        }
        if let Node::Operator { op, parents } = &node {
            if parents.len() != op.arity() {
                return Err(GraphError::Arity {
                    node: id,
                    op: *op,
                    expected: op.arity(),
                    got: parents.len(),
                });
            }
        }
        self.nodes.push(node);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind() == kind).count()
    }

    /// Tensor nodes that no operator consumes, in id order.
    pub fn sinks(&self) -> Vec<NodeId> {
        let mut consumed = vec![false; self.len()];
        for node in &self.nodes {
            if let Node::Operator { parents, .. } = node {
                for p in parents {
                    consumed[p.0] = true;
                }
            }
        }
        self.iter()
            .filter(|(id, n)| n.is_tensor() && !consumed[id.0])
            .map(|(id, _)| id)
            .collect()
    }

    /// For each node, the nodes that refer to it.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.len()];
        for (id, node) in self.iter() {
            let mut refs = node.references();
            refs.sort();
            refs.dedup();
            for r in refs {
                out[r.0].push(id);
            }
        }
        out
    }

    /// The first `len` nodes. Always well-formed because references point backwards.
    pub fn prefix(&self, len: usize) -> ComputationalGraph {
        ComputationalGraph {
            nodes: self.nodes[..len.min(self.len())].to_vec(),
        }
    }

    /// Removes `victim` together with everything that transitively refers to
    /// it, renumbering the survivors densely.
    pub fn remove_with_consumers(&self, victim: NodeId) -> ComputationalGraph {
        let mut removed = vec![false; self.len()];
        removed[victim.0] = true;
        for (id, node) in self.iter().skip(victim.0 + 1) {
            if node.references().iter().any(|r| removed[r.0]) {
                removed[id.0] = true;
            }
        }
        self.retain(&removed.iter().map(|r| !r).collect::<Vec<_>>())
    }

    /// Keeps the nodes flagged in `keep`. The kept set must be closed under
    /// references.
    pub fn retain(&self, keep: &[bool]) -> ComputationalGraph {
        let mut remap = vec![None; self.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = Some(NodeId(next));
                next += 1;
            }
        }
        let m = |id: &NodeId| remap[id.0].expect("retain: kept set is not reference-closed");
        let nodes = self
            .iter()
            .filter(|(id, _)| keep[id.0])
            .map(|(_, node)| match node {
                Node::Variable { .. } | Node::Constant { .. } => node.clone(),
                Node::Operator { op, parents } => Node::Operator {
                    op: *op,
                    parents: parents.iter().map(m).collect(),
                },
                Node::Function { body, inputs, outputs } => Node::Function {
                    body: body.iter().map(m).collect(),
                    inputs: inputs.iter().map(m).collect(),
                    outputs: outputs.iter().map(m).collect(),
                },
                Node::Call { func, output } => Node::Call {
                    func: m(func),
                    output: m(output),
                },
            })
            .collect();
        ComputationalGraph { nodes }
    }
}

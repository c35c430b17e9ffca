//! Node-by-node graph generation under a constraint level.
//!
//! At level 1 every insertion consults the node-information table so the
//! graph stays free of dtype, shape and admissibility violations. At level 0
//! operators and operands are drawn without any checks; nodes remain
//! structurally well-formed (parents exist, arity is respected).

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph_model::{
    broadcast_shapes, extract_subgraph, infer_info, infer_info_lenient, is_body_eligible, ComputationalGraph,
    DType, DTypeClass, Node, NodeId, NodeInfo, NodeInfoTable, NodeKind, Scalar, Shape, TensorValue,
};
use crate::opset::Op;

/// How strictly generation follows the integrity constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintLevel {
    /// No dtype/shape/admissibility checks.
    Unconstrained = 0,
    /// Every insertion respects the constraints.
    Constrained = 1,
}

impl ConstraintLevel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(ConstraintLevel::Unconstrained),
            1 => Some(ConstraintLevel::Constrained),
            _ => None,
        }
    }
}

impl Serialize for ConstraintLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for ConstraintLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        ConstraintLevel::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("constraint level must be 0 or 1, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapePolicy {
    pub max_rank: usize,
    pub max_extent: usize,
    /// Probability that an extent is forced to 1, which keeps shapes small
    /// and broadcast-compatible.
    pub unit_extent_prob: f64,
}

impl Default for ShapePolicy {
    fn default() -> Self {
        ShapePolicy {
            max_rank: 4,
            max_extent: 8,
            unit_extent_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KindWeights {
    pub variable: f64,
    pub constant: f64,
    pub operator: f64,
    pub function: f64,
    pub call: f64,
}

impl Default for KindWeights {
    fn default() -> Self {
        KindWeights {
            variable: 25.0,
            constant: 20.0,
            operator: 40.0,
            function: 10.0,
            call: 5.0,
        }
    }
}

impl KindWeights {
    pub fn weight(&self, kind: NodeKind) -> f64 {
        match kind {
            NodeKind::Variable => self.variable,
            NodeKind::Constant => self.constant,
            NodeKind::Operator => self.operator,
            NodeKind::Function => self.function,
            NodeKind::Call => self.call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub node_num: usize,
    pub level: ConstraintLevel,
    pub seed: u64,
    #[serde(default)]
    pub shape: ShapePolicy,
    #[serde(default)]
    pub weights: KindWeights,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenConfigError {
    #[error("node_num must be at least 1")]
    ZeroNodes,
    #[error("node-kind weights must be finite, nonnegative and not all zero")]
    BadWeights,
    #[error("leaf weights (variable, constant) must not both be zero")]
    NoLeaves,
    #[error("shape policy needs max_extent >= 1 and unit_extent_prob in [0,1]")]
    BadShapePolicy,
}

impl GenConfig {
    pub fn new(node_num: usize, level: ConstraintLevel, seed: u64) -> Self {
        GenConfig {
            node_num,
            level,
            seed,
            shape: ShapePolicy::default(),
            weights: KindWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<(), GenConfigError> {
        if self.node_num == 0 {
            return Err(GenConfigError::ZeroNodes);
        }
        let w: Vec<f64> = NodeKind::ALL.iter().map(|k| self.weights.weight(*k)).collect();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().all(|x| *x == 0.0) {
            return Err(GenConfigError::BadWeights);
        }
        // An empty graph only admits leaves.
        if self.weights.variable + self.weights.constant == 0.0 {
            return Err(GenConfigError::NoLeaves);
        }
        let p = self.shape.unit_extent_prob;
        if self.shape.max_extent == 0 || !(0.0..=1.0).contains(&p) {
            return Err(GenConfigError::BadShapePolicy);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no valid {0:?} node can be inserted")]
pub struct Infeasible(pub NodeKind);

/// Grows one graph together with its info table.
pub struct GraphBuilder {
    graph: ComputationalGraph,
    table: NodeInfoTable,
    level: ConstraintLevel,
    shape: ShapePolicy,
    rng: ChaCha8Rng,
}

impl GraphBuilder {
    pub fn new(level: ConstraintLevel, seed: u64) -> Self {
        GraphBuilder::with_policy(level, seed, ShapePolicy::default())
    }

    pub fn with_policy(level: ConstraintLevel, seed: u64, shape: ShapePolicy) -> Self {
        GraphBuilder {
            graph: ComputationalGraph::new(),
            table: NodeInfoTable::new(),
            level,
            shape,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn graph(&self) -> &ComputationalGraph {
        &self.graph
    }

    pub fn table(&self) -> &NodeInfoTable {
        &self.table
    }

    pub fn finish(self) -> (ComputationalGraph, NodeInfoTable) {
        (self.graph, self.table)
    }

    /// Appends a node whose info has already been derived.
    fn append(&mut self, node: Node, info: NodeInfo) -> NodeId {
        let id = self.graph.push(node).expect("generator produced a forward reference");
        self.table.push(info);
        debug_assert_eq!(self.graph.len(), self.table.len());
        id
    }

    /// Appends an arbitrary node, deriving its info leniently.
    pub fn push_node(&mut self, node: Node) -> NodeId {
        let info = infer_info_lenient(&node, &self.table);
        self.append(node, info)
    }

    fn tensor_nodes(&self) -> Vec<NodeId> {
        self.graph
            .iter()
            .filter(|(_, n)| n.is_tensor())
            .map(|(id, _)| id)
            .collect()
    }

    fn typed_tensor_nodes(&self) -> Vec<NodeId> {
        self.tensor_nodes()
            .into_iter()
            .filter(|id| self.table.tensor_type(*id).is_some())
            .collect()
    }

    fn function_nodes(&self) -> Vec<NodeId> {
        self.graph
            .iter()
            .filter(|(_, n)| matches!(n, Node::Function { .. }))
            .map(|(id, _)| id)
            .collect()
    }

    /// Operators with at least one admissible operand at level 1. Operand
    /// reuse is allowed, so a binary operator is feasible as soon as one
    /// candidate of an admissible dtype exists.
    pub fn feasible_ops(&self) -> Vec<Op> {
        let dtypes: Vec<DType> = self
            .typed_tensor_nodes()
            .iter()
            .filter_map(|id| self.table.tensor_type(*id).map(|t| t.dtype))
            .collect();
        Op::all().filter(|op| dtypes.iter().any(|d| op.admits(*d))).collect()
    }

    pub fn is_feasible(&self, kind: NodeKind) -> bool {
        match kind {
            NodeKind::Variable | NodeKind::Constant => true,
            NodeKind::Operator => match self.level {
                ConstraintLevel::Constrained => !self.feasible_ops().is_empty(),
                ConstraintLevel::Unconstrained => !self.tensor_nodes().is_empty(),
            },
            NodeKind::Function => self.graph.nodes().iter().any(is_body_eligible),
            NodeKind::Call => !self.function_nodes().is_empty(),
        }
    }

    /// Draws a node kind among the feasible ones, renormalizing the weights.
    pub fn draw_kind(&mut self, weights: &KindWeights) -> NodeKind {
        let kinds: Vec<NodeKind> = NodeKind::ALL
            .iter()
            .copied()
            .filter(|k| weights.weight(*k) > 0.0 && self.is_feasible(*k))
            .collect();
        let dist = WeightedIndex::new(kinds.iter().map(|k| weights.weight(*k)))
            .expect("leaf kinds are always feasible");
        kinds[dist.sample(&mut self.rng)]
    }

    pub fn insert(&mut self, kind: NodeKind) -> Result<NodeId, Infeasible> {
        match kind {
            NodeKind::Variable => Ok(self.insert_variable()),
            NodeKind::Constant => Ok(self.insert_constant()),
            NodeKind::Operator => self.insert_operator(),
            NodeKind::Function => self.insert_function(),
            NodeKind::Call => self.insert_call(),
        }
    }

    pub fn insert_variable(&mut self) -> NodeId {
        let dtype = *DType::ALL.choose(&mut self.rng).unwrap();
        let shape = random_shape(&self.shape, &mut self.rng);
        let node = Node::Variable { dtype, shape };
        let info = infer_info(&node, &self.table).unwrap();
        self.append(node, info)
    }

    pub fn insert_constant(&mut self) -> NodeId {
        let dtype = *DType::ALL.choose(&mut self.rng).unwrap();
        let shape = random_shape(&self.shape, &mut self.rng);
        let value = random_value(dtype, &shape, &mut self.rng);
        let node = Node::Constant { value };
        let info = infer_info(&node, &self.table).unwrap();
        self.append(node, info)
    }

    /// Inserts an operator node with a randomly chosen operator.
    pub fn insert_operator(&mut self) -> Result<NodeId, Infeasible> {
        let op = match self.level {
            ConstraintLevel::Constrained => *self
                .feasible_ops()
                .choose(&mut self.rng)
                .ok_or(Infeasible(NodeKind::Operator))?,
            ConstraintLevel::Unconstrained => {
                let all: Vec<Op> = Op::all().collect();
                *all.choose(&mut self.rng).unwrap()
            }
        };
        self.insert_operator_with(op)
    }

    /// Candidate first operands for `op` at level 1.
    pub fn operand_candidates(&self, op: Op) -> Vec<NodeId> {
        self.typed_tensor_nodes()
            .into_iter()
            .filter(|id| op.admits(self.table.tensor_type(*id).unwrap().dtype))
            .collect()
    }

    /// Inserts `op`, choosing operands according to the constraint level.
    pub fn insert_operator_with(&mut self, op: Op) -> Result<NodeId, Infeasible> {
        let parents = match self.level {
            ConstraintLevel::Unconstrained => {
                let pool = self.tensor_nodes();
                if pool.is_empty() {
                    return Err(Infeasible(NodeKind::Operator));
                }
                (0..op.arity()).map(|_| *pool.choose(&mut self.rng).unwrap()).collect()
            }
            ConstraintLevel::Constrained => {
                let first = *self
                    .operand_candidates(op)
                    .choose(&mut self.rng)
                    .ok_or(Infeasible(NodeKind::Operator))?;
                let mut parents = vec![first];
                if op.arity() == 2 {
                    let ty = self.table.tensor_type(first).unwrap().clone();
                    let partners: Vec<NodeId> = self
                        .typed_tensor_nodes()
                        .into_iter()
                        .filter(|id| *id != first)
                        .filter(|id| {
                            let other = self.table.tensor_type(*id).unwrap();
                            other.dtype == ty.dtype && broadcast_shapes(&ty.shape, &other.shape).is_ok()
                        })
                        .collect();
                    let second = partners.choose(&mut self.rng).copied().unwrap_or(first);
                    // random operand order so the reused/first operand is not always on the left
                    if self.rng.gen_bool(0.5) {
                        parents.insert(0, second);
                    } else {
                        parents.push(second);
                    }
                }
                parents
            }
        };
        let node = Node::Operator { op, parents };
        let info = match self.level {
            ConstraintLevel::Constrained => {
                infer_info(&node, &self.table).expect("level-1 operands are compatible")
            }
            ConstraintLevel::Unconstrained => infer_info_lenient(&node, &self.table),
        };
        Ok(self.append(node, info))
    }

    pub fn insert_function(&mut self) -> Result<NodeId, Infeasible> {
        let sub = extract_subgraph(&self.graph, &mut self.rng).map_err(|_| Infeasible(NodeKind::Function))?;
        let node = Node::Function {
            body: sub.body,
            inputs: sub.inputs,
            outputs: sub.outputs,
        };
        let info = infer_info(&node, &self.table).expect("function info cannot fail");
        Ok(self.append(node, info))
    }

    pub fn insert_call(&mut self) -> Result<NodeId, Infeasible> {
        let func = *self
            .function_nodes()
            .choose(&mut self.rng)
            .ok_or(Infeasible(NodeKind::Call))?;
        let Node::Function { outputs, .. } = self.graph.node(func) else {
            unreachable!()
        };
        let output = *outputs.choose(&mut self.rng).expect("functions have an output");
        let node = Node::Call { func, output };
        let info = infer_info_lenient(&node, &self.table);
        Ok(self.append(node, info))
    }
}

/// Generates a graph of exactly `cfg.node_num` nodes. Deterministic in `cfg`.
pub fn generate(cfg: &GenConfig) -> Result<(ComputationalGraph, NodeInfoTable), GenConfigError> {
    cfg.validate()?;
    let mut b = GraphBuilder::with_policy(cfg.level, cfg.seed, cfg.shape.clone());
    while b.graph().len() < cfg.node_num {
        let kind = b.draw_kind(&cfg.weights);
        b.insert(kind).expect("draw_kind only yields feasible kinds");
    }
    Ok(b.finish())
}

pub fn random_shape<R: Rng + ?Sized>(policy: &ShapePolicy, rng: &mut R) -> Shape {
    let rank = rng.gen_range(0..=policy.max_rank);
    let dims = (0..rank)
        .map(|_| {
            if rng.gen_bool(policy.unit_extent_prob) {
                1
            } else {
                rng.gen_range(1..=policy.max_extent)
            }
        })
        .collect();
    Shape(dims)
}

/// Random tensor contents: signed ints in [-8, 8], unsigned in [0, 16],
/// floats in [-4, 4] on a 1/16 grid, bools uniform.
pub fn random_value<R: Rng + ?Sized>(dtype: DType, shape: &Shape, rng: &mut R) -> TensorValue {
    let data = (0..shape.volume())
        .map(|_| match dtype.class() {
            DTypeClass::SignedInt => Scalar::Int(rng.gen_range(-8..=8)),
            DTypeClass::UnsignedInt => Scalar::UInt(rng.gen_range(0..=16)),
            DTypeClass::Float => Scalar::Float(f64::from(rng.gen_range(-64..=64)) / 16.0),
            DTypeClass::Bool => Scalar::Bool(rng.gen()),
        })
        .collect();
    TensorValue::new(dtype, shape.clone(), data).expect("random values fit every dtype")
}

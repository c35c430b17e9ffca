//! Computational graphs: typed tensor values, nodes, node-information
//! records, integrity validation and the canonical text form.

mod dtype;
mod eval;
mod graph;
mod info;
mod shape;
mod subgraph;
mod tensor;
pub mod text;
mod validate;

pub use dtype::{DType, DTypeClass, UnknownDType};
pub use eval::{evaluate_graph, GraphEvalError};
pub use graph::{ComputationalGraph, GraphError, Node, NodeId, NodeKind};
pub use info::{infer_info, infer_info_lenient, InferError, NodeInfo, NodeInfoTable, TensorType};
pub use shape::{broadcast_index_map, broadcast_shapes, Shape, ShapeMismatch, ShapeParseError};
pub use subgraph::{extract_subgraph, is_body_eligible, subgraph_boundary, NoEligibleSubgraph, Subgraph, MAX_BODY};
pub use tensor::{parse_scalar, Scalar, TensorError, TensorJson, TensorValue};
pub use text::{fingerprint, from_text, to_text, GraphParseError};
pub use validate::{validate_graph, ConstraintViolation, ViolationKind};

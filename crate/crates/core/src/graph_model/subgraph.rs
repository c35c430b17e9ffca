use rand::seq::SliceRandom;
use rand::Rng;

use super::{ComputationalGraph, Node, NodeId};

/// A connected set of graph nodes and its boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub body: Vec<NodeId>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("graph has no node eligible for a function body")]
pub struct NoEligibleSubgraph;

/// Largest number of nodes grown into an extracted body.
pub const MAX_BODY: usize = 4;

/// Nodes that may appear in a function body.
pub fn is_body_eligible(node: &Node) -> bool {
    matches!(node, Node::Variable { .. } | Node::Constant { .. } | Node::Operator { .. })
}

/// Inputs (nodes outside `body` feeding it) and outputs (body nodes with no
/// consumer inside the body), both sorted. `body` must be sorted.
pub fn subgraph_boundary(g: &ComputationalGraph, body: &[NodeId]) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut inputs = Vec::new();
    let mut consumed = vec![false; body.len()];
    for b in body {
        if let Node::Operator { parents, .. } = g.node(*b) {
            for p in parents {
                match body.binary_search(p) {
                    Ok(i) => consumed[i] = true,
                    Err(_) => inputs.push(*p),
                }
            }
        }
    }
    inputs.sort();
    inputs.dedup();
    let outputs = body
        .iter()
        .zip(&consumed)
        .filter(|(_, c)| !**c)
        .map(|(b, _)| *b)
        .collect();
    (inputs, outputs)
}

/// Picks a random root among eligible nodes and grows the body through
/// eligible operator parents, so the body stays connected.
pub fn extract_subgraph<R: Rng + ?Sized>(
    g: &ComputationalGraph,
    rng: &mut R,
) -> Result<Subgraph, NoEligibleSubgraph> {
    let eligible: Vec<NodeId> = g
        .iter()
        .filter(|(_, n)| is_body_eligible(n))
        .map(|(id, _)| id)
        .collect();
    let root = *eligible.choose(rng).ok_or(NoEligibleSubgraph)?;
    let target = rng.gen_range(1..=MAX_BODY);
    let mut body = vec![root];
    while body.len() < target {
        let mut frontier: Vec<NodeId> = body
            .iter()
            .flat_map(|b| match g.node(*b) {
                Node::Operator { parents, .. } => parents.clone(),
                _ => Vec::new(),
            })
            .filter(|p| !body.contains(p) && is_body_eligible(g.node(*p)))
            .collect();
        frontier.sort();
        frontier.dedup();
        match frontier.choose(rng) {
            Some(p) => body.push(*p),
            None => break,
        }
    }
    body.sort();
    let (inputs, outputs) = subgraph_boundary(g, &body);
    Ok(Subgraph { body, inputs, outputs })
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Tensor extents, outermost first. Rank 0 is a scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Shape(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("shapes {lhs} and {rhs} are not broadcastable")]
pub struct ShapeMismatch {
    pub lhs: Shape,
    pub rhs: Shape,
}

impl Shape {
    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    /// Number of elements.
    pub fn volume(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.rank()];
        for i in (0..self.rank().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }
}

/// Right-aligned broadcasting: aligned extents must match or one must be 1.
pub fn broadcast_shapes(a: &Shape, b: &Shape) -> Result<Shape, ShapeMismatch> {
    let rank = a.rank().max(b.rank());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = aligned_dim(a, rank, i);
        let db = aligned_dim(b, rank, i);
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(ShapeMismatch {
                    lhs: a.clone(),
                    rhs: b.clone(),
                })
            }
        };
    }
    Ok(Shape(out))
}

fn aligned_dim(s: &Shape, rank: usize, i: usize) -> usize {
    let offset = rank - s.rank();
    if i < offset {
        1
    } else {
        s.0[i - offset]
    }
}

/// Maps each flat index of `out` to the flat index of `src` under broadcasting.
/// `src` must broadcast to `out`.
pub fn broadcast_index_map(src: &Shape, out: &Shape) -> Vec<usize> {
    let volume = out.volume();
    if src == out {
        return (0..volume).collect();
    }
    if src.volume() == 1 {
        return vec![0; volume];
    }
    let offset = out.rank() - src.rank();
    let src_strides = src.strides();
    // Effective stride per output axis: zero where src is stretched.
    let eff: Vec<usize> = (0..out.rank())
        .map(|i| {
            if i < offset || src.0[i - offset] == 1 {
                0
            } else {
                src_strides[i - offset]
            }
        })
        .collect();
    let mut map = Vec::with_capacity(volume);
    let mut idx = vec![0usize; out.rank()];
    for _ in 0..volume {
        map.push(idx.iter().zip(&eff).map(|(i, s)| i * s).sum());
        for axis in (0..out.rank()).rev() {
            idx[axis] += 1;
            if idx[axis] < out.0[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    map
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed shape `{0}`")]
pub struct ShapeParseError(pub String);

impl FromStr for Shape {
    type Err = ShapeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| ShapeParseError(s.to_string()))?;
        if inner.trim().is_empty() {
            return Ok(Shape::scalar());
        }
        inner
            .split(',')
            .map(|d| match d.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(ShapeParseError(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Shape)
    }
}

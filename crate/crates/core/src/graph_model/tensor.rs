use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{DType, DTypeClass, Shape};

/// One tensor element. Signed ints are kept sign-extended, unsigned ints
/// zero-extended, float32 values are exactly representable as f32.
#[derive(Debug, Clone, Copy)]
pub enum Scalar {
    Int(i64),
    UInt(u64),
    Float(f64),
    Bool(bool),
}

// Structural equality: floats compare by bit pattern so that Scalar can key maps.
impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Int(a), Scalar::Int(b)) => a == b,
            (Scalar::UInt(a), Scalar::UInt(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            (Scalar::Bool(a), Scalar::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Scalar {}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Scalar::Int(v) => (0u8, *v).hash(state),
            Scalar::UInt(v) => (1u8, *v).hash(state),
            Scalar::Float(v) => (2u8, v.to_bits()).hash(state),
            Scalar::Bool(v) => (3u8, *v).hash(state),
        }
    }
}

impl Scalar {
    pub fn zero(dtype: DType) -> Scalar {
        match dtype.class() {
            DTypeClass::SignedInt => Scalar::Int(0),
            DTypeClass::UnsignedInt => Scalar::UInt(0),
            DTypeClass::Float => Scalar::Float(0.0),
            DTypeClass::Bool => Scalar::Bool(false),
        }
    }

    pub fn one(dtype: DType) -> Scalar {
        match dtype.class() {
            DTypeClass::SignedInt => Scalar::Int(1),
            DTypeClass::UnsignedInt => Scalar::UInt(1),
            DTypeClass::Float => Scalar::Float(1.0),
            DTypeClass::Bool => Scalar::Bool(true),
        }
    }

    /// True when this scalar is a valid element of `dtype`.
    pub fn fits(&self, dtype: DType) -> bool {
        match (self, dtype.class()) {
            (Scalar::Int(v), DTypeClass::SignedInt) => dtype.wrap_signed(*v) == *v,
            (Scalar::UInt(v), DTypeClass::UnsignedInt) => dtype.wrap_unsigned(*v) == *v,
            (Scalar::Float(v), DTypeClass::Float) => {
                dtype.round_float(*v).to_bits() == v.to_bits() || v.is_nan()
            }
            (Scalar::Bool(_), DTypeClass::Bool) => true,
            _ => false,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Int(v) => *v == 0,
            Scalar::UInt(v) => *v == 0,
            Scalar::Float(v) => *v == 0.0,
            Scalar::Bool(v) => !*v,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Scalar::Int(v) => *v == 1,
            Scalar::UInt(v) => *v == 1,
            Scalar::Float(v) => *v == 1.0,
            Scalar::Bool(v) => *v,
        }
    }

    /// Agreement used by the oracles: ints/bools exact, floats within
    /// `rel_tol` relative error, NaN agrees with NaN.
    pub fn agrees(&self, other: &Scalar, rel_tol: f64) -> bool {
        match (self, other) {
            (Scalar::Float(a), Scalar::Float(b)) => float_agrees(*a, *b, rel_tol),
            _ => self == other,
        }
    }
}

fn float_agrees(a: f64, b: f64, rel_tol: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a == b {
        return true;
    }
    if a.is_infinite() || b.is_infinite() {
        return false;
    }
    (a - b).abs() <= rel_tol * a.abs().max(b.abs())
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::UInt(v) => write!(f, "{v}"),
            // `{:?}` keeps a decimal point and round-trips exactly.
            Scalar::Float(v) => write!(f, "{v:?}"),
            Scalar::Bool(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("element count {got} does not match shape {shape} (volume {expected})")]
    CountMismatch {
        shape: Shape,
        expected: usize,
        got: usize,
    },
    #[error("element {index} ({value}) is not a valid {dtype}")]
    BadElement {
        dtype: DType,
        index: usize,
        value: String,
    },
    #[error("cannot parse element `{0}`")]
    Parse(String),
}

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorValue {
    dtype: DType,
    shape: Shape,
    data: Vec<Scalar>,
}

impl TensorValue {
    pub fn new(dtype: DType, shape: Shape, data: Vec<Scalar>) -> Result<Self, TensorError> {
        if data.len() != shape.volume() {
            return Err(TensorError::CountMismatch {
                expected: shape.volume(),
                got: data.len(),
                shape,
            });
        }
        if let Some((index, bad)) = data.iter().enumerate().find(|(_, s)| !s.fits(dtype)) {
            return Err(TensorError::BadElement {
                dtype,
                index,
                value: bad.to_string(),
            });
        }
        Ok(TensorValue { dtype, shape, data })
    }

    /// Builds a tensor without validating elements. Callers guarantee the
    /// element invariants (used by kernels whose outputs are wrapped already).
    pub(crate) fn from_parts(dtype: DType, shape: Shape, data: Vec<Scalar>) -> Self {
        debug_assert_eq!(data.len(), shape.volume());
        TensorValue { dtype, shape, data }
    }

    pub fn filled(dtype: DType, shape: Shape, value: Scalar) -> Self {
        let data = vec![value; shape.volume()];
        TensorValue::from_parts(dtype, shape, data)
    }

    pub fn zeros(dtype: DType, shape: Shape) -> Self {
        Self::filled(dtype, shape, Scalar::zero(dtype))
    }

    pub fn scalar(dtype: DType, value: Scalar) -> Result<Self, TensorError> {
        TensorValue::new(dtype, Shape::scalar(), vec![value])
    }

    pub fn from_i64s(dtype: DType, shape: Shape, values: &[i64]) -> Result<Self, TensorError> {
        let data = values
            .iter()
            .map(|&v| match dtype.class() {
                DTypeClass::SignedInt => Scalar::Int(v),
                DTypeClass::UnsignedInt => Scalar::UInt(v as u64),
                DTypeClass::Float => Scalar::Float(v as f64),
                DTypeClass::Bool => Scalar::Bool(v != 0),
            })
            .collect();
        TensorValue::new(dtype, shape, data)
    }

    pub fn from_f64s(dtype: DType, shape: Shape, values: &[f64]) -> Result<Self, TensorError> {
        let data = values
            .iter()
            .map(|&v| Scalar::Float(dtype.round_float(v)))
            .collect();
        TensorValue::new(dtype, shape, data)
    }

    pub fn from_bools(shape: Shape, values: &[bool]) -> Result<Self, TensorError> {
        TensorValue::new(DType::Bool, shape, values.iter().map(|&b| Scalar::Bool(b)).collect())
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all(&self, pred: impl Fn(&Scalar) -> bool) -> bool {
        self.data.iter().all(pred)
    }

    /// Same dtype and shape, and elementwise agreement (see [`Scalar::agrees`]).
    pub fn agrees(&self, other: &TensorValue, rel_tol: f64) -> bool {
        self.dtype == other.dtype
            && self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.agrees(b, rel_tol))
    }

    /// Text form of the element list: `[e0,e1,...]`.
    pub fn data_text(&self) -> String {
        let mut out = String::from("[");
        for (i, s) in self.data.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&s.to_string());
        }
        out.push(']');
        out
    }

    /// Parses the output of [`TensorValue::data_text`].
    pub fn parse_data(dtype: DType, shape: Shape, text: &str) -> Result<Self, TensorError> {
        let inner = text
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| TensorError::Parse(text.to_string()))?;
        let mut data = Vec::new();
        if !inner.trim().is_empty() {
            for tok in inner.split(',') {
                data.push(parse_scalar(dtype, tok.trim())?);
            }
        }
        TensorValue::new(dtype, shape, data)
    }
}

pub fn parse_scalar(dtype: DType, tok: &str) -> Result<Scalar, TensorError> {
    let err = || TensorError::Parse(tok.to_string());
    Ok(match dtype.class() {
        DTypeClass::SignedInt => Scalar::Int(tok.parse().map_err(|_| err())?),
        DTypeClass::UnsignedInt => Scalar::UInt(tok.parse().map_err(|_| err())?),
        DTypeClass::Float => Scalar::Float(tok.parse().map_err(|_| err())?),
        DTypeClass::Bool => Scalar::Bool(tok.parse().map_err(|_| err())?),
    })
}

impl fmt::Display for TensorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.dtype, self.shape, self.data_text())
    }
}

/// JSON form used by verdicts and the adapter protocol. Non-finite floats are
/// encoded as the strings `"nan"`, `"inf"` and `"-inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorJson {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<serde_json::Value>,
}

impl From<&TensorValue> for TensorJson {
    fn from(t: &TensorValue) -> Self {
        use serde_json::Value;
        let data = t
            .data
            .iter()
            .map(|s| match *s {
                Scalar::Int(v) => Value::from(v),
                Scalar::UInt(v) => Value::from(v),
                Scalar::Bool(v) => Value::from(v),
                Scalar::Float(v) if v.is_nan() => Value::from("nan"),
                Scalar::Float(v) if v == f64::INFINITY => Value::from("inf"),
                Scalar::Float(v) if v == f64::NEG_INFINITY => Value::from("-inf"),
                Scalar::Float(v) => Value::from(v),
            })
            .collect();
        TensorJson {
            dtype: t.dtype,
            shape: t.shape.0.clone(),
            data,
        }
    }
}

impl TryFrom<&TensorJson> for TensorValue {
    type Error = TensorError;

    fn try_from(j: &TensorJson) -> Result<Self, Self::Error> {
        use serde_json::Value;
        let bad = |v: &Value| TensorError::Parse(v.to_string());
        let data = j
            .data
            .iter()
            .map(|v| match j.dtype.class() {
                DTypeClass::SignedInt => v.as_i64().map(Scalar::Int).ok_or_else(|| bad(v)),
                DTypeClass::UnsignedInt => v.as_u64().map(Scalar::UInt).ok_or_else(|| bad(v)),
                DTypeClass::Bool => v.as_bool().map(Scalar::Bool).ok_or_else(|| bad(v)),
                DTypeClass::Float => match v {
                    Value::String(s) => match s.as_str() {
                        "nan" => Ok(Scalar::Float(f64::NAN)),
                        "inf" => Ok(Scalar::Float(f64::INFINITY)),
                        "-inf" => Ok(Scalar::Float(f64::NEG_INFINITY)),
                        _ => Err(bad(v)),
                    },
                    _ => v.as_f64().map(Scalar::Float).ok_or_else(|| bad(v)),
                },
            })
            .collect::<Result<Vec<_>, _>>()?;
        TensorValue::new(j.dtype, Shape(j.shape.clone()), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_counts_and_elements() {
        assert!(matches!(
            TensorValue::from_i64s(DType::Int32, Shape::new([2]), &[1]),
            Err(TensorError::CountMismatch { .. })
        ));
        assert!(matches!(
            TensorValue::from_i64s(DType::Int8, Shape::scalar(), &[300]),
            Err(TensorError::BadElement { .. })
        ));
        assert!(TensorValue::new(DType::Float32, Shape::scalar(), vec![Scalar::Float(0.1)]).is_err());
        assert!(TensorValue::from_f64s(DType::Float32, Shape::scalar(), &[0.1]).is_ok());
    }

    #[test]
    fn nan_agrees_with_nan_only() {
        let nan = Scalar::Float(f64::NAN);
        assert!(nan.agrees(&Scalar::Float(-f64::NAN), 0.0));
        assert!(!nan.agrees(&Scalar::Float(1.0), 1.0));
        assert!(Scalar::Float(1.0).agrees(&Scalar::Float(1.0 + 1e-9), 1e-6));
        assert!(!Scalar::Float(1.0).agrees(&Scalar::Float(1.0 + 1e-9), 0.0));
        assert!(Scalar::Float(0.0).agrees(&Scalar::Float(-0.0), 0.0));
    }

    #[test]
    fn data_text_round_trips() {
        let t = TensorValue::from_f64s(
            DType::Float32,
            Shape::new([4]),
            &[0.0625, -3.5, f64::INFINITY, 1e-7],
        )
        .unwrap();
        let back = TensorValue::parse_data(t.dtype(), t.shape().clone(), &t.data_text()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn json_round_trips_non_finite() {
        let t = TensorValue::from_f64s(DType::Float64, Shape::new([3]), &[f64::NAN, f64::NEG_INFINITY, 2.5])
            .unwrap();
        let j = TensorJson::from(&t);
        let text = serde_json::to_string(&j).unwrap();
        let back: TensorJson = serde_json::from_str(&text).unwrap();
        assert_eq!(TensorValue::try_from(&back).unwrap(), t);
    }
}

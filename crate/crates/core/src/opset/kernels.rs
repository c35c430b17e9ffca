//! Reference element semantics. Integer arithmetic wraps modulo 2^width,
//! integer division and modulo by zero yield 0, shift amounts are reduced
//! modulo the bit width, and float operations follow IEEE-754.

use crate::graph_model::{broadcast_index_map, broadcast_shapes, DType, Scalar, ShapeMismatch, TensorValue};

use super::Op;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("operator {op} expects {expected} operands, got {got}")]
    Arity { op: Op, expected: usize, got: usize },
    #[error("operator {op} does not admit dtype {dtype}")]
    Inadmissible { op: Op, dtype: DType },
    #[error("operator {op} got mismatched dtypes {lhs} and {rhs}")]
    DtypeMismatch { op: Op, lhs: DType, rhs: DType },
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
}

/// Applies `op` elementwise with broadcasting.
pub fn eval_elementwise(op: Op, operands: &[&TensorValue]) -> Result<TensorValue, EvalError> {
    if operands.len() != op.arity() {
        return Err(EvalError::Arity {
            op,
            expected: op.arity(),
            got: operands.len(),
        });
    }
    let dtype = operands[0].dtype();
    if let Some(other) = operands.iter().find(|t| t.dtype() != dtype) {
        return Err(EvalError::DtypeMismatch {
            op,
            lhs: dtype,
            rhs: other.dtype(),
        });
    }
    if !op.admits(dtype) {
        return Err(EvalError::Inadmissible { op, dtype });
    }
    let out_dtype = op.spec().result_dtype(dtype);
    match operands {
        [x] => {
            let data = x.data().iter().map(|&a| unary(op, dtype, a)).collect();
            Ok(TensorValue::from_parts(out_dtype, x.shape().clone(), data))
        }
        [x, y] => {
            let shape = broadcast_shapes(x.shape(), y.shape())?;
            let data = if x.shape() == y.shape() {
                x.data()
                    .iter()
                    .zip(y.data())
                    .map(|(&a, &b)| binary(op, dtype, a, b))
                    .collect()
            } else {
                let xm = broadcast_index_map(x.shape(), &shape);
                let ym = broadcast_index_map(y.shape(), &shape);
                xm.iter()
                    .zip(&ym)
                    .map(|(&i, &j)| binary(op, dtype, x.data()[i], y.data()[j]))
                    .collect()
            };
            Ok(TensorValue::from_parts(out_dtype, shape, data))
        }
        _ => unreachable!("arity checked above"),
    }
}

/// Applies `op` to scalar operands of `dtype`. Admissibility is the
/// caller's responsibility.
pub fn eval_scalar(op: Op, dtype: DType, operands: &[Scalar]) -> Scalar {
    match operands {
        [a] => unary(op, dtype, *a),
        [a, b] => binary(op, dtype, *a, *b),
        _ => panic!("eval_scalar: bad operand count {}", operands.len()),
    }
}

macro_rules! fmath {
    ($dt:expr, $x:expr, |$v:ident| $body:expr) => {{
        if $dt == DType::Float32 {
            let $v = $x as f32;
            ($body) as f64
        } else {
            let $v = $x;
            $body
        }
    }};
}

macro_rules! fmath2 {
    ($dt:expr, $x:expr, $y:expr, |$a:ident, $b:ident| $body:expr) => {{
        if $dt == DType::Float32 {
            let ($a, $b) = ($x as f32, $y as f32);
            ($body) as f64
        } else {
            let ($a, $b) = ($x, $y);
            $body
        }
    }};
}

fn unary(op: Op, dt: DType, a: Scalar) -> Scalar {
    match a {
        Scalar::Float(x) => unary_float(op, dt, x),
        Scalar::Int(x) => unary_signed(op, dt, x),
        Scalar::UInt(x) => unary_unsigned(op, dt, x),
        Scalar::Bool(x) => match op {
            Op::LogicalNot => Scalar::Bool(!x),
            _ => Scalar::Bool(x),
        },
    }
}

fn unary_float(op: Op, dt: DType, x: f64) -> Scalar {
    let v = match op {
        Op::Log => fmath!(dt, x, |v| v.ln()),
        Op::Log2 => fmath!(dt, x, |v| v.log2()),
        Op::Log10 => fmath!(dt, x, |v| v.log10()),
        Op::Tan => fmath!(dt, x, |v| v.tan()),
        Op::Tanh => fmath!(dt, x, |v| v.tanh()),
        Op::Cos => fmath!(dt, x, |v| v.cos()),
        Op::Cosh => fmath!(dt, x, |v| v.cosh()),
        Op::Sin => fmath!(dt, x, |v| v.sin()),
        Op::Sinh => fmath!(dt, x, |v| v.sinh()),
        Op::Acos => fmath!(dt, x, |v| v.acos()),
        Op::Acosh => fmath!(dt, x, |v| v.acosh()),
        Op::Asin => fmath!(dt, x, |v| v.asin()),
        Op::Asinh => fmath!(dt, x, |v| v.asinh()),
        Op::Atan => fmath!(dt, x, |v| v.atan()),
        Op::Atanh => fmath!(dt, x, |v| v.atanh()),
        Op::Exp => fmath!(dt, x, |v| v.exp()),
        Op::Erf => {
            if dt == DType::Float32 {
                libm::erff(x as f32) as f64
            } else {
                libm::erf(x)
            }
        }
        Op::Sqrt => fmath!(dt, x, |v| v.sqrt()),
        Op::Rsqrt => fmath!(dt, x, |v| 1.0 / v.sqrt()),
        Op::Sigmoid => fmath!(dt, x, |v| 1.0 / (1.0 + (-v).exp())),
        Op::Floor => fmath!(dt, x, |v| v.floor()),
        Op::Ceil => fmath!(dt, x, |v| v.ceil()),
        Op::Trunc => fmath!(dt, x, |v| v.trunc()),
        Op::Round => fmath!(dt, x, |v| v.round_ties_even()),
        Op::Abs => x.abs(),
        Op::Sign => {
            if x.is_nan() || x == 0.0 {
                x
            } else {
                x.signum()
            }
        }
        Op::Negative => -x,
        Op::ZerosLike => 0.0,
        Op::OnesLike => 1.0,
        Op::Copy => x,
        Op::IsNan => return Scalar::Bool(x.is_nan()),
        Op::IsFinite => return Scalar::Bool(x.is_finite()),
        Op::IsInf => return Scalar::Bool(x.is_infinite()),
        _ => x,
    };
    Scalar::Float(v)
}

fn unary_signed(op: Op, dt: DType, x: i64) -> Scalar {
    let v = match op {
        Op::Abs => x.wrapping_abs(),
        Op::Sign => x.signum(),
        Op::Negative => x.wrapping_neg(),
        Op::BitwiseNot => !x,
        Op::ZerosLike => 0,
        Op::OnesLike => 1,
        _ => x,
    };
    Scalar::Int(dt.wrap_signed(v))
}

fn unary_unsigned(op: Op, dt: DType, x: u64) -> Scalar {
    let v = match op {
        Op::Sign => u64::from(x != 0),
        Op::Negative => x.wrapping_neg(),
        Op::BitwiseNot => !x,
        Op::ZerosLike => 0,
        Op::OnesLike => 1,
        _ => x,
    };
    Scalar::UInt(dt.wrap_unsigned(v))
}

fn binary(op: Op, dt: DType, a: Scalar, b: Scalar) -> Scalar {
    match (a, b) {
        (Scalar::Float(x), Scalar::Float(y)) => binary_float(op, dt, x, y),
        (Scalar::Int(x), Scalar::Int(y)) => binary_signed(op, dt, x, y),
        (Scalar::UInt(x), Scalar::UInt(y)) => binary_unsigned(op, dt, x, y),
        (Scalar::Bool(x), Scalar::Bool(y)) => Scalar::Bool(match op {
            Op::LogicalAnd => x && y,
            Op::LogicalOr => x || y,
            Op::LogicalXor => x ^ y,
            _ => x,
        }),
        _ => panic!("binary kernel: operand classes differ ({a:?}, {b:?})"),
    }
}

fn compare<T: PartialOrd>(op: Op, x: T, y: T) -> Option<bool> {
    Some(match op {
        Op::Equal => x == y,
        Op::NotEqual => x != y,
        Op::Less => x < y,
        Op::LessEqual => x <= y,
        Op::Greater => x > y,
        Op::GreaterEqual => x >= y,
        _ => return None,
    })
}

/// NaN-propagating maximum that is symmetric in signed zeros.
fn fmax(x: f64, y: f64) -> f64 {
    if x.is_nan() || y.is_nan() {
        f64::NAN
    } else if x > y {
        x
    } else if y > x {
        y
    } else if x.is_sign_positive() {
        x
    } else {
        y
    }
}

fn fmin(x: f64, y: f64) -> f64 {
    if x.is_nan() || y.is_nan() {
        f64::NAN
    } else if x < y {
        x
    } else if y < x {
        y
    } else if x.is_sign_negative() {
        x
    } else {
        y
    }
}

fn binary_float(op: Op, dt: DType, x: f64, y: f64) -> Scalar {
    if let Some(c) = compare(op, x, y) {
        return Scalar::Bool(c);
    }
    let v = match op {
        Op::Add => fmath2!(dt, x, y, |a, b| a + b),
        Op::Subtract => fmath2!(dt, x, y, |a, b| a - b),
        Op::Multiply => fmath2!(dt, x, y, |a, b| a * b),
        Op::Divide => fmath2!(dt, x, y, |a, b| a / b),
        Op::Power => fmath2!(dt, x, y, |a, b| a.powf(b)),
        Op::Mod => fmath2!(dt, x, y, |a, b| a % b),
        Op::FloorMod => fmath2!(dt, x, y, |a, b| {
            let r = a % b;
            if r != 0.0 && ((r < 0.0) != (b < 0.0)) {
                r + b
            } else {
                r
            }
        }),
        Op::FloorDivide => fmath2!(dt, x, y, |a, b| (a / b).floor()),
        Op::Maximum => fmax(x, y),
        Op::Minimum => fmin(x, y),
        _ => x,
    };
    Scalar::Float(v)
}

fn binary_signed(op: Op, dt: DType, x: i64, y: i64) -> Scalar {
    if let Some(c) = compare(op, x, y) {
        return Scalar::Bool(c);
    }
    let v = match op {
        Op::Add => x.wrapping_add(y),
        Op::Subtract => x.wrapping_sub(y),
        Op::Multiply => x.wrapping_mul(y),
        Op::Divide => {
            if y == 0 {
                0
            } else {
                x.wrapping_div(y)
            }
        }
        Op::Mod => {
            if y == 0 {
                0
            } else {
                x.wrapping_rem(y)
            }
        }
        Op::FloorMod => {
            if y == 0 {
                0
            } else {
                let r = x.wrapping_rem(y);
                if r != 0 && ((r < 0) != (y < 0)) {
                    r.wrapping_add(y)
                } else {
                    r
                }
            }
        }
        Op::FloorDivide => {
            if y == 0 {
                0
            } else {
                let q = x.wrapping_div(y);
                if x.wrapping_rem(y) != 0 && ((x < 0) != (y < 0)) {
                    q.wrapping_sub(1)
                } else {
                    q
                }
            }
        }
        Op::BitwiseAnd => x & y,
        Op::BitwiseOr => x | y,
        Op::Maximum => x.max(y),
        Op::Minimum => x.min(y),
        Op::LeftShift => x.wrapping_shl(shift_amount(dt, y)),
        Op::RightShift => x >> shift_amount(dt, y),
        _ => x,
    };
    Scalar::Int(dt.wrap_signed(v))
}

fn binary_unsigned(op: Op, dt: DType, x: u64, y: u64) -> Scalar {
    if let Some(c) = compare(op, x, y) {
        return Scalar::Bool(c);
    }
    let v = match op {
        Op::Add => x.wrapping_add(y),
        Op::Subtract => x.wrapping_sub(y),
        Op::Multiply => x.wrapping_mul(y),
        Op::Divide | Op::FloorDivide => x.checked_div(y).unwrap_or(0),
        Op::Mod | Op::FloorMod => x.checked_rem(y).unwrap_or(0),
        Op::BitwiseAnd => x & y,
        Op::BitwiseOr => x | y,
        Op::Maximum => x.max(y),
        Op::Minimum => x.min(y),
        Op::LeftShift => x.wrapping_shl(shift_amount(dt, y as i64)),
        Op::RightShift => x >> shift_amount(dt, y as i64),
        _ => x,
    };
    Scalar::UInt(dt.wrap_unsigned(v))
}

fn shift_amount(dt: DType, y: i64) -> u32 {
    y.rem_euclid(i64::from(dt.bits())) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ints(dt: DType, shape: &[usize], v: &[i64]) -> TensorValue {
        TensorValue::from_i64s(dt, Shape::new(shape.to_vec()), v).unwrap()
    }

    #[test]
    fn add_vectors() {
        let a = ints(DType::Int32, &[2], &[2, 3]);
        let b = ints(DType::Int32, &[2], &[10, 10]);
        let out = eval_elementwise(Op::Add, &[&a, &b]).unwrap();
        assert_eq!(out, ints(DType::Int32, &[2], &[12, 13]));
    }

    #[test]
    fn unsigned_floor_mod_by_zero_is_zero() {
        let a = ints(DType::UInt32, &[], &[7]);
        let z = ints(DType::UInt32, &[], &[0]);
        assert_eq!(eval_elementwise(Op::FloorMod, &[&a, &z]).unwrap(), z);
    }

    #[test]
    fn equal_yields_bool() {
        let a = TensorValue::from_f64s(DType::Float32, Shape::new([1]), &[1.0]).unwrap();
        let b = TensorValue::from_f64s(DType::Float32, Shape::new([1]), &[2.0]).unwrap();
        let out = eval_elementwise(Op::Equal, &[&a, &b]).unwrap();
        assert_eq!(out, TensorValue::from_bools(Shape::new([1]), &[false]).unwrap());
    }

    #[test]
    fn errors() {
        let i = ints(DType::Int16, &[], &[4]);
        assert_eq!(
            eval_elementwise(Op::Sqrt, &[&i]),
            Err(EvalError::Inadmissible { op: Op::Sqrt, dtype: DType::Int16 })
        );
        let f = TensorValue::from_f64s(DType::Float32, Shape::scalar(), &[1.0]).unwrap();
        assert!(matches!(eval_elementwise(Op::Add, &[&i, &f]), Err(EvalError::DtypeMismatch { .. })));
        let a = ints(DType::Int16, &[2, 3], &[0; 6]);
        let b = ints(DType::Int16, &[4], &[0; 4]);
        assert!(matches!(eval_elementwise(Op::Add, &[&a, &b]), Err(EvalError::Shape(_))));
        assert!(matches!(eval_elementwise(Op::Add, &[&a]), Err(EvalError::Arity { .. })));
    }

    #[test]
    fn broadcast_result_shape() {
        let a = ints(DType::Int8, &[1, 2], &[1, 2]);
        let b = ints(DType::Int8, &[3, 1], &[10, 20, 30]);
        let out = eval_elementwise(Op::Add, &[&a, &b]).unwrap();
        assert_eq!(out, ints(DType::Int8, &[3, 2], &[11, 12, 21, 22, 31, 32]));
    }

    #[test]
    fn integer_edge_semantics() {
        let s = |op, dt, a: i64, b: i64| eval_scalar(op, dt, &[Scalar::Int(a), Scalar::Int(b)]);
        assert_eq!(s(Op::Add, DType::Int8, 127, 1), Scalar::Int(-128));
        assert_eq!(s(Op::Divide, DType::Int8, -128, -1), Scalar::Int(-128));
        assert_eq!(s(Op::Divide, DType::Int64, i64::MIN, -1), Scalar::Int(i64::MIN));
        assert_eq!(s(Op::Divide, DType::Int32, 5, 0), Scalar::Int(0));
        assert_eq!(s(Op::Mod, DType::Int32, -7, 3), Scalar::Int(-1));
        assert_eq!(s(Op::FloorMod, DType::Int32, -7, 3), Scalar::Int(2));
        assert_eq!(s(Op::FloorDivide, DType::Int32, -7, 2), Scalar::Int(-4));
        assert_eq!(s(Op::LeftShift, DType::Int8, 1, 9), Scalar::Int(2));
        assert_eq!(s(Op::RightShift, DType::Int8, -8, 1), Scalar::Int(-4));
        assert_eq!(s(Op::LeftShift, DType::Int16, 1, -1), Scalar::Int(i64::from(i16::MIN)));
        let u = |op, dt, a: u64, b: u64| eval_scalar(op, dt, &[Scalar::UInt(a), Scalar::UInt(b)]);
        assert_eq!(u(Op::Subtract, DType::UInt8, 0, 1), Scalar::UInt(255));
        assert_eq!(u(Op::FloorMod, DType::UInt16, 7, 0), Scalar::UInt(0));
        assert_eq!(u(Op::LeftShift, DType::UInt8, 255, 1), Scalar::UInt(254));
        assert_eq!(eval_scalar(Op::Abs, DType::Int8, &[Scalar::Int(-128)]), Scalar::Int(-128));
        assert_eq!(eval_scalar(Op::BitwiseNot, DType::UInt8, &[Scalar::UInt(0)]), Scalar::UInt(255));
    }

    #[test]
    fn float_semantics() {
        let f = |op, a: f64, b: f64| eval_scalar(op, DType::Float64, &[Scalar::Float(a), Scalar::Float(b)]);
        assert_eq!(f(Op::FloorMod, -7.0, 3.0), Scalar::Float(2.0));
        assert!(matches!(f(Op::FloorMod, 1.0, 0.0), Scalar::Float(v) if v.is_nan()));
        assert!(matches!(f(Op::Maximum, f64::NAN, 1.0), Scalar::Float(v) if v.is_nan()));
        assert_eq!(f(Op::Maximum, -0.0, 0.0), f(Op::Maximum, 0.0, -0.0));
        assert_eq!(f(Op::Minimum, -0.0, 0.0), f(Op::Minimum, 0.0, -0.0));
        let acos = eval_scalar(Op::Acos, DType::Float32, &[Scalar::Float(3.0)]);
        assert!(matches!(acos, Scalar::Float(v) if v.is_nan()));
        let r = eval_scalar(Op::Round, DType::Float64, &[Scalar::Float(2.5)]);
        assert_eq!(r, Scalar::Float(2.0));
        // float32 results stay representable
        let third = eval_scalar(Op::Divide, DType::Float32, &[Scalar::Float(1.0), Scalar::Float(3.0)]);
        assert!(third.fits(DType::Float32));
    }

    fn random_scalar(rng: &mut ChaCha8Rng, dt: DType) -> Scalar {
        match dt.class() {
            crate::graph_model::DTypeClass::SignedInt => Scalar::Int(dt.wrap_signed(rng.gen())),
            crate::graph_model::DTypeClass::UnsignedInt => Scalar::UInt(dt.wrap_unsigned(rng.gen())),
            crate::graph_model::DTypeClass::Float => {
                let raw = match rng.gen_range(0..8) {
                    0 => f64::NAN,
                    1 => f64::INFINITY,
                    2 => -0.0,
                    _ => rng.gen_range(-1e6..1e6),
                };
                Scalar::Float(dt.round_float(raw))
            }
            crate::graph_model::DTypeClass::Bool => Scalar::Bool(rng.gen()),
        }
    }

    /// Every admissible (op, dtype) pair is total and stays inside its result dtype.
    #[test]
    fn totality_on_random_scalars() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for op in Op::all() {
            for dt in DType::ALL.into_iter().filter(|d| op.admits(*d)) {
                let out_dt = op.spec().result_dtype(dt);
                for _ in 0..2_000 {
                    let args: Vec<Scalar> = (0..op.arity()).map(|_| random_scalar(&mut rng, dt)).collect();
                    let r = eval_scalar(op, dt, &args);
                    assert!(r.fits(out_dt), "{op} {dt} {args:?} -> {r:?}");
                }
            }
        }
    }
}

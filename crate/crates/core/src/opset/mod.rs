//! The elementwise operator pool: 23 binary and 35 unary operators, their
//! dtype admissibility, result-dtype rules and one shared kernel table that
//! every execution backend dispatches to.

mod kernels;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph_model::{DType, DTypeClass};

pub use kernels::{eval_elementwise, eval_scalar, EvalError};

macro_rules! ops {
    ($($variant:ident => $display:literal, $name:literal, $arity:literal, $adm:ident, $res:ident;)*) => {
        /// Operator identifier.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Op {
            $($variant,)*
        }

        static REGISTRY: &[OperatorSpec] = &[
            $(OperatorSpec {
                op: Op::$variant,
                display_name: $display,
                name: $name,
                arity: $arity,
                admissibility: Admissibility::$adm,
                result: ResultRule::$res,
            },)*
        ];
    };
}

ops! {
    Add => "Add", "add", 2, Numeric, SameAsOperand;
    Subtract => "Subtract", "subtract", 2, Numeric, SameAsOperand;
    Multiply => "Multiply", "multiply", 2, Numeric, SameAsOperand;
    Divide => "Divide", "divide", 2, Numeric, SameAsOperand;
    Power => "Power", "power", 2, FloatOnly, SameAsOperand;
    Mod => "Mod", "mod", 2, Numeric, SameAsOperand;
    FloorMod => "Floor Mod", "floor_mod", 2, Numeric, SameAsOperand;
    FloorDivide => "Floor Divide", "floor_divide", 2, Numeric, SameAsOperand;
    LogicalAnd => "Logical And", "logical_and", 2, BoolOnly, SameAsOperand;
    LogicalOr => "Logical Or", "logical_or", 2, BoolOnly, SameAsOperand;
    LogicalXor => "Logical Xor", "logical_xor", 2, BoolOnly, SameAsOperand;
    BitwiseAnd => "Bitwise And", "bitwise_and", 2, IntOnly, SameAsOperand;
    BitwiseOr => "Bitwise Or", "bitwise_or", 2, IntOnly, SameAsOperand;
    Equal => "Equal", "equal", 2, Numeric, Bool;
    NotEqual => "Not Equal", "not_equal", 2, Numeric, Bool;
    Less => "Less", "less", 2, Numeric, Bool;
    LessEqual => "LessEqual", "lessequal", 2, Numeric, Bool;
    Greater => "Greater", "greater", 2, Numeric, Bool;
    GreaterEqual => "GreaterEqual", "greaterequal", 2, Numeric, Bool;
    Maximum => "Maximum", "maximum", 2, Numeric, SameAsOperand;
    Minimum => "Minimum", "minimum", 2, Numeric, SameAsOperand;
    RightShift => "Right Shift", "right_shift", 2, IntOnly, SameAsOperand;
    LeftShift => "Left Shift", "left_shift", 2, IntOnly, SameAsOperand;
    Log => "Log", "log", 1, FloatOnly, SameAsOperand;
    Log2 => "Log2", "log2", 1, FloatOnly, SameAsOperand;
    Log10 => "Log10", "log10", 1, FloatOnly, SameAsOperand;
    Tan => "Tan", "tan", 1, FloatOnly, SameAsOperand;
    Tanh => "Tanh", "tanh", 1, FloatOnly, SameAsOperand;
    Cos => "Cos", "cos", 1, FloatOnly, SameAsOperand;
    Cosh => "Cosh", "cosh", 1, FloatOnly, SameAsOperand;
    Sin => "Sin", "sin", 1, FloatOnly, SameAsOperand;
    Sinh => "Sinh", "sinh", 1, FloatOnly, SameAsOperand;
    Acos => "Acos", "acos", 1, FloatOnly, SameAsOperand;
    Acosh => "Acosh", "acosh", 1, FloatOnly, SameAsOperand;
    Asin => "Asin", "asin", 1, FloatOnly, SameAsOperand;
    Asinh => "Asinh", "asinh", 1, FloatOnly, SameAsOperand;
    Atan => "Atan", "atan", 1, FloatOnly, SameAsOperand;
    Atanh => "Atanh", "atanh", 1, FloatOnly, SameAsOperand;
    Exp => "Exp", "exp", 1, FloatOnly, SameAsOperand;
    Erf => "Erf", "erf", 1, FloatOnly, SameAsOperand;
    Sqrt => "Sqrt", "sqrt", 1, FloatOnly, SameAsOperand;
    Rsqrt => "Rsqrt", "rsqrt", 1, FloatOnly, SameAsOperand;
    Sigmoid => "Sigmoid", "sigmoid", 1, FloatOnly, SameAsOperand;
    Floor => "Floor", "floor", 1, FloatOnly, SameAsOperand;
    Ceil => "Ceil", "ceil", 1, FloatOnly, SameAsOperand;
    Trunc => "Trunc", "trunc", 1, FloatOnly, SameAsOperand;
    Round => "Round", "round", 1, FloatOnly, SameAsOperand;
    Abs => "Abs", "abs", 1, Numeric, SameAsOperand;
    Sign => "Sign", "sign", 1, Numeric, SameAsOperand;
    Negative => "Negative", "negative", 1, SignedNumeric, SameAsOperand;
    LogicalNot => "Logical not", "logical_not", 1, BoolOnly, SameAsOperand;
    BitwiseNot => "Bitwise not", "bitwise_not", 1, IntOnly, SameAsOperand;
    ZerosLike => "Zeros Like", "zeros_like", 1, Numeric, SameAsOperand;
    OnesLike => "Ones Like", "ones_like", 1, Numeric, SameAsOperand;
    Copy => "Copy", "copy", 1, Numeric, SameAsOperand;
    IsNan => "isNan", "isnan", 1, FloatOnly, Bool;
    IsFinite => "isFinite", "isfinite", 1, FloatOnly, Bool;
    IsInf => "isInf", "isinf", 1, FloatOnly, Bool;
}

/// Which operand dtypes an operator accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Admissibility {
    FloatOnly,
    BoolOnly,
    /// Signed and unsigned integers.
    IntOnly,
    /// Signed ints, unsigned ints and floats.
    Numeric,
    /// Numeric minus unsigned ints.
    SignedNumeric,
}

impl Admissibility {
    pub fn admits(self, d: DType) -> bool {
        match self {
            Admissibility::FloatOnly => d.is_float(),
            Admissibility::BoolOnly => d.is_bool(),
            Admissibility::IntOnly => d.is_int(),
            Admissibility::Numeric => !d.is_bool(),
            Admissibility::SignedNumeric => {
                matches!(d.class(), DTypeClass::SignedInt | DTypeClass::Float)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResultRule {
    SameAsOperand,
    Bool,
}

/// Static description of one operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorSpec {
    pub op: Op,
    /// Name as it appears in the operator pool listing.
    pub display_name: &'static str,
    /// Normalized name used in every serialization.
    pub name: &'static str,
    pub arity: usize,
    pub admissibility: Admissibility,
    pub result: ResultRule,
}

impl OperatorSpec {
    pub fn admissible_dtypes(&self) -> Vec<DType> {
        DType::ALL
            .iter()
            .copied()
            .filter(|d| self.admissibility.admits(*d))
            .collect()
    }

    pub fn result_dtype(&self, operand: DType) -> DType {
        match self.result {
            ResultRule::SameAsOperand => operand,
            ResultRule::Bool => DType::Bool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown operator `{0}`")]
pub struct UnknownOperator(pub String);

/// Every operator, binary ones first, in pool order.
pub fn registry() -> &'static [OperatorSpec] {
    REGISTRY
}

/// Finds an operator by normalized name; pool display names ("Floor Mod",
/// "Rsqrt") are normalized first.
pub fn lookup(name: &str) -> Result<&'static OperatorSpec, UnknownOperator> {
    let normalized = name.trim().to_lowercase().replace(' ', "_");
    REGISTRY
        .iter()
        .find(|s| s.name == normalized)
        .ok_or_else(|| UnknownOperator(name.to_string()))
}

pub fn dtype_admissible(name: &str, d: DType) -> Result<bool, UnknownOperator> {
    Ok(lookup(name)?.admissibility.admits(d))
}

impl Op {
    pub fn spec(self) -> &'static OperatorSpec {
        &REGISTRY[self as usize]
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }

    pub fn arity(self) -> usize {
        self.spec().arity
    }

    pub fn admits(self, d: DType) -> bool {
        self.spec().admissibility.admits(d)
    }

    pub fn all() -> impl Iterator<Item = Op> {
        REGISTRY.iter().map(|s| s.op)
    }

    /// Operand order does not affect the result.
    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            Op::Add
                | Op::Multiply
                | Op::LogicalAnd
                | Op::LogicalOr
                | Op::LogicalXor
                | Op::BitwiseAnd
                | Op::BitwiseOr
                | Op::Equal
                | Op::NotEqual
                | Op::Maximum
                | Op::Minimum
        )
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Op {
    type Err = UnknownOperator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        lookup(s).map(|spec| spec.op)
    }
}

impl Serialize for Op {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Op {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_sizes() {
        let binary = registry().iter().filter(|s| s.arity == 2).count();
        let unary = registry().iter().filter(|s| s.arity == 1).count();
        assert_eq!(binary, 23);
        assert_eq!(unary, 35);
        assert_eq!(registry().len(), 58);
    }

    #[test]
    fn registry_index_matches_enum() {
        for (i, spec) in registry().iter().enumerate() {
            assert_eq!(spec.op as usize, i);
            assert_eq!(spec.op.spec(), spec);
            assert!(!spec.admissible_dtypes().is_empty(), "{}", spec.name);
        }
    }

    #[test]
    fn names_are_normalized_display_names() {
        for spec in registry() {
            assert_eq!(spec.name, spec.display_name.to_lowercase().replace(' ', "_"));
            assert_eq!(spec.name.parse::<Op>().unwrap(), spec.op);
        }
    }

    #[test]
    fn lookup_and_admissibility() {
        assert_eq!(lookup("Rsqrt").unwrap().arity, 1);
        assert_eq!(lookup("Floor Mod").unwrap().op, Op::FloorMod);
        assert!(dtype_admissible("sqrt", DType::Float32).unwrap());
        assert!(!dtype_admissible("sqrt", DType::Int16).unwrap());
        assert!(dtype_admissible("add", DType::Int64).unwrap());
        assert!(!dtype_admissible("negative", DType::UInt8).unwrap());
        assert!(dtype_admissible("right_shift", DType::UInt32).unwrap());
        assert!(!dtype_admissible("power", DType::Int32).unwrap());
        assert_eq!(dtype_admissible("conv2d", DType::Float32), Err(UnknownOperator("conv2d".into())));
    }

    #[test]
    fn result_rules() {
        for name in ["equal", "not_equal", "less", "lessequal", "greater", "greaterequal", "isnan", "isfinite", "isinf"] {
            assert_eq!(lookup(name).unwrap().result, ResultRule::Bool, "{name}");
        }
        assert_eq!(lookup("add").unwrap().result_dtype(DType::Int8), DType::Int8);
    }
}

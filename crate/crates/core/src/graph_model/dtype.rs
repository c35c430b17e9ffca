use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element type of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Int64,
    Int32,
    Int16,
    Int8,
    UInt64,
    UInt32,
    UInt16,
    UInt8,
    Float64,
    Float32,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DTypeClass {
    SignedInt,
    UnsignedInt,
    Float,
    Bool,
}

impl DType {
    /// The generator's data-type set, in its canonical order.
    pub const ALL: [DType; 11] = [
        DType::Int64,
        DType::Int32,
        DType::Int16,
        DType::Int8,
        DType::UInt64,
        DType::UInt32,
        DType::UInt16,
        DType::UInt8,
        DType::Float64,
        DType::Float32,
        DType::Bool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DType::Int64 => "int64",
            DType::Int32 => "int32",
            DType::Int16 => "int16",
            DType::Int8 => "int8",
            DType::UInt64 => "uint64",
            DType::UInt32 => "uint32",
            DType::UInt16 => "uint16",
            DType::UInt8 => "uint8",
            DType::Float64 => "float64",
            DType::Float32 => "float32",
            DType::Bool => "bool",
        }
    }

    pub fn class(self) -> DTypeClass {
        match self {
            DType::Int64 | DType::Int32 | DType::Int16 | DType::Int8 => DTypeClass::SignedInt,
            DType::UInt64 | DType::UInt32 | DType::UInt16 | DType::UInt8 => {
                DTypeClass::UnsignedInt
            }
            DType::Float64 | DType::Float32 => DTypeClass::Float,
            DType::Bool => DTypeClass::Bool,
        }
    }

    /// Bit width of one element (bool counts as 1).
    pub fn bits(self) -> u32 {
        match self {
            DType::Int64 | DType::UInt64 | DType::Float64 => 64,
            DType::Int32 | DType::UInt32 | DType::Float32 => 32,
            DType::Int16 | DType::UInt16 => 16,
            DType::Int8 | DType::UInt8 => 8,
            DType::Bool => 1,
        }
    }

    pub fn is_signed_int(self) -> bool {
        self.class() == DTypeClass::SignedInt
    }

    pub fn is_unsigned_int(self) -> bool {
        self.class() == DTypeClass::UnsignedInt
    }

    pub fn is_int(self) -> bool {
        self.is_signed_int() || self.is_unsigned_int()
    }

    pub fn is_float(self) -> bool {
        self.class() == DTypeClass::Float
    }

    pub fn is_bool(self) -> bool {
        self == DType::Bool
    }

    /// Truncates `v` to this signed width and sign-extends it back.
    pub fn wrap_signed(self, v: i64) -> i64 {
        match self.bits() {
            64 => v,
            b => {
                let shift = 64 - b;
                (v << shift) >> shift
            }
        }
    }

    /// Truncates `v` to this unsigned width.
    pub fn wrap_unsigned(self, v: u64) -> u64 {
        match self.bits() {
            64 => v,
            b => v & ((1u64 << b) - 1),
        }
    }

    /// Rounds a float to the precision of this dtype (identity for float64).
    pub fn round_float(self, v: f64) -> f64 {
        match self {
            DType::Float32 => v as f32 as f64,
            _ => v,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dtype `{0}`")]
pub struct UnknownDType(pub String);

impl FromStr for DType {
    type Err = UnknownDType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DType::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or_else(|| UnknownDType(s.to_string()))
    }
}

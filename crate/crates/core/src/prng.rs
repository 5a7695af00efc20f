//! Counter-based random draws.
//!
//! Every value produced here is a pure function of `(seed, stream, address)`.
//! Nothing is advanced or shared, so any worker can compute any draw in any
//! order and get the same bits.

use crate::signal::{Value, ValueType};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer applied to `x + gamma`.
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream of draws is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    VariableValue = 0,
    AnomalySchedule = 1,
    Duration = 2,
    Reserved = 3,
}

/// Class of a timestamp. `Normal` is the negative class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Normal,
    Anomalous,
}

impl Class {
    pub fn from_anomalous(anomalous: bool) -> Self {
        if anomalous {
            Class::Anomalous
        } else {
            Class::Normal
        }
    }

    pub fn is_anomalous(self) -> bool {
        matches!(self, Class::Anomalous)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Normal => "normal",
            Class::Anomalous => "anomalous",
        }
    }
}

impl std::fmt::Display for Class {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Packed stream identifier.
///
/// Layout, least significant first: purpose (bits 0..8), class (8..16),
/// variable index (16..32). The upper 32 bits are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(u64);

impl StreamId {
    pub fn new(purpose: Purpose, class: Class, variable_index: u16) -> Self {
        StreamId(purpose as u64 | (class as u64) << 8 | (variable_index as u64) << 16)
    }

    pub fn value(variable_index: u16, class: Class) -> Self {
        Self::new(Purpose::VariableValue, class, variable_index)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn from_raw(raw: u64) -> Self {
        StreamId(raw)
    }
}

/// Position of a draw within a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DrawAddress {
    pub timestamp: u64,
    pub attempt: u32,
}

impl DrawAddress {
    pub fn new(timestamp: u64, attempt: u32) -> Self {
        DrawAddress { timestamp, attempt }
    }

    #[inline]
    fn counter(self) -> u64 {
        self.timestamp
            .wrapping_mul(0x1_0000_0000)
            .wrapping_add(self.attempt as u64)
    }
}

#[inline]
pub fn draw_u64(seed: u64, stream: StreamId, addr: DrawAddress) -> u64 {
    mix64(mix64(seed ^ stream.0).wrapping_add(addr.counter()))
}

/// Maps the top 53 bits of a raw draw onto `[0, 1)`.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn draw_unit(seed: u64, stream: StreamId, addr: DrawAddress) -> f64 {
    unit_from_bits(draw_u64(seed, stream, addr))
}

/// Scales a unit draw into `[lo, hi]`.
///
/// Continuous values land in `[lo, hi)` (or exactly `lo` when `lo == hi`).
/// Discrete values are uniform over the integers `lo..=hi`.
#[inline]
pub fn scale_unit(u: f64, lo: f64, hi: f64, value_type: ValueType) -> Value {
    match value_type {
        ValueType::Continuous => Value::Continuous(lo + u * (hi - lo)),
        ValueType::Discrete => {
            let v = (lo + (u * (hi - lo + 1.0)).floor()).min(hi);
            Value::Discrete(v as i64)
        }
    }
}

#[inline]
pub fn draw_range(
    seed: u64,
    stream: StreamId,
    addr: DrawAddress,
    lo: f64,
    hi: f64,
    value_type: ValueType,
) -> Value {
    scale_unit(draw_unit(seed, stream, addr), lo, hi, value_type)
}

//! Fixed-point encoding of reals as field elements.

use serde::{Deserialize, Serialize};

use super::field::Fe;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointCodec {
    /// Fractional bits f; values are scaled by 2^f.
    pub frac_bits: u32,
    /// Bound on |embedding values|, enforced by range checks on the inputs.
    pub input_bound: f64,
    /// Bound on |fc1 outputs|, the inputs of poly_relu. Without it the
    /// square of the worst case overflows the field.
    pub activation_bound: f64,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec {
            frac_bits: 16,
            input_bound: 16.0,
            activation_bound: 256.0,
        }
    }
}

impl FixedPointCodec {
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn encode(&self, x: f64) -> i64 {
        (x * self.scale()).round() as i64
    }

    pub fn decode(&self, v: i128) -> f64 {
        v as f64 / self.scale()
    }

    pub fn encode_fe(&self, x: f64) -> Fe {
        Fe::from_i64(self.encode(x))
    }

    /// b such that range checks accept [−2^b, 2^b) for values up to `bound`.
    pub fn bits(&self, bound: f64) -> u32 {
        64 - (self.encode(bound).unsigned_abs()).leading_zeros()
    }

    /// floor(v / 2^f), the rescale applied after every multiplication.
    pub fn truncate(&self, v: i128) -> i128 {
        v >> self.frac_bits
    }
}

//! Arithmetic modulo the Goldilocks prime 2^64 − 2^32 + 1.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub const MODULUS: u64 = 0xFFFF_FFFF_0000_0001;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Fe(u64);

impl Fe {
    pub const ZERO: Fe = Fe(0);
    pub const ONE: Fe = Fe(1);

    pub fn new(v: u64) -> Self {
        Fe(v % MODULUS)
    }

    pub fn from_i128(v: i128) -> Self {
        let m = MODULUS as i128;
        Fe(v.rem_euclid(m) as u64)
    }

    pub fn from_i64(v: i64) -> Self {
        Fe::from_i128(v as i128)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Centered lift into (−p/2, p/2].
    pub fn signed(self) -> i128 {
        if self.0 > MODULUS / 2 {
            self.0 as i128 - MODULUS as i128
        } else {
            self.0 as i128
        }
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Fe::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; zero maps to zero.
    pub fn inv(self) -> Self {
        self.pow(MODULUS - 2)
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// None for non-canonical encodings (≥ p).
    pub fn from_le_bytes(b: [u8; 8]) -> Option<Self> {
        let v = u64::from_le_bytes(b);
        (v < MODULUS).then_some(Fe(v))
    }
}

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signed())
    }
}

impl Add for Fe {
    type Output = Fe;
    fn add(self, o: Fe) -> Fe {
        Fe(((self.0 as u128 + o.0 as u128) % MODULUS as u128) as u64)
    }
}

impl Sub for Fe {
    type Output = Fe;
    fn sub(self, o: Fe) -> Fe {
        self + (-o)
    }
}

impl Neg for Fe {
    type Output = Fe;
    fn neg(self) -> Fe {
        if self.0 == 0 {
            self
        } else {
            Fe(MODULUS - self.0)
        }
    }
}

impl Mul for Fe {
    type Output = Fe;
    fn mul(self, o: Fe) -> Fe {
        Fe(((self.0 as u128 * o.0 as u128) % MODULUS as u128) as u64)
    }
}

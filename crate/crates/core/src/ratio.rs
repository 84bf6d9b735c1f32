//! Exact rational scalars for combinatorial ratios.
//!
//! Doubling constants, densities, coverage fractions and decrement gaps are
//! ratios of set cardinalities. Orders here stay at desk scale (|G| <= 2^22),
//! so `i128` numerators never overflow even for fourth-power comparisons.
//! Reports serialize rationals as `"p/q"` strings to keep them exact.

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Exact rational with `"p/q"` JSON form.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(pub Ratio<i128>);

impl Rat {
    pub fn new(num: i128, den: i128) -> Self {
        Rat(Ratio::new(num, den))
    }

    pub fn from_counts(num: u128, den: u128) -> Self {
        Rat(Ratio::new(num as i128, den as i128))
    }

    pub fn int(n: i128) -> Self {
        Rat(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        Rat(Ratio::zero())
    }

    pub fn one() -> Self {
        Rat(Ratio::one())
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        // Ratio::to_f64 is exact for desk-scale operands.
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    /// Exact power with integer exponent (negative allowed, base nonzero).
    pub fn powi(&self, e: i32) -> Self {
        Rat(self.0.pow(e))
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Add for Rat {
    type Output = Rat;
    fn add(self, rhs: Rat) -> Rat {
        Rat(self.0 + rhs.0)
    }
}

impl Sub for Rat {
    type Output = Rat;
    fn sub(self, rhs: Rat) -> Rat {
        Rat(self.0 - rhs.0)
    }
}

impl Mul for Rat {
    type Output = Rat;
    fn mul(self, rhs: Rat) -> Rat {
        Rat(self.0 * rhs.0)
    }
}

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        Rat(self.0 / rhs.0)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (p, q) = s
            .split_once('/')
            .ok_or_else(|| D::Error::custom("expected \"p/q\""))?;
        let p: i128 = p.trim().parse().map_err(D::Error::custom)?;
        let q: i128 = q.trim().parse().map_err(D::Error::custom)?;
        if q == 0 {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(Rat::new(p, q))
    }
}

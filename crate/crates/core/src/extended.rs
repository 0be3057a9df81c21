//! Extended reals `R ∪ {+∞}`.
//!
//! Values are stored as `f64` with `f64::INFINITY` as the sentinel for `+∞`.
//! `-∞` and NaN are never valid extended reals; constructing one is an error,
//! and `∞ - ∞` is trapped instead of silently producing NaN.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Textual sentinel for `+∞` in every JSON format of the crate.
pub const INF_TOKEN: &str = "INF";
/// Textual sentinel for `-∞`, only valid for interval bounds.
pub const NEG_INF_TOKEN: &str = "-INF";

#[derive(Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps a raw value. `+∞` is accepted, NaN and `-∞` are rejected.
    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() {
            Err(Error::UndefinedArithmetic("NaN is not an extended real"))
        } else if v == f64::NEG_INFINITY {
            Err(Error::UndefinedArithmetic("-inf is not in R ∪ {+inf}"))
        } else {
            Ok(ExtReal(v))
        }
    }

    pub fn finite(v: f64) -> Self {
        debug_assert!(v.is_finite(), "ExtReal::finite({v})");
        ExtReal(v)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        !self.0.is_finite()
    }

    /// Raw `f64`, with `+∞` mapped to `f64::INFINITY`.
    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn finite_value(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// `self - rhs`; `∞ - ∞` and `finite - ∞` are errors.
    pub fn checked_sub(self, rhs: ExtReal) -> Result<ExtReal> {
        match (self.is_finite(), rhs.is_finite()) {
            (_, true) => Ok(ExtReal(self.0 - rhs.0)),
            (false, false) => Err(Error::UndefinedArithmetic("inf - inf")),
            (true, false) => Err(Error::UndefinedArithmetic("finite - inf is -inf")),
        }
    }

    /// Subtracts a finite real; `∞ - c = ∞`.
    #[inline]
    pub fn minus(self, c: f64) -> ExtReal {
        debug_assert!(c.is_finite());
        if self.is_finite() {
            ExtReal(self.0 - c)
        } else {
            self
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl From<ExtReal> for f64 {
    fn from(v: ExtReal) -> f64 {
        v.0
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn add(self, rhs: ExtReal) -> ExtReal {
        ExtReal(self.0 + rhs.0)
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    #[inline]
    fn add(self, rhs: f64) -> ExtReal {
        debug_assert!(rhs.is_finite());
        if self.is_finite() {
            ExtReal(self.0 + rhs)
        } else {
            self
        }
    }
}

impl AddAssign for ExtReal {
    fn add_assign(&mut self, rhs: ExtReal) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{:?}", self.0)
        } else {
            f.write_str("+inf")
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("+inf")
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_f64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_f64::deserialize(d)?;
        ExtReal::new(v).map_err(de::Error::custom)
    }
}

/// Serde adapter writing non-finite floats as `"INF"` / `"-INF"`.
pub mod serde_f64 {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str(INF_TOKEN)
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str(NEG_INF_TOKEN)
        } else {
            Err(serde::ser::Error::custom("NaN cannot be serialized"))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == INF_TOKEN => Ok(f64::INFINITY),
            Repr::Text(t) if t == NEG_INF_TOKEN => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!(
                "expected a number, \"{INF_TOKEN}\" or \"{NEG_INF_TOKEN}\", got \"{t}\""
            ))),
        }
    }

    /// Same encoding for `Vec<f64>`.
    pub mod vec {
        use super::*;

        #[derive(Serialize)]
        struct W(#[serde(with = "super")] f64);

        #[derive(Deserialize)]
        struct R(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| W(*x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let raw: Vec<R> = Vec::deserialize(d)?;
            Ok(raw.into_iter().map(|r| r.0).collect())
        }
    }
}

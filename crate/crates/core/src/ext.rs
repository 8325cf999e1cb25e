//! Extended reals `ℝ ∪ {+∞}` with saturating arithmetic.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

pub use ExtReal::{Finite, PosInf};

impl ExtReal {
    pub const ZERO: ExtReal = Finite(0.0);

    /// Maps `+∞` to [`PosInf`]; every other value is kept finite.
    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            PosInf
        } else {
            Finite(x)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Finite(x) if x.is_finite())
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, PosInf)
    }

    /// The value as `f64`, with `+∞` mapped to `f64::INFINITY`.
    pub fn value(&self) -> f64 {
        match *self {
            Finite(x) => x,
            PosInf => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Finite(x) if x.is_finite() => Some(x),
            _ => None,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (PosInf, PosInf) => Some(Ordering::Equal),
            (PosInf, _) => Some(Ordering::Greater),
            (_, PosInf) => Some(Ordering::Less),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (Finite(a), Finite(b)) => Finite(a + b),
            _ => PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + Finite(rhs)
    }
}

/// Multiplication by a nonnegative scalar; `0 · ∞ = 0`.
impl Mul<ExtReal> for f64 {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        match rhs {
            Finite(b) => Finite(self * b),
            PosInf if self == 0.0 => Finite(0.0),
            PosInf => PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finite(x) => write!(f, "{x}"),
            PosInf => write!(f, "+inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturating_addition() {
        assert_eq!(Finite(1.0) + PosInf, PosInf);
        assert_eq!(Finite(1.0) + Finite(2.0), Finite(3.0));
        assert_eq!(0.0 * PosInf, Finite(0.0));
        assert_eq!(2.0 * PosInf, PosInf);
    }

    #[test]
    fn ordering() {
        assert!(PosInf > Finite(1e300));
        assert!(Finite(-1.0) < Finite(0.0));
        assert_eq!(Finite(2.0).max(PosInf), PosInf);
        assert_eq!(ExtReal::from_f64(f64::INFINITY), PosInf);
    }
}

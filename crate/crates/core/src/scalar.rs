//! Scalar abstraction shared by the numeric parts of the engine.
//!
//! Exact verdicts use [`BigRational`]; sampling, regret dynamics and the
//! approximate solver paths run on `f64` (or `f32`). Everything that does
//! arithmetic on payoffs or probabilities is written against [`Scalar`].

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

/// A field-like number type usable for expectations and linear solves.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + Send + Sync + 'static
{
    /// `true` when arithmetic is exact and comparisons need no tolerance.
    const EXACT: bool;

    fn from_rational(q: &BigRational) -> Self;

    fn to_f64(&self) -> f64;

    /// Zero test used by elimination and support checks.
    fn is_negligible(&self) -> bool;

    /// Magnitude used to choose elimination pivots.
    fn pivot_weight(&self) -> f64 {
        self.to_f64().abs()
    }

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&BigRational::from_integer(BigInt::from(v)))
    }

    /// `self >= other`, up to the scalar's tolerance.
    fn ge_tol(&self, other: &Self) -> bool {
        let d = self.clone() - other.clone();
        d.is_negligible() || d > Self::zero()
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_rational(q: &BigRational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }

    fn pivot_weight(&self) -> f64 {
        // any nonzero pivot is exact; prefer the first one found
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }
}

macro_rules! float_scalar {
    ($t:ty, $tol:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn from_rational(q: &BigRational) -> Self {
                ToPrimitive::to_f64(q).unwrap_or(f64::NAN) as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn is_negligible(&self) -> bool {
                self.abs() <= $tol
            }
        }
    };
}

float_scalar!(f64, 1e-9);
float_scalar!(f32, 1e-5);

/// Exact conversion of a finite float into a rational.
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

/// `base^exp` for a nonnegative exponent.
pub fn pow<S: Scalar>(base: &S, exp: u32) -> S {
    let mut acc = S::one();
    for _ in 0..exp {
        acc = acc * base.clone();
    }
    acc
}

/// Convenience constructor `p/q`.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

pub fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}



#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_negligible_is_zero_only() {
        assert!(ratio(0, 5).is_negligible());
        assert!(!ratio(1, 1_000_000_000_000).is_negligible());
        assert!(1e-12f64.is_negligible());
        assert!(!1e-3f64.is_negligible());
    }

    #[test]
    fn pow_matches_repeated_product() {
        let d = ratio(9, 10);
        assert_eq!(pow(&d, 3), ratio(729, 1000));
        assert_eq!(pow(&0.5f64, 4), 0.0625);
    }

    #[test]
    fn float_roundtrip_is_exact() {
        let q = rational_from_f64(0.375).unwrap();
        assert_eq!(q, ratio(3, 8));
    }
}

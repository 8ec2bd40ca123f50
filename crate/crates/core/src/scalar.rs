//! Numeric field abstraction shared by the floating-point pipeline and the
//! exact-rational fixture path.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

/// Exact rational used for operator-polynomial coefficients.
pub type Rational = BigRational;

/// Exact complex rational.
pub type ExactComplex = Complex<Rational>;

/// A field the moment and assembly code can be evaluated over.
///
/// Implemented for `f64` (production path) and [`Rational`] (exact fixtures).
pub trait Scalar:
    Clone + Debug + PartialEq + PartialOrd + Num + Neg<Output = Self> + Send + Sync + 'static
{
    fn from_rational(r: &Rational) -> Self;

    fn from_int(v: i64) -> Self;

    fn to_f64(&self) -> f64;

    fn abs(&self) -> Self;

    /// Relative rounding slack: `1e-12` for floats, zero for exact fields.
    fn tolerance() -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_rational(r: &Rational) -> Self {
        // numer/denom separately would overflow for large binomial sums
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn tolerance() -> Self {
        1e-12
    }

    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
}

impl Scalar for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn tolerance() -> Self {
        Rational::zero()
    }
}

/// Shorthand for an exact rational `num/den`.
pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Shorthand for an exact complex rational `re + i·im`.
pub fn crat(re: Rational, im: Rational) -> ExactComplex {
    Complex::new(re, im)
}

pub(crate) fn exact_zero() -> ExactComplex {
    Complex::new(Rational::zero(), Rational::zero())
}

pub(crate) fn exact_one() -> ExactComplex {
    Complex::new(Rational::one(), Rational::zero())
}

pub(crate) fn exact_i() -> ExactComplex {
    Complex::new(Rational::zero(), Rational::one())
}

/// Lossless conversion of a finite `f64` into a rational.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    BigRational::from_float(v)
}

pub(crate) fn complex_to<S: Scalar>(c: &ExactComplex) -> Complex<S> {
    Complex::new(S::from_rational(&c.re), S::from_rational(&c.im))
}

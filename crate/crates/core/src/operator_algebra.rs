//! Exact polynomial algebra in one canonical pair `(x, p)` with `[x, p] = i`.
//!
//! Polynomials are kept in x-before-p normal order: every stored monomial is
//! `x^n p^m`. Coefficients are exact complex rationals, so every identity the
//! SLD assembly relies on holds exactly rather than to rounding.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::{exact_i, exact_one, exact_zero, rat, ExactComplex, Rational};

/// Default cap on the total degree of any product.
pub const DEFAULT_MAX_DEGREE: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("product of total degree {degree} exceeds the configured maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },
}

/// Monomial index `(n, m)` for `x^n p^m`.
pub type Powers = (u32, u32);

/// Complex-rational polynomial in `x` and `p`, normal ordered (x left of p).
#[derive(Clone, PartialEq, Default)]
pub struct OperatorPoly {
    terms: BTreeMap<Powers, ExactComplex>,
}

impl OperatorPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::monomial(0, 0, exact_one())
    }

    pub fn x() -> Self {
        Self::monomial(1, 0, exact_one())
    }

    pub fn p() -> Self {
        Self::monomial(0, 1, exact_one())
    }

    /// `coeff · x^n p^m`.
    pub fn monomial(n: u32, m: u32, coeff: ExactComplex) -> Self {
        let mut poly = Self::zero();
        poly.add_term((n, m), coeff);
        poly
    }

    pub fn scalar(coeff: ExactComplex) -> Self {
        Self::monomial(0, 0, coeff)
    }

    /// Builds a normal-ordered polynomial from `(n, m, coeff)` triples.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, ExactComplex)>,
    {
        let mut poly = Self::zero();
        for (n, m, c) in terms {
            poly.add_term((n, m), c);
        }
        poly
    }

    fn add_term(&mut self, key: Powers, coeff: ExactComplex) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(key).or_insert_with(exact_zero);
        *slot = &*slot + coeff;
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (Powers, &ExactComplex)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn coefficient(&self, n: u32, m: u32) -> ExactComplex {
        self.terms.get(&(n, m)).cloned().unwrap_or_else(exact_zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest total degree `n + m` present (0 for the zero polynomial).
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(n, m)| n + m).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(*k, v.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-exact_one()))
    }

    pub fn scale(&self, factor: &ExactComplex) -> Self {
        let mut out = Self::zero();
        for (k, v) in &self.terms {
            out.add_term(*k, v * factor);
        }
        out
    }

    pub fn scale_real(&self, factor: &Rational) -> Self {
        self.scale(&Complex::new(factor.clone(), Rational::zero()))
    }

    /// Hermitian conjugate. `(x^n p^m)† = p^m x^n`, re-normal-ordered.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (&(n, m), c) in &self.terms {
            for ((nn, mm), w) in reorder_p_x(m, n) {
                out.add_term((nn, mm), c.conj() * w);
            }
        }
        out
    }

    pub fn is_hermitian(&self) -> bool {
        self.adjoint() == *self
    }
}

/// Normal orders `p^b x^c`:
/// `p^b x^c = Σ_k k!·C(b,k)·C(c,k)·(−i)^k · x^{c−k} p^{b−k}`.
fn reorder_p_x(b: u32, c: u32) -> Vec<(Powers, ExactComplex)> {
    let minus_i = -exact_i();
    let mut out = Vec::with_capacity(b.min(c) as usize + 1);
    let mut phase = exact_one();
    for k in 0..=b.min(c) {
        let weight = factorial(k) * binomial(b, k) * binomial(c, k);
        let coeff = phase.scale(Rational::from_integer(weight));
        out.push(((c - k, b - k), coeff));
        phase *= minus_i.clone();
    }
    out
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Normal-ordered product `a · b`, capped at [`DEFAULT_MAX_DEGREE`].
pub fn multiply(a: &OperatorPoly, b: &OperatorPoly) -> Result<OperatorPoly, AlgebraError> {
    multiply_capped(a, b, DEFAULT_MAX_DEGREE)
}

pub fn multiply_capped(
    a: &OperatorPoly,
    b: &OperatorPoly,
    max_degree: u32,
) -> Result<OperatorPoly, AlgebraError> {
    if a.is_zero() || b.is_zero() {
        return Ok(OperatorPoly::zero());
    }
    let degree = a.degree() + b.degree();
    if degree > max_degree {
        return Err(AlgebraError::DegreeOverflow {
            degree,
            max: max_degree,
        });
    }
    let mut out = OperatorPoly::zero();
    for (&(n1, m1), c1) in &a.terms {
        for (&(n2, m2), c2) in &b.terms {
            let c12 = c1 * c2;
            for ((nn, mm), w) in reorder_p_x(m1, n2) {
                out.add_term((n1 + nn, mm + m2), &c12 * w);
            }
        }
    }
    Ok(out)
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &OperatorPoly, b: &OperatorPoly) -> Result<OperatorPoly, AlgebraError> {
    Ok(multiply(a, b)?.sub(&multiply(b, a)?))
}

/// `{a, b} = ab + ba`.
pub fn anticommutator(a: &OperatorPoly, b: &OperatorPoly) -> Result<OperatorPoly, AlgebraError> {
    Ok(multiply(a, b)?.add(&multiply(b, a)?))
}

/// Integer power by repeated multiplication.
pub fn power(a: &OperatorPoly, k: u32) -> Result<OperatorPoly, AlgebraError> {
    let mut acc = OperatorPoly::identity();
    for _ in 0..k {
        acc = multiply(&acc, a)?;
    }
    Ok(acc)
}

/// Normal-ordered expansion of the Weyl symbol
/// `W(x^n p^m) = 2^{-n} Σ_k C(n,k) x^{n−k} p^m x^k`.
pub fn weyl_symbol(n: u32, m: u32) -> OperatorPoly {
    let mut out = OperatorPoly::zero();
    let norm = rat(1, 1 << n);
    for k in 0..=n {
        let weight = Rational::from_integer(binomial(n, k)) * &norm;
        let head = Complex::new(weight, Rational::zero());
        for ((nn, mm), w) in reorder_p_x(m, k) {
            out.add_term((n - k + nn, mm), &head * w);
        }
    }
    out
}

/// Linear combination of Weyl symbols `Σ c_{nm} W(x^n p^m)`; the `(0, 0)`
/// entry is the scalar constant.
#[derive(Clone, PartialEq, Default)]
pub struct WeylCombination {
    terms: BTreeMap<Powers, ExactComplex>,
}

impl WeylCombination {
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, ExactComplex)>,
    {
        let mut out = Self::default();
        for (n, m, c) in terms {
            out.add_term((n, m), c);
        }
        out
    }

    fn add_term(&mut self, key: Powers, coeff: ExactComplex) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(key).or_insert_with(exact_zero);
        *slot = &*slot + coeff;
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (Powers, &ExactComplex)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn coefficient(&self, n: u32, m: u32) -> ExactComplex {
        self.terms.get(&(n, m)).cloned().unwrap_or_else(exact_zero)
    }

    pub fn constant(&self) -> ExactComplex {
        self.coefficient(0, 0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(n, m)| n + m).max().unwrap_or(0)
    }

    /// Rebuilds the normal-ordered polynomial via the symmetrization formula.
    pub fn expand(&self) -> OperatorPoly {
        let mut out = OperatorPoly::zero();
        for (&(n, m), c) in &self.terms {
            out = out.add(&weyl_symbol(n, m).scale(c));
        }
        out
    }
}

/// Exact decomposition of a normal-ordered polynomial into Weyl symbols.
///
/// `W(x^n p^m)` equals `x^n p^m` plus terms of strictly lower total degree, so
/// peeling off the top-degree monomials terminates.
pub fn weyl_decompose(a: &OperatorPoly) -> WeylCombination {
    let mut rest = a.clone();
    let mut out = WeylCombination::default();
    while let Some((&key, coeff)) = rest.terms.iter().max_by_key(|(&(n, m), _)| (n + m, n)) {
        let coeff = coeff.clone();
        let (n, m) = key;
        rest = rest.sub(&weyl_symbol(n, m).scale(&coeff));
        out.add_term(key, coeff);
    }
    out
}

fn fmt_coeff(c: &ExactComplex) -> String {
    let re = !c.re.is_zero();
    let im = !c.im.is_zero();
    match (re, im) {
        (true, false) => format!("{}", c.re),
        (false, true) => format!("{}i", c.im),
        _ => format!("({} + {}i)", c.re, c.im),
    }
}

fn fmt_monomial(n: u32, m: u32) -> String {
    let pow = |s: &str, k: u32| match k {
        0 => String::new(),
        1 => s.to_string(),
        _ => format!("{s}^{k}"),
    };
    let parts: Vec<String> = [pow("x", n), pow("p", m)]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    parts.join(" ")
}

fn fmt_sum<'a>(
    f: &mut fmt::Formatter<'_>,
    terms: impl Iterator<Item = (&'a Powers, &'a ExactComplex)>,
    wrap: impl Fn(u32, u32) -> String,
) -> fmt::Result {
    let mut any = false;
    // highest degree first reads like the printed tables
    let mut terms: Vec<_> = terms.collect();
    terms.sort_by_key(|(&(n, m), _)| std::cmp::Reverse((n + m, n)));
    for (&(n, m), c) in terms {
        if any {
            write!(f, " + ")?;
        }
        any = true;
        if n + m == 0 {
            write!(f, "{}", fmt_coeff(c))?;
        } else if c.is_one() {
            write!(f, "{}", wrap(n, m))?;
        } else {
            write!(f, "{} {}", fmt_coeff(c), wrap(n, m))?;
        }
    }
    if !any {
        write!(f, "0")?;
    }
    Ok(())
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_sum(f, self.terms.iter(), fmt_monomial)
    }
}

impl fmt::Debug for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorPoly[{self}]")
    }
}

impl fmt::Display for WeylCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_sum(f, self.terms.iter(), |n, m| {
            format!("W({})", fmt_monomial(n, m))
        })
    }
}

impl fmt::Debug for WeylCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeylCombination[{self}]")
    }
}

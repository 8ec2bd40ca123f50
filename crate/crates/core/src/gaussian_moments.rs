//! Expectation values in zero-mean Gaussian states.
//!
//! A Weyl-ordered monomial has the same Gaussian expectation as the classical
//! moment of `x^n p^m` under the symmetrized covariance
//! `[[⟨x²⟩, ⟨{x,p}⟩/2], [⟨{x,p}⟩/2, ⟨p²⟩]]`, so any operator polynomial is
//! evaluated by Weyl decomposition followed by Isserlis pairing.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator_algebra::{
    anticommutator, weyl_decompose, AlgebraError, OperatorPoly, WeylCombination,
};
use crate::scalar::{complex_to, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("second moments must be positive (xx = {xx}, pp = {pp})")]
    NonPositive { xx: f64, pp: f64 },
    #[error("uncertainty bound violated: xx·pp − (xp/2)² = {det} < 1/4")]
    Uncertainty { det: f64 },
    #[error("operator is not Hermitian: {0}")]
    NotHermitian(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Second moments `⟨x²⟩`, `⟨p²⟩`, `⟨{x,p}⟩` of a zero-mean Gaussian state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState<S = f64> {
    pub xx: S,
    pub pp: S,
    pub xp: S,
}

impl<S: Scalar> MomentState<S> {
    /// Validated constructor.
    pub fn new(xx: S, pp: S, xp: S) -> Result<Self, MomentError> {
        let state = Self { xx, pp, xp };
        state.validate()?;
        Ok(state)
    }

    /// No checks; used for transient values such as RK4 stages.
    pub fn new_unchecked(xx: S, pp: S, xp: S) -> Self {
        Self { xx, pp, xp }
    }

    /// `xx·pp − (xp/2)²`, the covariance determinant.
    pub fn covariance_det(&self) -> S {
        let half = self.xp.clone() / S::from_int(2);
        self.xx.clone() * self.pp.clone() - half.clone() * half
    }

    pub fn validate(&self) -> Result<(), MomentError> {
        if !(self.xx > S::zero() && self.pp > S::zero()) {
            return Err(MomentError::NonPositive {
                xx: self.xx.to_f64(),
                pp: self.pp.to_f64(),
            });
        }
        let det = self.covariance_det();
        // rounding slack for states sitting exactly on the bound
        let bound = S::ratio(1, 4) - S::from_rational(&crate::scalar::rat(1, 1 << 40));
        if det < bound {
            return Err(MomentError::Uncertainty { det: det.to_f64() });
        }
        Ok(())
    }

    pub fn to_f64(&self) -> MomentState<f64> {
        MomentState {
            xx: self.xx.to_f64(),
            pp: self.pp.to_f64(),
            xp: self.xp.to_f64(),
        }
    }
}

impl MomentState<f64> {
    /// Symplectic eigenvalue `ν = √(xx·pp − (xp/2)²)`.
    pub fn symplectic_eigenvalue(&self) -> f64 {
        self.covariance_det().sqrt()
    }
}

/// Number of Isserlis pairings of `n` copies of `x` and `m` copies of `p` that
/// use exactly `k` cross pairs: `C(n,k)·C(m,k)·k!·(n−k−1)!!·(m−k−1)!!`.
fn pairing_count(n: u32, m: u32, k: u32) -> u128 {
    fn choose(n: u32, k: u32) -> u128 {
        (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
    }
    fn double_factorial_odd(n: u32) -> u128 {
        // (n−1)!! for even n
        (1..n).step_by(2).fold(1u128, |acc, v| acc * v as u128)
    }
    let k_fact = (1..=k).fold(1u128, |acc, v| acc * v as u128);
    choose(n, k) * choose(m, k) * k_fact * double_factorial_odd(n - k) * double_factorial_odd(m - k)
}

/// Classical Gaussian moment `E[x^n p^m]` = `⟨W(x^n p^m)⟩`.
pub fn weyl_moment<S: Scalar>(n: u32, m: u32, state: &MomentState<S>) -> S {
    if (n + m) % 2 == 1 {
        return S::zero();
    }
    let cross = state.xp.clone() / S::from_int(2);
    let mut total = S::zero();
    let mut k = n % 2;
    while k <= n.min(m) {
        let count = pairing_count(n, m, k);
        let term = state.xx.powi((n - k) / 2) * state.pp.powi((m - k) / 2) * cross.powi(k);
        total = total + S::from_int(count as i64) * term;
        k += 2;
    }
    total
}

/// Table of `⟨W(x^n p^m)⟩` for all `n + m ≤ max_degree`.
#[derive(Debug, Clone)]
pub struct WeylMomentTable<S = f64> {
    max_degree: u32,
    values: Vec<S>,
}

impl<S: Scalar> WeylMomentTable<S> {
    pub fn new(state: &MomentState<S>, max_degree: u32) -> Self {
        let side = (max_degree + 1) as usize;
        let mut values = vec![S::zero(); side * side];
        for n in 0..=max_degree {
            for m in 0..=(max_degree - n) {
                values[n as usize * side + m as usize] = weyl_moment(n, m, state);
            }
        }
        Self { max_degree, values }
    }

    pub fn get(&self, n: u32, m: u32) -> S {
        assert!(
            n + m <= self.max_degree,
            "moment table holds degree ≤ {}",
            self.max_degree
        );
        self.values[n as usize * (self.max_degree + 1) as usize + m as usize].clone()
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// `⟨Σ c W(x^n p^m)⟩`.
    pub fn evaluate(&self, combo: &WeylCombination) -> Complex<S> {
        let mut acc = Complex::new(S::zero(), S::zero());
        for ((n, m), c) in combo.terms() {
            let v = self.get(n, m);
            let c: Complex<S> = complex_to(c);
            acc = acc + Complex::new(c.re * v.clone(), c.im * v);
        }
        acc
    }
}

/// `⟨op⟩` in the Gaussian state.
pub fn expectation<S: Scalar>(op: &OperatorPoly, state: &MomentState<S>) -> Complex<S> {
    let table = WeylMomentTable::new(state, op.degree().max(1));
    table.evaluate(&weyl_decompose(op))
}

/// `⟨½{A,B}⟩ − ⟨A⟩⟨B⟩` for Hermitian `A`, `B`.
pub fn symmetric_covariance<S: Scalar>(
    a: &OperatorPoly,
    b: &OperatorPoly,
    state: &MomentState<S>,
) -> Result<S, MomentError> {
    for op in [a, b] {
        if !op.is_hermitian() {
            return Err(MomentError::NotHermitian(op.to_string()));
        }
    }
    let sym = expectation(&anticommutator(a, b)?, state).re / S::from_int(2);
    Ok(sym - expectation(a, state).re * expectation(b, state).re)
}

/// Covariance matrix `Cov(A_i, A_j)` over a list of Hermitian operators.
pub fn covariance_matrix<S: Scalar>(
    ops: &[OperatorPoly],
    state: &MomentState<S>,
) -> Result<Vec<Vec<S>>, MomentError> {
    let n = ops.len();
    let mut out = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in i..n {
            let v = symmetric_covariance(&ops[i], &ops[j], state)?;
            out[i][j] = v.clone();
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Operator pre-decomposed into Weyl symbols with coefficients in `S`, so
/// repeated expectations need no exact arithmetic.
#[derive(Debug, Clone)]
pub struct CompiledOperator<S = f64> {
    terms: Vec<(u32, u32, Complex<S>)>,
    degree: u32,
}

impl<S: Scalar> CompiledOperator<S> {
    pub fn new(op: &OperatorPoly) -> Self {
        let terms = weyl_decompose(op)
            .terms()
            .map(|((n, m), c)| (n, m, complex_to(c)))
            .collect();
        Self {
            terms,
            degree: op.degree(),
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn eval(&self, table: &WeylMomentTable<S>) -> Complex<S> {
        let mut acc = Complex::new(S::zero(), S::zero());
        for (n, m, c) in &self.terms {
            let v = table.get(*n, *m);
            acc = acc + Complex::new(c.re.clone() * v.clone(), c.im.clone() * v);
        }
        acc
    }
}

/// Precompiled [`covariance_matrix`] for a fixed operator list.
#[derive(Debug, Clone)]
pub struct CovarianceTemplate<S = f64> {
    symmetric: Vec<Vec<CompiledOperator<S>>>,
    means: Vec<CompiledOperator<S>>,
    max_degree: u32,
}

impl<S: Scalar> CovarianceTemplate<S> {
    pub fn new(ops: &[OperatorPoly]) -> Result<Self, MomentError> {
        for op in ops {
            if !op.is_hermitian() {
                return Err(MomentError::NotHermitian(op.to_string()));
            }
        }
        let mut symmetric = Vec::with_capacity(ops.len());
        for a in ops {
            let row = ops
                .iter()
                .map(|b| Ok(CompiledOperator::new(&anticommutator(a, b)?)))
                .collect::<Result<Vec<_>, MomentError>>()?;
            symmetric.push(row);
        }
        let max_degree = ops.iter().map(OperatorPoly::degree).max().unwrap_or(0) * 2;
        Ok(Self {
            symmetric,
            means: ops.iter().map(CompiledOperator::new).collect(),
            max_degree: max_degree.max(1),
        })
    }

    pub fn evaluate(&self, state: &MomentState<S>) -> Vec<Vec<S>> {
        let table = WeylMomentTable::new(state, self.max_degree);
        let means: Vec<S> = self.means.iter().map(|m| m.eval(&table).re).collect();
        let two = S::from_int(2);
        self.symmetric
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, op)| {
                        op.eval(&table).re / two.clone() - means[i].clone() * means[j].clone()
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_algebra::{multiply, power, weyl_symbol};
    use crate::scalar::{rat, Rational};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Brute-force Isserlis: enumerate every perfect matching of the factor list.
    fn isserlis_brute(factors: &[u8], cov: &[[f64; 2]; 2]) -> f64 {
        if factors.is_empty() {
            return 1.0;
        }
        if factors.len() % 2 == 1 {
            return 0.0;
        }
        let first = factors[0];
        let mut total = 0.0;
        for j in 1..factors.len() {
            let mut rest: Vec<u8> = factors[1..].to_vec();
            let partner = rest.remove(j - 1);
            total += cov[first as usize][partner as usize] * isserlis_brute(&rest, cov);
        }
        total
    }

    fn state(xx: f64, pp: f64, xp: f64) -> MomentState {
        MomentState::new(xx, pp, xp).unwrap()
    }

    #[test]
    fn pairing_formula_matches_enumeration() {
        let s = state(1.3, 0.9, 0.7);
        let cov = [[s.xx, s.xp / 2.0], [s.xp / 2.0, s.pp]];
        for n in 0..=7u32 {
            for m in 0..=(7 - n) {
                let mut factors = vec![0u8; n as usize];
                factors.extend(std::iter::repeat_n(1u8, m as usize));
                let brute = isserlis_brute(&factors, &cov);
                assert_relative_eq!(
                    weyl_moment(n, m, &s),
                    brute,
                    max_relative = 1e-13,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn odd_parity_vanishes_exactly() {
        let s = state(2.0, 3.0, 1.5);
        for n in 0..=7u32 {
            for m in 0..=(7 - n) {
                if (n + m) % 2 == 1 {
                    assert_eq!(weyl_moment(n, m, &s), 0.0);
                    assert_eq!(expectation(&weyl_symbol(n, m), &s), Complex::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn fourth_moments() {
        let s = state(1.7, 2.3, 0.4);
        let x4 = power(&OperatorPoly::x(), 4).unwrap();
        let p4 = power(&OperatorPoly::p(), 4).unwrap();
        assert_relative_eq!(
            expectation(&x4, &s).re,
            3.0 * s.xx * s.xx,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            expectation(&p4, &s).re,
            3.0 * s.pp * s.pp,
            max_relative = 1e-14
        );
        assert_eq!(expectation(&x4, &s).im, 0.0);
    }

    #[test]
    fn weyl_x3p_and_x2p2() {
        let s = state(1.2, 1.1, 0.8);
        let w31 = expectation(&weyl_symbol(3, 1), &s).re;
        assert_relative_eq!(w31, 1.5 * s.xx * s.xp, max_relative = 1e-14);
        let w22 = expectation(&weyl_symbol(2, 2), &s).re;
        assert_relative_eq!(w22, s.xx * s.pp + 0.5 * s.xp * s.xp, max_relative = 1e-14);
        let thermal = state(2.25, 4.0, 0.0);
        assert_eq!(expectation(&weyl_symbol(1, 1), &thermal).re, 0.0);
    }

    #[test]
    fn anticommutator_expectation_is_xp() {
        let s = state(1.0, 1.0, 1.0);
        let a = anticommutator(&OperatorPoly::x(), &OperatorPoly::p()).unwrap();
        let v = expectation(&a, &s);
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-15);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn compiled_covariance_matches_direct() {
        let ops = crate::sld_builder::OperatorBasis::standard()
            .elements()
            .to_vec();
        let s = MomentState::new(1.7, 0.9, -0.35).unwrap();
        let direct = covariance_matrix(&ops, &s).unwrap();
        let compiled = CovarianceTemplate::new(&ops).unwrap().evaluate(&s);
        for (r, q) in direct.iter().zip(&compiled) {
            for (u, v) in r.iter().zip(q) {
                assert_relative_eq!(*u, *v, max_relative = 1e-14, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn covariance_fixtures() {
        let x2 = power(&OperatorPoly::x(), 2).unwrap();
        let p2 = power(&OperatorPoly::p(), 2).unwrap();
        let s = state(1.9, 0.8, 0.0);
        assert_relative_eq!(
            symmetric_covariance(&x2, &x2, &s).unwrap(),
            2.0 * s.xx * s.xx,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            symmetric_covariance(&x2, &p2, &s).unwrap(),
            -0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn exact_covariance_in_rationals() {
        let x2 = power(&OperatorPoly::x(), 2).unwrap();
        let p2 = power(&OperatorPoly::p(), 2).unwrap();
        let s = MomentState::<Rational>::new(rat(9, 4), rat(4, 1), rat(0, 1)).unwrap();
        assert_eq!(symmetric_covariance(&x2, &p2, &s).unwrap(), rat(-1, 2));
        assert_eq!(symmetric_covariance(&x2, &x2, &s).unwrap(), rat(81, 8));
    }

    #[test]
    fn non_hermitian_rejected() {
        let xp = multiply(&OperatorPoly::x(), &OperatorPoly::p()).unwrap();
        let s = state(1.0, 1.0, 0.0);
        assert!(matches!(
            symmetric_covariance(&xp, &xp, &s),
            Err(MomentError::NotHermitian(_))
        ));
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(matches!(
            MomentState::new(-1.0, 1.0, 0.0),
            Err(MomentError::NonPositive { .. })
        ));
        assert!(matches!(
            MomentState::new(0.4, 0.4, 0.0),
            Err(MomentError::Uncertainty { .. })
        ));
        assert!(MomentState::new(0.5, 0.5, 0.0).is_ok());
    }

    fn valid_state() -> impl Strategy<Value = MomentState> {
        (0.3f64..3.0, 0.3f64..3.0, -1.0f64..1.0).prop_filter_map("uncertainty", |(xx, pp, r)| {
            let xp = 2.0 * r * (xx * pp - 0.25).max(0.0).sqrt();
            MomentState::new(xx, pp, xp).ok()
        })
    }

    fn hermitian_quadratic() -> impl Strategy<Value = OperatorPoly> {
        prop::array::uniform5(-3i64..=3).prop_map(|c| {
            let ops = crate::sld_builder::OperatorBasis::standard();
            ops.elements()
                .iter()
                .zip(c)
                .fold(OperatorPoly::zero(), |acc, (op, k)| {
                    acc.add(&op.scale_real(&rat(k, 1)))
                })
        })
    }

    proptest! {
        #[test]
        fn variance_is_nonnegative(s in valid_state(), a in hermitian_quadratic()) {
            let v = symmetric_covariance(&a, &a, &s).unwrap();
            prop_assert!(v >= -1e-9, "variance {v}");
        }

        #[test]
        fn hermitian_expectations_are_real(s in valid_state(), a in hermitian_quadratic(), b in hermitian_quadratic()) {
            let sym = anticommutator(&a, &b).unwrap();
            prop_assert_eq!(expectation(&sym, &s).im, 0.0);
        }
    }
}

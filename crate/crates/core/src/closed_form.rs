//! Reference closed forms, kept as fixtures.
//!
//! Everything here is kept exactly as given, including any slips; the
//! generic builder in [`crate::sld_builder`] is the production path and the
//! tests compare the two.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::gaussian_moments::MomentState;
use crate::scalar::Scalar;
use crate::sld_builder::Theta;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("closed form is singular: {what} vanishes")]
    Degenerate { what: &'static str },
    #[error("specialised formula does not apply: {0}")]
    NotApplicable(String),
}

fn is_negligible<S: Scalar>(value: &S, scale: &S) -> bool {
    value.abs() <= S::tolerance() * scale.abs() || value.is_zero()
}

/// Stationary-state matrix in the printed layout, written in `a² = 4mT`.
pub fn equilibrium_matrix<S: Scalar + nalgebra::Scalar>(params: &ModelParams<S>) -> DMatrix<S> {
    let a2 = params.a_squared();
    let a4 = a2.clone() * a2.clone();
    let b = params.b();
    let c = params.c();
    let g = params.gamma.clone();
    let two = S::from_int(2);
    let z = S::zero;
    let half = S::ratio(1, 2);
    let r4 =
        a4.clone() * b.clone() * b.clone() / (two.clone() * c.clone()) + two.clone() * b.clone();
    let s4 = a4.clone() * b.clone() * half.clone() + two.clone() * c.clone();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(5, 5, &[
        z(), -(b.clone() * a2.clone() * half.clone()), z(), z(), z(),
        a2.clone() * b.clone() * half.clone(), -(g.clone() * a2 * half.clone()), z(), z(), z(),
        z(), z(), z(), two.clone() * g.clone(), -r4.clone(),
        z(), z(), z(), -(g.clone() * a4.clone() * half), s4.clone(),
        z(), z(), r4, -s4, -(g.clone() * a4 * b / (two.clone() * c)) - two * g,
    ]);
    m
}

/// Constant vector for `θ = T` (any state).
pub fn temperature_rhs<S: Scalar + nalgebra::Scalar>(params: &ModelParams<S>) -> DVector<S> {
    let z = S::zero;
    DVector::from_vec(vec![
        z(),
        z(),
        z(),
        -(S::from_int(2) * params.gamma.clone() / params.b()),
        z(),
    ])
}

/// Constant vector for `θ = γ`: `[0, 0, 0, −2T/b + 4⟨p²⟩, 2⟨{x,p}⟩]`.
pub fn gamma_rhs<S: Scalar + nalgebra::Scalar>(
    params: &ModelParams<S>,
    state: &MomentState<S>,
) -> DVector<S> {
    let z = S::zero;
    let two = S::from_int(2);
    DVector::from_vec(vec![
        z(),
        z(),
        z(),
        -(two.clone() * params.temperature.clone() / params.b())
            + S::from_int(4) * state.pp.clone(),
        two * state.xp.clone(),
    ])
}

pub fn rhs<S: Scalar + nalgebra::Scalar>(
    params: &ModelParams<S>,
    state: &MomentState<S>,
    theta: Theta,
) -> DVector<S> {
    match theta {
        Theta::Temperature => temperature_rhs(params),
        Theta::Gamma => gamma_rhs(params, state),
    }
}

/// Printed matrix for an arbitrary zero-mean Gaussian state, verbatim.
///
/// `state.xp` is `⟨{x,p}⟩`. Entry `[4][2]` is printed without the
/// `−2b⟨{x,p}⟩²` contribution the generic assembly produces.
pub fn squeezed_matrix<S: Scalar + nalgebra::Scalar>(
    params: &ModelParams<S>,
    state: &MomentState<S>,
) -> DMatrix<S> {
    let (b, c, g, t) = (
        params.b(),
        params.c(),
        params.gamma.clone(),
        params.temperature.clone(),
    );
    let (x, p, q) = (state.xx.clone(), state.pp.clone(), state.xp.clone());
    let k = |v: i64| S::from_int(v);
    let z = S::zero;
    let gt = g.clone() * t / b.clone();

    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(5, 5, &[
        // odd block
        -(b.clone() * q.clone()),
        -(k(2) * b.clone() * p.clone()),
        z(), z(), z(),

        k(2) * c.clone() * x.clone() + g.clone() * q.clone(),
        k(2) * g.clone() * p.clone() - k(2) * gt.clone() + c.clone() * q.clone(),
        z(), z(), z(),

        // even block
        z(), z(),
        -(k(4) * b.clone() * x.clone() * q.clone()),
        -(k(4) * b.clone() * p.clone() * q.clone()) + k(2) * g.clone(),
        -(k(8) * b.clone() * x.clone() * p.clone()) - k(2) * b.clone() - k(2) * b.clone() * q.clone() * q.clone(),

        z(), z(),
        k(4) * c.clone() * x.clone() * q.clone() + k(2) * g.clone() * q.clone() * q.clone(),
        k(8) * g.clone() * p.clone() * p.clone() - k(8) * gt.clone() * p.clone() + k(4) * c.clone() * p.clone() * q.clone(),
        k(8) * c.clone() * x.clone() * p.clone() + k(2) * c.clone() + k(2) * c.clone() * q.clone() * q.clone()
            + k(8) * g.clone() * p.clone() * q.clone() - k(4) * gt.clone() * q.clone(),

        z(), z(),
        k(8) * c.clone() * x.clone() * x.clone() + k(2) * b.clone() + k(4) * g.clone() * x.clone() * q.clone(),
        -(k(8) * b.clone() * p.clone() * p.clone()) - k(2) * c.clone() + k(4) * g.clone() * p.clone() * q.clone()
            + k(2) * c.clone() * q.clone() * q.clone() - k(4) * gt.clone() * q.clone(),
        k(8) * g.clone() * x.clone() * p.clone() - k(8) * gt * x.clone() - k(2) * g.clone()
            + k(8) * c * x * q.clone() - k(8) * b * p * q.clone() + k(2) * g * q.clone() * q,
    ]);
    m
}

/// Stationary SLD coefficients `(c_x, c_p, c_xx, c_pp, c_xp)` as printed
/// for the temperature.
pub fn equilibrium_coefficients<S: Scalar>(
    params: &ModelParams<S>,
) -> Result<[S; 5], ClosedFormError> {
    let a2 = params.a_squared();
    let a4 = a2.clone() * a2;
    let a8 = a4.clone() * a4.clone();
    let b = params.b();
    let c = params.c();
    let g = params.gamma.clone();
    let k = |v: i64| S::from_int(v);

    let lead = a8.clone() * b.clone().powi(4);
    let tail = k(16) * b.clone() * b.clone() * c.clone() * c.clone();
    let den_xx = lead.clone() - tail.clone();
    if is_negligible(&den_xx, &(lead + tail)) {
        return Err(ClosedFormError::Degenerate {
            what: "a⁸b⁴ − 16b²c²",
        });
    }
    let den_pp = a4.clone() * b.clone() - k(4) * c.clone();
    if is_negligible(&den_pp, &(a4.clone() * b.clone() + k(4) * c.clone())) {
        return Err(ClosedFormError::Degenerate {
            what: "a⁴b − 4c"
        });
    }
    let den_xp = a8 * b.clone().powi(3) - k(16) * b.clone() * c.clone() * c.clone();

    let c_xx = k(4)
        * c.clone()
        * (a4 * b.clone() * b.clone() + k(4) * (b * c.clone() + g.clone() * g.clone()))
        / den_xx;
    let c_pp = k(4) / den_pp;
    let c_xp = k(16) * c * g / den_xp;
    Ok([S::zero(), S::zero(), c_xx, c_pp, c_xp])
}

/// The same stationary temperature SLD as known before the moment method,
/// i.e. the exact stationary solution: no `γ²` term and no `{x,p}` part.
pub fn reference_equilibrium_coefficients<S: Scalar>(
    params: &ModelParams<S>,
) -> Result<[S; 5], ClosedFormError> {
    let a2 = params.a_squared();
    let a4 = a2.clone() * a2;
    let b = params.b();
    let c = params.c();
    let k = |v: i64| S::from_int(v);
    let den_pp = a4.clone() * b.clone() - k(4) * c.clone();
    if is_negligible(&den_pp, &(a4.clone() * b.clone() + k(4) * c.clone())) {
        return Err(ClosedFormError::Degenerate {
            what: "a⁴b − 4c"
        });
    }
    let den_xx = a4.clone() * a4.clone() * b.clone().powi(4)
        - k(16) * b.clone() * b.clone() * c.clone() * c.clone();
    let c_xx = k(4) * c.clone() * (a4 * b.clone() * b.clone() + k(4) * b * c) / den_xx;
    Ok([S::zero(), S::zero(), c_xx, k(4) / den_pp, S::zero()])
}

/// Numerators `(f, g, h)` and common denominator `Δ` of the specialised
/// even-block coefficients for `m = 1`, `ω = 2/3`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialisedCoefficients<S> {
    pub f: S,
    pub g: S,
    pub h: S,
    pub delta: S,
}

impl<S: Scalar> SpecialisedCoefficients<S> {
    /// `(c_xx, c_pp, c_xp) = (f, g, h)/Δ`
    pub fn coefficients(&self) -> Result<[S; 3], ClosedFormError> {
        if self.delta.is_zero() {
            return Err(ClosedFormError::Degenerate { what: "Δ" });
        }
        Ok([
            self.f.clone() / self.delta.clone(),
            self.g.clone() / self.delta.clone(),
            self.h.clone() / self.delta.clone(),
        ])
    }
}

/// Whether [`specialised_coefficients`] describes `(params, theta)`.
///
/// The formula was derived for unit mass, `ω = 2/3`, and solves the
/// damping-rate system; anywhere else it is meaningless.
pub fn specialisation_applies<S: Scalar>(params: &ModelParams<S>, theta: Theta) -> bool {
    theta == Theta::Gamma && params.m == S::one() && params.omega == S::ratio(2, 3)
}

/// Closed-form even-block coefficients for `m = 1`, `ω = 2/3`, verbatim.
///
/// Returns [`ClosedFormError::NotApplicable`] outside that specialisation
/// (see [`specialisation_applies`]).
pub fn specialised_coefficients<S: Scalar>(
    params: &ModelParams<S>,
    state: &MomentState<S>,
    theta: Theta,
) -> Result<SpecialisedCoefficients<S>, ClosedFormError> {
    if !specialisation_applies(params, theta) {
        return Err(ClosedFormError::NotApplicable(format!(
            "requires m = 1, ω = 2/3, θ = γ (got m = {}, ω = {}, θ = {theta})",
            params.m.to_f64(),
            params.omega.to_f64()
        )));
    }
    Ok(specialised_numerators(
        state,
        params.temperature.clone(),
        params.gamma.clone(),
    ))
}

/// Raw closed form; no applicability check.
pub fn specialised_numerators<S: Scalar>(
    state: &MomentState<S>,
    t: S,
    g: S,
) -> SpecialisedCoefficients<S> {
    let (x, p, q) = (state.xx.clone(), state.pp.clone(), state.xp.clone());
    let k = |v: i64| S::from_int(v);
    let q2 = q.clone() * q.clone();
    let q3 = q2.clone() * q.clone();
    let q4 = q2.clone() * q2.clone();
    let q5 = q4.clone() * q.clone();
    let q6 = q3.clone() * q3.clone();
    let p2 = p.clone() * p.clone();
    let t2 = t.clone() * t.clone();
    let g2 = g.clone() * g.clone();
    let x2 = x.clone() * x.clone();
    let tp = t.clone() - p.clone();

    let f = k(18)
        * (g.clone()
            * q.clone()
            * (-(k(4) * (k(9) * p2.clone() - k(1)) * x.clone() * (k(2) * t.clone() - p.clone()))
                + k(9) * p2.clone()
                - k(18) * t2.clone()
                + k(1))
            + g.clone()
                * q3.clone()
                * (k(18) * t.clone() * p.clone() - k(9) * p2.clone() - k(18) * t2.clone() + k(1))
            + tp.clone()
                * (-(k(9) * g2.clone())
                    - k(4)
                        * x.clone()
                        * ((k(1) - k(9) * g2.clone()) * p.clone()
                            + k(9) * p2.clone() * p.clone()
                            + k(18) * g2.clone() * t.clone())
                    - k(9) * p2.clone()
                    - k(1))
            + q2.clone()
                * tp.clone()
                * (-(k(9) * g2.clone()) - k(4) * p.clone() * x.clone() + k(9) * p2.clone())
            + q4.clone() * tp.clone());

    let gn = S::ratio(9, 2)
        * (-(k(9)
            * g.clone()
            * q3.clone()
            * (x.clone() * (k(8) * t.clone() - k(4) * p.clone()) + k(1)))
            - k(72)
                * g.clone()
                * x.clone()
                * q.clone()
                * tp.clone()
                * (k(4) * t.clone() * x.clone() + k(1))
            - q2.clone()
                * tp.clone()
                * (k(8) * x.clone() * (k(9) * p.clone() - k(2) * x.clone()) + k(9))
            - (k(16) * x2.clone() + k(9)) * tp.clone() * (k(4) * p.clone() * x.clone() + k(1))
            - k(9) * g.clone() * q5.clone());

    let h = k(9)
        * (k(4)
            * g.clone()
            * x.clone()
            * q2.clone()
            * (-(k(9) * p2.clone()) + k(18) * t2.clone() - k(1))
            - g.clone() * (k(16) * x2.clone() + k(9)) * tp.clone()
            + q3.clone() * (k(4) * x.clone() * (p.clone() - t.clone()) - k(9) * g2.clone())
            + q.clone()
                * tp.clone()
                * (p.clone() * (k(4) * x.clone() * (k(9) * p.clone() + k(4) * x.clone()) + k(9))
                    + k(4) * (k(1) - k(9) * g2.clone()) * x.clone())
            + k(9) * g.clone() * p.clone() * q4.clone());

    let delta = g.clone()
        * (k(18)
            * g.clone()
            * q3.clone()
            * (x.clone() * (-(k(72) * t.clone() * p.clone()) + k(72) * t2.clone() - k(4))
                + k(9) * t.clone())
            - k(18)
                * g.clone()
                * q.clone()
                * (p.clone()
                    * (k(4)
                        * x.clone()
                        * (-(k(9) * p.clone() * (k(4) * t.clone() * x.clone() + k(1)))
                            + (k(72) * t2.clone() - k(4)) * x.clone()
                            + k(18) * t.clone())
                        - k(9))
                    + k(9) * t.clone()
                    - k(4) * x.clone())
            - k(9)
                * q4.clone()
                * (k(9) * (g2.clone() + p2.clone())
                    + k(4) * x.clone() * (k(2) * t.clone() - k(3) * p.clone()))
            + q2.clone()
                * (k(9) * (k(9) * g2.clone() + k(2))
                    + k(4)
                        * x.clone()
                        * (k(9)
                            * p.clone()
                            * (k(9) * g2.clone()
                                + k(4) * x.clone() * (k(4) * t.clone() - k(3) * p.clone())
                                + k(9) * p.clone() * (p.clone() - k(2) * t.clone())
                                + k(1))
                            + k(18) * t.clone()
                            - k(4) * x.clone()))
            - (k(16) * x2 + k(9))
                * (k(18) * t.clone() * p.clone() - k(9) * p2 - k(1))
                * (k(4) * p * x + k(1))
            + k(162) * g * t * q5
            - k(9) * q6);

    SpecialisedCoefficients { f, g: gn, h, delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, Rational};

    fn exact(omega: Rational) -> ModelParams<Rational> {
        ModelParams::new(rat(1, 1), omega, rat(1, 8), rat(4, 1)).unwrap()
    }

    #[test]
    fn equilibrium_coefficients_closed_form_values() {
        let p = exact(rat(4, 3));
        let [_, _, cxx, cpp, cxp] = equilibrium_coefficients(&p).unwrap();
        // a² = 16, a⁴b = 128, 4c = 32/9
        assert_eq!(cpp, rat(4, 1) / (rat(128, 1) - rat(32, 9)));
        assert!(cxx > rat(0, 1) && cxp > rat(0, 1));
        let [_, _, rxx, rpp, rxp] = reference_equilibrium_coefficients(&p).unwrap();
        assert_eq!(rpp, cpp);
        assert_eq!(rxp, rat(0, 1));
        assert!(rxx < cxx);
    }

    #[test]
    fn degenerate_denominator_reported() {
        // a⁴b = 4c with m = 1: 8T² = 2ω²
        let p = ModelParams::new(1.0, 2.0, 0.1, 1.0).unwrap();
        assert!(matches!(
            equilibrium_coefficients(&p),
            Err(ClosedFormError::Degenerate { .. })
        ));
    }

    #[test]
    fn specialisation_guard() {
        let s = MomentState::new(rat(1, 1), rat(1, 1), rat(1, 1)).unwrap();
        assert!(specialised_coefficients(&exact(rat(2, 3)), &s, Theta::Gamma).is_ok());
        assert!(matches!(
            specialised_coefficients(&exact(rat(4, 3)), &s, Theta::Gamma),
            Err(ClosedFormError::NotApplicable(_))
        ));
        assert!(specialised_coefficients(&exact(rat(2, 3)), &s, Theta::Temperature).is_err());
    }
}

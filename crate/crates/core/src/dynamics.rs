//! Second-moment (Ehrenfest) dynamics of the Caldeira–Leggett master equation
//!
//! `∂t ρ = −i[H, ρ] − iγ[x, {p, ρ}] − 2γmT[x, [x, ρ]]` with
//! `H = p²/2m + mω²x²/2` closes on the three second moments:
//!
//! ```text
//! d⟨x²⟩/dt    = ⟨{x,p}⟩/m
//! d⟨{x,p}⟩/dt = (2/m)⟨p²⟩ − 2mω²⟨x²⟩ − 2γ⟨{x,p}⟩
//! d⟨p²⟩/dt    = −mω²⟨{x,p}⟩ − 4γ⟨p²⟩ + 4mγT
//! ```

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian_moments::{MomentError, MomentState};
use crate::rk4;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("model parameter `{name}` must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("invalid integration request: {0}")]
    InvalidRequest(String),
    #[error("state left the physical region at t = {t}: {source}")]
    Unphysical { t: f64, source: MomentError },
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// Mass, trap frequency, relaxation rate and bath temperature (ħ = k_B = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S = f64> {
    pub m: S,
    pub omega: S,
    pub gamma: S,
    #[serde(rename = "T")]
    pub temperature: S,
}

/// Markovian-regime caveat; reported, never fatal.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkovWarning {
    /// `γ ≥ 2πT`
    StrongDamping { ratio: f64 },
    /// `ω ≥ 2πT`
    FastOscillator { ratio: f64 },
}

impl std::fmt::Display for MarkovWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarkovWarning::StrongDamping { ratio } => {
                write!(
                    f,
                    "gamma/(2 pi T) = {ratio:.4} >= 1: Markovian high-temperature form is doubtful"
                )
            }
            MarkovWarning::FastOscillator { ratio } => {
                write!(
                    f,
                    "omega/(2 pi T) = {ratio:.4} >= 1: Markovian high-temperature form is doubtful"
                )
            }
        }
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn new(m: S, omega: S, gamma: S, temperature: S) -> Result<Self, DynamicsError> {
        let params = Self {
            m,
            omega,
            gamma,
            temperature,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("m", &self.m),
            ("omega", &self.omega),
            ("gamma", &self.gamma),
            ("T", &self.temperature),
        ] {
            if !(*value > S::zero()) {
                return Err(DynamicsError::NonPositiveParameter {
                    name,
                    value: value.to_f64(),
                });
            }
        }
        Ok(())
    }

    /// `b = 1/(2m)`
    pub fn b(&self) -> S {
        S::one() / (S::from_int(2) * self.m.clone())
    }

    /// `c = mω²/2`
    pub fn c(&self) -> S {
        self.m.clone() * self.omega.clone() * self.omega.clone() / S::from_int(2)
    }

    /// `a² = 4mT`
    pub fn a_squared(&self) -> S {
        S::from_int(4) * self.m.clone() * self.temperature.clone()
    }

    pub fn with_temperature(&self, temperature: S) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }

    pub fn with_gamma(&self, gamma: S) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams {
            m: self.m.to_f64(),
            omega: self.omega.to_f64(),
            gamma: self.gamma.to_f64(),
            temperature: self.temperature.to_f64(),
        }
    }
}

impl ModelParams<f64> {
    /// `a = √(4mT)`
    pub fn a(&self) -> f64 {
        self.a_squared().sqrt()
    }

    pub fn markov_warnings(&self) -> Vec<MarkovWarning> {
        let scale = 2.0 * std::f64::consts::PI * self.temperature;
        let mut out = Vec::new();
        if self.gamma >= scale {
            out.push(MarkovWarning::StrongDamping {
                ratio: self.gamma / scale,
            });
        }
        if self.omega >= scale {
            out.push(MarkovWarning::FastOscillator {
                ratio: self.omega / scale,
            });
        }
        out
    }

    /// Largest accepted step: `0.01 / max(ω, 4γ)`.
    pub fn max_step(&self) -> f64 {
        0.01 / self.omega.max(4.0 * self.gamma)
    }
}

/// Stationary moments: `⟨x²⟩ = a²b/4c = T/(mω²)`, `⟨p²⟩ = a²/4 = mT`, `⟨{x,p}⟩ = 0`.
pub fn steady_state<S: Scalar>(params: &ModelParams<S>) -> MomentState<S> {
    let a2 = params.a_squared();
    MomentState::new_unchecked(
        a2.clone() * params.b() / (S::from_int(4) * params.c()),
        a2 / S::from_int(4),
        S::zero(),
    )
}

/// Time derivative of `(xx, pp, xp)`.
pub fn moment_rhs<S: Scalar>(state: &MomentState<S>, params: &ModelParams<S>) -> MomentState<S> {
    let m = params.m.clone();
    let w2 = params.omega.clone() * params.omega.clone();
    let g = params.gamma.clone();
    let two = S::from_int(2);
    let four = S::from_int(4);
    let xx_dot = state.xp.clone() / m.clone();
    let xp_dot = two.clone() / m.clone() * state.pp.clone()
        - two.clone() * m.clone() * w2.clone() * state.xx.clone()
        - two * g.clone() * state.xp.clone();
    let pp_dot = -(m.clone() * w2 * state.xp.clone()) - four.clone() * g.clone() * state.pp.clone()
        + four * m * g * params.temperature.clone();
    MomentState::new_unchecked(xx_dot, pp_dot, xp_dot)
}

/// Constant-coefficient form `d(xx, pp, xp)/dt = A·(xx, pp, xp) + f`.
pub fn drift_system(params: &ModelParams) -> (Matrix3<f64>, Vector3<f64>) {
    let m = params.m;
    let w2 = params.omega * params.omega;
    let g = params.gamma;
    let a = Matrix3::new(
        0.0,
        0.0,
        1.0 / m,
        0.0,
        -4.0 * g,
        -m * w2,
        -2.0 * m * w2,
        2.0 / m,
        -2.0 * g,
    );
    let f = Vector3::new(0.0, 4.0 * m * g * params.temperature, 0.0);
    (a, f)
}

fn as_vector(s: &MomentState) -> Vector3<f64> {
    Vector3::new(s.xx, s.pp, s.xp)
}

fn from_vector(v: &Vector3<f64>) -> MomentState {
    MomentState::new_unchecked(v[0], v[1], v[2])
}

/// Uniformly sampled moment trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub samples: Vec<(f64, MomentState)>,
}

impl TimeSeries {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    pub fn states(&self) -> impl Iterator<Item = &MomentState> + '_ {
        self.samples.iter().map(|(_, s)| s)
    }

    pub fn last(&self) -> &MomentState {
        &self.samples.last().expect("time series is never empty").1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Every `stride`-th sample, always keeping the final one.
    pub fn thinned(&self, stride: usize) -> Vec<(f64, MomentState)> {
        let stride = stride.max(1);
        let last = self.samples.len() - 1;
        self.samples
            .iter()
            .enumerate()
            .filter(|(k, _)| k % stride == 0 || *k == last)
            .map(|(_, s)| s.clone())
            .collect()
    }
}

/// Fixed-step RK4 from `t = 0` to `t_end`, keeping every step.
///
/// Steps longer than [`ModelParams::max_step`] are rejected; every sample is
/// checked against the uncertainty bound.
pub fn integrate(
    init: &MomentState,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
) -> Result<TimeSeries, DynamicsError> {
    params.validate()?;
    init.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidRequest(format!(
            "need dt > 0 and finite t_end >= 0 (dt = {dt}, t_end = {t_end})"
        )));
    }
    let limit = params.max_step();
    if dt > limit * (1.0 + 1e-12) {
        return Err(DynamicsError::StepTooLarge { dt, limit });
    }
    integrate_unchecked(init, params, t_end, dt)
}

/// [`integrate`] without the step-size guard; for convergence studies.
pub fn integrate_unchecked(
    init: &MomentState,
    params: &ModelParams,
    t_end: f64,
    dt: f64,
) -> Result<TimeSeries, DynamicsError> {
    let (n, h) = rk4::uniform_grid(t_end, dt);
    let (a, f) = drift_system(params);
    let mut samples = Vec::with_capacity(n + 1);
    let mut y = as_vector(init);
    samples.push((0.0, init.clone()));
    for k in 0..n {
        y = rk4::step(&y, k as f64 * h, h, |_, v| a * v + f);
        let t = (k + 1) as f64 * h;
        let state = from_vector(&y);
        state
            .validate()
            .map_err(|source| DynamicsError::Unphysical { t, source })?;
        samples.push((t, state));
    }
    Ok(TimeSeries {
        dt: if n == 0 { dt } else { h },
        samples,
    })
}

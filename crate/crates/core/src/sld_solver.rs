//! Solving `M·c = D` and turning the coefficients into a Fisher information.

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::gaussian_moments::{CovarianceTemplate, MomentError, MomentState};
use crate::operator_algebra::OperatorPoly;
use crate::parallel::{try_par_map, Execution};
use crate::scalar::{crat, rational_from_f64, Rational};
use crate::sld_builder::{BuildError, Layout, OperatorBasis, SldAssembler, SldSystem, Theta};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("{block} block is singular")]
    Singular { block: String },
    #[error("{block} block condition number {condition:.3e} exceeds {cap:.1e}")]
    IllConditioned {
        block: String,
        condition: f64,
        cap: f64,
    },
    #[error("{block} block residual {residual:.3e} exceeds {tol:.1e}")]
    Residual {
        block: String,
        residual: f64,
        tol: f64,
    },
    #[error("non-finite entry in the system")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QfiError {
    #[error("Fisher information {value:.6e} is negative beyond rounding")]
    Negative { value: f64 },
    #[error("Fisher information is not finite")]
    NonFinite,
    #[error(transparent)]
    Moment(#[from] MomentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub condition_cap: f64,
    pub residual_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            condition_cap: 1e12,
            residual_tol: 1e-8,
        }
    }
}

/// Solution of one system, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SldCoefficients {
    pub theta: Theta,
    pub values: Vec<f64>,
    /// Worst relative residual over blocks.
    pub residual: f64,
    /// Worst 2-norm condition number over blocks.
    pub condition: f64,
}

/// One Fisher-information sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiValue {
    pub theta: Theta,
    pub time: f64,
    pub value: f64,
}

fn block_name(block: &[usize], labels: &[String]) -> String {
    let names: Vec<&str> = block.iter().map(|&k| labels[k].as_str()).collect();
    format!("[{}]", names.join(", "))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Solves block by block. `blocks` partitions the indices (see
/// [`OperatorBasis::parity_blocks`]); `labels` name them in errors.
pub fn solve_blocks(
    system: &SldSystem,
    blocks: &[Vec<usize>],
    labels: &[String],
    config: &SolverConfig,
) -> Result<SldCoefficients, SolveError> {
    if system
        .matrix
        .iter()
        .chain(system.rhs.iter())
        .any(|v| !v.is_finite())
    {
        return Err(SolveError::NonFinite);
    }
    let mut values = vec![0.0; system.dim()];
    let mut worst_residual = 0.0f64;
    let mut worst_condition = 1.0f64;
    for block in blocks {
        let name = block_name(block, labels);
        let k = block.len();
        let m = DMatrix::from_fn(k, k, |r, c| system.matrix[(block[r], block[c])]);
        let d = DVector::from_fn(k, |r, _| system.rhs[block[r]]);

        let sv = m.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if smin == 0.0 || smax == 0.0 {
            return Err(SolveError::Singular { block: name });
        }
        let condition = smax / smin;
        if condition > config.condition_cap || !condition.is_finite() {
            return Err(SolveError::IllConditioned {
                block: name,
                condition,
                cap: config.condition_cap,
            });
        }
        let c = m
            .clone()
            .lu()
            .solve(&d)
            .ok_or_else(|| SolveError::Singular {
                block: name.clone(),
            })?;
        let scale = m.abs().row_sum().max() * inf_norm(&c) + inf_norm(&d);
        let residual = if scale == 0.0 {
            0.0
        } else {
            inf_norm(&(&m * &c - &d)) / scale
        };
        if residual > config.residual_tol || !residual.is_finite() {
            return Err(SolveError::Residual {
                block: name,
                residual,
                tol: config.residual_tol,
            });
        }
        for (r, &idx) in block.iter().enumerate() {
            values[idx] = c[r];
        }
        worst_residual = worst_residual.max(residual);
        worst_condition = worst_condition.max(condition);
    }
    Ok(SldCoefficients {
        theta: system.theta,
        values,
        residual: worst_residual,
        condition: worst_condition,
    })
}

/// Solves with the basis' parity blocks and default thresholds.
pub fn solve(system: &SldSystem, basis: &OperatorBasis) -> Result<SldCoefficients, SolveError> {
    solve_blocks(
        system,
        &basis.parity_blocks(),
        basis.labels(),
        &SolverConfig::default(),
    )
}

/// Exact Gauss–Jordan elimination over the rationals.
pub fn solve_exact(system: &SldSystem<Rational>) -> Result<Vec<Rational>, SolveError> {
    let n = system.dim();
    let mut a: Vec<Vec<Rational>> = (0..n)
        .map(|r| {
            let mut row: Vec<Rational> = (0..n).map(|c| system.matrix[(r, c)].clone()).collect();
            row.push(system.rhs[r].clone());
            row
        })
        .collect();
    for col in 0..n {
        let pivot =
            (col..n)
                .find(|&r| !a[r][col].is_zero())
                .ok_or_else(|| SolveError::Singular {
                    block: format!("column {col}"),
                })?;
        a.swap(col, pivot);
        let inv = Rational::one() / a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = v.clone() * inv.clone();
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x = x.clone() - f.clone() * p.clone();
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n].clone()).collect())
}

/// `F = cᵀ Cov c`, the variance of `Λ = Σ c_i A_i`.
///
/// Rounding can leave a tiny negative value; anything above `−1e-10`
/// (relative to the summed magnitudes) is clamped to zero.
pub fn qfi_from_covariance(coeffs: &[f64], covariance: &[Vec<f64>]) -> Result<f64, QfiError> {
    let mut value = 0.0;
    let mut scale = 0.0;
    for (i, ci) in coeffs.iter().enumerate() {
        for (j, cj) in coeffs.iter().enumerate() {
            let term = ci * cj * covariance[i][j];
            value += term;
            scale += term.abs();
        }
    }
    if !value.is_finite() {
        return Err(QfiError::NonFinite);
    }
    if value < 0.0 {
        if value < -1e-10 * scale.max(1.0) {
            return Err(QfiError::Negative { value });
        }
        value = 0.0;
    }
    Ok(value)
}

/// QFI of `coeffs` in `state`.
pub fn qfi(
    coeffs: &SldCoefficients,
    basis: &OperatorBasis,
    state: &MomentState,
) -> Result<f64, QfiError> {
    let cov = CovarianceTemplate::new(basis.elements())?.evaluate(state);
    qfi_from_covariance(&coeffs.values, &cov)
}

/// `Λ = Σ c_i A_i` as an operator polynomial (coefficients converted exactly).
pub fn sld_as_operator(values: &[f64], basis: &OperatorBasis) -> OperatorPoly {
    basis
        .elements()
        .iter()
        .zip(values)
        .fold(OperatorPoly::zero(), |acc, (op, &c)| {
            let r = rational_from_f64(c).unwrap_or_else(Rational::zero);
            acc.add(&op.scale(&crat(r, Rational::zero())))
        })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("assembly failed at t = {t}: {source}")]
    Build { t: f64, source: BuildError },
    #[error("solve for θ = {theta} failed at t = {t}: {source}")]
    Solve {
        t: f64,
        theta: Theta,
        source: SolveError,
    },
    #[error("QFI for θ = {theta} failed at t = {t}: {source}")]
    Qfi {
        t: f64,
        theta: Theta,
        source: QfiError,
    },
}

/// SLD coefficients and QFI for both parameters at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub t: f64,
    pub state: MomentState,
    pub temperature: SldCoefficients,
    pub gamma: SldCoefficients,
    pub qfi_temperature: f64,
    pub qfi_gamma: f64,
}

impl SampleResult {
    pub fn coefficients(&self, theta: Theta) -> &SldCoefficients {
        match theta {
            Theta::Temperature => &self.temperature,
            Theta::Gamma => &self.gamma,
        }
    }

    pub fn qfi(&self, theta: Theta) -> QfiValue {
        let value = match theta {
            Theta::Temperature => self.qfi_temperature,
            Theta::Gamma => self.qfi_gamma,
        };
        QfiValue {
            theta,
            time: self.t,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaResult {
    pub coefficients: SldCoefficients,
    pub qfi: f64,
}

/// Per-sample evaluation with all operator algebra done up front.
#[derive(Debug, Clone)]
pub struct Pipeline {
    assembler: SldAssembler,
    covariance: CovarianceTemplate,
    blocks: Vec<Vec<usize>>,
    config: SolverConfig,
    layout: Layout,
}

impl Pipeline {
    pub fn new(
        params: &ModelParams,
        layout: Layout,
        config: SolverConfig,
    ) -> Result<Self, BuildError> {
        Self::with_basis(&OperatorBasis::standard(), params, layout, config)
    }

    pub fn with_basis(
        basis: &OperatorBasis,
        params: &ModelParams,
        layout: Layout,
        config: SolverConfig,
    ) -> Result<Self, BuildError> {
        Ok(Self {
            assembler: SldAssembler::new(basis, params)?,
            covariance: CovarianceTemplate::new(basis.elements())?,
            blocks: basis.parity_blocks(),
            config,
            layout,
        })
    }

    pub fn basis(&self) -> &OperatorBasis {
        self.assembler.basis()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn system(&self, state: &MomentState, theta: Theta) -> Result<SldSystem, BuildError> {
        self.assembler.assemble(state, theta, self.layout)
    }

    pub fn coefficients(
        &self,
        state: &MomentState,
        theta: Theta,
    ) -> Result<SldCoefficients, PipelineError> {
        let system = self
            .system(state, theta)
            .map_err(|source| PipelineError::Build {
                t: f64::NAN,
                source,
            })?;
        solve_blocks(&system, &self.blocks, self.basis().labels(), &self.config).map_err(|source| {
            PipelineError::Solve {
                t: f64::NAN,
                theta,
                source,
            }
        })
    }

    /// Coefficients and QFI for each of `thetas`, sharing one matrix.
    pub fn evaluate_thetas(
        &self,
        t: f64,
        state: &MomentState,
        thetas: &[Theta],
    ) -> Result<Vec<ThetaResult>, PipelineError> {
        let matrix = self
            .assembler
            .matrix(state, self.layout)
            .map_err(|source| PipelineError::Build { t, source })?;
        let cov = self.covariance.evaluate(state);
        let labels = self.basis().labels();
        thetas
            .iter()
            .map(|&theta| {
                let rhs = self
                    .assembler
                    .rhs(state, theta)
                    .map_err(|source| PipelineError::Build { t, source })?;
                let system = SldSystem {
                    matrix: matrix.clone(),
                    rhs,
                    theta,
                    layout: self.layout,
                    state: state.clone(),
                    params: self.assembler.params().clone(),
                };
                let coefficients = solve_blocks(&system, &self.blocks, labels, &self.config)
                    .map_err(|source| PipelineError::Solve { t, theta, source })?;
                let qfi = qfi_from_covariance(&coefficients.values, &cov)
                    .map_err(|source| PipelineError::Qfi { t, theta, source })?;
                Ok(ThetaResult { coefficients, qfi })
            })
            .collect()
    }

    pub fn evaluate(&self, t: f64, state: &MomentState) -> Result<SampleResult, PipelineError> {
        let mut both = self.evaluate_thetas(t, state, &Theta::ALL)?.into_iter();
        let (temperature, gamma) = (both.next().unwrap(), both.next().unwrap());
        Ok(SampleResult {
            t,
            state: state.clone(),
            qfi_temperature: temperature.qfi,
            qfi_gamma: gamma.qfi,
            temperature: temperature.coefficients,
            gamma: gamma.coefficients,
        })
    }

    /// [`Pipeline::evaluate_thetas`] over a series, in input order.
    pub fn evaluate_series_for(
        &self,
        samples: &[(f64, MomentState)],
        thetas: &[Theta],
        mode: Execution,
    ) -> Result<Vec<Vec<ThetaResult>>, PipelineError> {
        try_par_map(samples, mode, |(t, s)| self.evaluate_thetas(*t, s, thetas))
    }

    /// Evaluates every sample; output order matches input order.
    pub fn evaluate_series(
        &self,
        samples: &[(f64, MomentState)],
        mode: Execution,
    ) -> Result<Vec<SampleResult>, PipelineError> {
        try_par_map(samples, mode, |(t, s)| self.evaluate(*t, s))
    }
}

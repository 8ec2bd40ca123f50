//! Brute-force reference: the master equation on a truncated Fock space.
//!
//! Nothing here uses the moment formalism. The density matrix is integrated
//! directly, `∂θρ` comes from central differences of two evolutions, the
//! SLD from the Lyapunov equation in `ρ`'s eigenbasis, and the result is
//! projected back onto the operator basis for comparison.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::gaussian_moments::{MomentError, MomentState};
use crate::parallel::{try_par_map, Execution};
use crate::rk4;
use crate::sld_builder::Theta;

type C = Complex64;
type CMatrix = DMatrix<C>;

const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("Fock dimension {dim} too small: {detail}")]
    InsufficientDim { dim: usize, detail: String },
    #[error("invariant breach at t = {t}: {what} = {magnitude:.3e}")]
    InvariantBreach {
        t: f64,
        what: &'static str,
        magnitude: f64,
    },
    #[error("∂θρ carries {weight:.3e} of its weight in the kernel of ρ (cap {cap})")]
    KernelWeight { weight: f64, cap: f64 },
    #[error("∂θρ is not traceless: {trace:.3e}")]
    NotTraceless { trace: f64 },
    #[error("ρ-weighted Gram matrix is ill-conditioned ({condition:.3e})")]
    IllConditionedGram { condition: f64 },
    #[error("invalid oracle request: {0}")]
    InvalidRequest(String),
}

/// Tunables. Defaults suit the high-temperature, weak-damping regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub dim: usize,
    /// Integrator step; `None` picks one from the generator norm.
    pub dt: Option<f64>,
    /// Finite-difference step relative to `θ`.
    pub dtheta_rel: f64,
    /// Pairs with `λ_m + λ_n` below this times `max λ` count as kernel.
    pub kernel_eps_rel: f64,
    pub kernel_weight_cap: f64,
    /// Abort once an eigenvalue of `ρ` drops below this.
    pub negative_eigenvalue_abort: f64,
    /// Cap on the population of the last Fock level.
    pub tail_cap: f64,
    pub hermiticity_tol: f64,
    pub trace_tol: f64,
    /// Full spectrum check every this many steps (and at every sample).
    pub spectrum_every: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            dt: None,
            dtheta_rel: 1e-3,
            kernel_eps_rel: 1e-10,
            kernel_weight_cap: 0.01,
            negative_eigenvalue_abort: -1e-6,
            tail_cap: 1e-8,
            hermiticity_tol: 1e-12,
            trace_tol: 1e-10,
            spectrum_every: 500,
        }
    }
}

/// Zero-diagonal tridiagonal matrix; `lower[k] = T[k+1][k]`, `upper[k] = T[k][k+1]`.
#[derive(Debug, Clone)]
struct Tridiagonal {
    lower: Vec<C>,
    upper: Vec<C>,
}

impl Tridiagonal {
    fn dim(&self) -> usize {
        self.lower.len() + 1
    }

    /// `T·r`
    fn left(&self, r: &CMatrix) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for (src, dst) in r
            .as_slice()
            .chunks_exact(n)
            .zip(out.as_mut_slice().chunks_exact_mut(n))
        {
            for i in 0..n - 1 {
                dst[i] += self.upper[i] * src[i + 1];
                dst[i + 1] += self.lower[i] * src[i];
            }
        }
        out
    }

    /// `r·T`
    fn right(&self, r: &CMatrix) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        let src = r.as_slice();
        let dst = out.as_mut_slice();
        for j in 0..n - 1 {
            // column j+1 gets T[j][j+1]·col j; column j gets T[j+1][j]·col j+1
            let (up, lo) = (self.upper[j], self.lower[j]);
            for i in 0..n {
                dst[(j + 1) * n + i] += src[j * n + i] * up;
                dst[j * n + i] += src[(j + 1) * n + i] * lo;
            }
        }
        out
    }

    fn dense(&self) -> CMatrix {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for k in 0..n - 1 {
            m[(k + 1, k)] = self.lower[k];
            m[(k, k + 1)] = self.upper[k];
        }
        m
    }
}

/// `x`, `p`, the quadratic basis operators and `H` at dimension `N`, with
/// oscillator length `ℓ = 1/√(mω)`.
#[derive(Debug, Clone)]
pub struct FockOperators {
    dim: usize,
    x_tri: Tridiagonal,
    p_tri: Tridiagonal,
    energies: Vec<f64>,
    pub x: CMatrix,
    pub p: CMatrix,
    pub xx: CMatrix,
    pub pp: CMatrix,
    pub xp: CMatrix,
}

impl FockOperators {
    pub fn new(dim: usize, m: f64, omega: f64) -> Self {
        assert!(dim >= 2, "Fock dimension must be at least 2");
        let ell = 1.0 / (m * omega).sqrt();
        let root = |k: usize| ((k + 1) as f64).sqrt();
        let x_off: Vec<C> = (0..dim - 1)
            .map(|k| C::new(ell / 2f64.sqrt() * root(k), 0.0))
            .collect();
        let p_scale = 1.0 / (2f64.sqrt() * ell);
        let x_tri = Tridiagonal {
            lower: x_off.clone(),
            upper: x_off,
        };
        let p_tri = Tridiagonal {
            lower: (0..dim - 1).map(|k| I * p_scale * root(k)).collect(),
            upper: (0..dim - 1).map(|k| -I * p_scale * root(k)).collect(),
        };
        let x = x_tri.dense();
        let p = p_tri.dense();
        // quadratic operators as exact projections: multiply one level up, crop
        let (xx, pp, xp) = if dim >= 3 {
            let big = Self::new_linear(dim + 1, ell);
            let crop = |m: CMatrix| m.view((0, 0), (dim, dim)).into_owned();
            (
                crop(&big.0 * &big.0),
                crop(&big.1 * &big.1),
                crop(&big.0 * &big.1 + &big.1 * &big.0),
            )
        } else {
            (&x * &x, &p * &p, &x * &p + &p * &x)
        };
        Self {
            dim,
            energies: (0..dim).map(|n| omega * (n as f64 + 0.5)).collect(),
            x_tri,
            p_tri,
            x,
            p,
            xx,
            pp,
            xp,
        }
    }

    fn new_linear(dim: usize, ell: f64) -> (CMatrix, CMatrix) {
        let mut x = CMatrix::zeros(dim, dim);
        let mut p = CMatrix::zeros(dim, dim);
        for k in 0..dim - 1 {
            let r = ((k + 1) as f64).sqrt();
            x[(k, k + 1)] = C::new(ell / 2f64.sqrt() * r, 0.0);
            x[(k + 1, k)] = x[(k, k + 1)];
            p[(k + 1, k)] = I * r / (2f64.sqrt() * ell);
            p[(k, k + 1)] = -p[(k + 1, k)];
        }
        (x, p)
    }

    pub fn for_params(dim: usize, params: &ModelParams) -> Self {
        Self::new(dim, params.m, params.omega)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal `H = ω(n + ½)`.
    pub fn hamiltonian(&self) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(
            self.dim,
            self.energies.iter().map(|&e| C::new(e, 0.0)),
        ))
    }

    /// Basis `[x, p, x², p², {x,p}]` as dense matrices.
    pub fn basis(&self) -> [&CMatrix; 5] {
        [&self.x, &self.p, &self.xx, &self.pp, &self.xp]
    }

    /// `max |([x,p] − i)_{jk}|` over the block without the last two levels.
    pub fn interior_ccr_error(&self) -> f64 {
        let comm = &self.x * &self.p - &self.p * &self.x;
        let inner = self.dim.saturating_sub(2);
        let mut worst = 0.0f64;
        for j in 0..inner {
            for k in 0..inner {
                let target = if j == k { I } else { C::new(0.0, 0.0) };
                worst = worst.max((comm[(j, k)] - target).norm());
            }
        }
        worst
    }

    /// Crude spectral-radius bound of the master-equation generator.
    pub fn generator_norm(&self, params: &ModelParams) -> f64 {
        let n = self.dim as f64;
        let ell2 = 1.0 / (params.m * params.omega);
        let x_max = (2.0 * n * ell2).sqrt();
        let p_max = (2.0 * n / ell2).sqrt();
        params.omega * n
            + 2.0 * params.gamma * params.m * params.temperature * (2.0 * x_max).powi(2)
            + 4.0 * params.gamma * x_max * p_max
    }

    /// Step that keeps RK4 inside its stability region.
    pub fn stable_step(&self, params: &ModelParams) -> f64 {
        2.0 / self.generator_norm(params)
    }
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> C {
    // Tr[a·b] without forming the product
    let n = a.nrows();
    let mut acc = C::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn anti_hermitian_norm(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Truncated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        anti_hermitian_norm(&self.matrix)
    }

    /// Population of the highest retained level.
    pub fn tail_population(&self) -> f64 {
        let n = self.dim();
        self.matrix[(n - 1, n - 1)].re
    }

    /// `Tr[ρ·op]`
    pub fn expect(&self, op: &CMatrix) -> C {
        trace_product(&self.matrix, op)
    }

    /// `(Tr[ρx²], Tr[ρp²], Tr[ρ{x,p}])`
    pub fn moments(&self, ops: &FockOperators) -> MomentState {
        MomentState::new_unchecked(
            self.expect(&ops.xx).re,
            self.expect(&ops.pp).re,
            self.expect(&ops.xp).re,
        )
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn check(&self, t: f64, config: &OracleConfig) -> Result<(), OracleError> {
        let herm = self.hermiticity_error();
        if !(herm <= config.hermiticity_tol) {
            return Err(OracleError::InvariantBreach {
                t,
                what: "anti-Hermitian part",
                magnitude: herm,
            });
        }
        let drift = (self.trace() - C::new(1.0, 0.0)).norm();
        if !(drift <= config.trace_tol) {
            return Err(OracleError::InvariantBreach {
                t,
                what: "trace drift",
                magnitude: drift,
            });
        }
        let tail = self.tail_population();
        if tail > config.tail_cap {
            return Err(OracleError::InvariantBreach {
                t,
                what: "tail population",
                magnitude: tail,
            });
        }
        Ok(())
    }

    fn check_spectrum(&self, t: f64, config: &OracleConfig) -> Result<f64, OracleError> {
        let lowest = self.spectrum().first().copied().unwrap_or(0.0);
        if lowest < config.negative_eigenvalue_abort {
            return Err(OracleError::InvariantBreach {
                t,
                what: "negative eigenvalue",
                magnitude: lowest,
            });
        }
        Ok(lowest)
    }
}

/// Zero-mean Gaussian state with the given second moments.
///
/// Built as `ρ ∝ exp(−½ rᵀ G r)` with `G = 2ν·artanh(1/2ν)·V⁻¹`, which is the
/// thermal state of symplectic eigenvalue `ν` carried to covariance `V` by
/// the Williamson transform. The exponent is diagonalised on an enlarged
/// space and then truncated; weight lost to truncation beyond `tail_cap`
/// is an error. For `ν = ½` the ground state of `½ rᵀ V⁻¹ r` is used.
pub fn gaussian_state(
    state: &MomentState,
    params: &ModelParams,
    dim: usize,
    tail_cap: f64,
) -> Result<DensityMatrix, OracleError> {
    state.validate()?;
    let work = dim + (dim / 2).max(40);
    let ops = FockOperators::new(work, params.m, params.omega);
    let det = state.covariance_det();
    let nu = det.sqrt();
    let (inv_xx, inv_pp, inv_xp) = (state.pp / det, state.xx / det, -state.xp / 2.0 / det);
    let pure = nu - 0.5 < 1e-9;
    let k = if pure {
        1.0
    } else {
        2.0 * nu * (1.0 / (2.0 * nu)).atanh()
    };
    let q: CMatrix = (&ops.xx * C::new(inv_xx, 0.0)
        + &ops.pp * C::new(inv_pp, 0.0)
        + &ops.xp * C::new(inv_xp, 0.0))
        * C::new(0.5 * k, 0.0);
    let q = (&q + q.adjoint()) * C::new(0.5, 0.0);
    let eig = q.symmetric_eigen();
    let order = {
        let mut idx: Vec<usize> = (0..work).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        idx
    };
    let q_min = eig.eigenvalues[order[0]];
    let mut rho = CMatrix::zeros(work, work);
    for &j in &order {
        let w = if pure {
            if j == order[0] {
                1.0
            } else {
                0.0
            }
        } else {
            (-(eig.eigenvalues[j] - q_min)).exp()
        };
        if w < 1e-300 {
            continue;
        }
        let v = eig.eigenvectors.column(j);
        rho += (v * v.adjoint()) * C::new(w, 0.0);
    }
    let total = rho.trace().re;
    let block = rho.view((0, 0), (dim, dim)).into_owned() / C::new(total, 0.0);
    let kept = block.trace().re;
    if 1.0 - kept > tail_cap.max(1e-12) {
        return Err(OracleError::InsufficientDim {
            dim,
            detail: format!("{:.3e} of the state lies above the cutoff", 1.0 - kept),
        });
    }
    let block = block / C::new(kept, 0.0);
    let block = (&block + block.adjoint()) * C::new(0.5, 0.0);
    Ok(DensityMatrix { matrix: block })
}

/// `dρ/dt = −i[H,ρ] − iγ[x,{p,ρ}] − 2γmT[x,[x,ρ]]`
pub fn cl_rhs(rho: &CMatrix, ops: &FockOperators, params: &ModelParams) -> CMatrix {
    let n = ops.dim;
    let x = &ops.x_tri;
    let comm_x = x.left(rho) - x.right(rho);
    let anti_p = ops.p_tri.left(rho) + ops.p_tri.right(rho);
    let friction = x.left(&anti_p) - x.right(&anti_p);
    let diffusion = x.left(&comm_x) - x.right(&comm_x);
    let g = params.gamma;
    let d = 2.0 * params.gamma * params.m * params.temperature;
    CMatrix::from_fn(n, n, |i, j| {
        -I * (ops.energies[i] - ops.energies[j]) * rho[(i, j)]
            - I * g * friction[(i, j)]
            - d * diffusion[(i, j)]
    })
}

/// Diagnostics gathered while evolving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionMonitor {
    pub steps: usize,
    pub dt: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub max_tail_population: f64,
    pub min_eigenvalue: f64,
}

impl EvolutionMonitor {
    fn new() -> Self {
        Self {
            steps: 0,
            dt: 0.0,
            max_trace_drift: 0.0,
            max_tail_population: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    fn record(&mut self, rho: &DensityMatrix) {
        self.max_trace_drift = self
            .max_trace_drift
            .max((rho.trace() - C::new(1.0, 0.0)).norm());
        self.max_hermiticity_error = self.max_hermiticity_error.max(rho.hermiticity_error());
        self.max_tail_population = self.max_tail_population.max(rho.tail_population());
    }
}

fn step_size(
    ops: &FockOperators,
    params: &ModelParams,
    config: &OracleConfig,
) -> Result<f64, OracleError> {
    let dt = config.dt.unwrap_or_else(|| ops.stable_step(params));
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(OracleError::InvalidRequest(format!(
            "step {dt} is not positive"
        )));
    }
    Ok(dt)
}

/// Evolves `rho0` and returns `ρ` at each of the ascending `times`.
///
/// Each segment between samples is split into equal steps so samples land
/// exactly on the grid.
pub fn evolve_sampled(
    rho0: &DensityMatrix,
    ops: &FockOperators,
    params: &ModelParams,
    times: &[f64],
    config: &OracleConfig,
) -> Result<(Vec<DensityMatrix>, EvolutionMonitor), OracleError> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(OracleError::InvalidRequest(
            "sample times must be ascending and ≥ 0".into(),
        ));
    }
    let dt = step_size(ops, params, config)?;
    let mut monitor = EvolutionMonitor::new();
    monitor.dt = dt;
    let mut rho = rho0.clone();
    rho.check(0.0, config)?;
    monitor.record(&rho);
    monitor.min_eigenvalue = rho.check_spectrum(0.0, config)?;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let (n, h) = rk4::uniform_grid(target - t, dt);
        for k in 0..n {
            let tk = t + k as f64 * h;
            rho.matrix = rk4::step(&rho.matrix, tk, h, |_, r| cl_rhs(r, ops, params));
            monitor.steps += 1;
            rho.check(tk + h, config)?;
            monitor.record(&rho);
            if config.spectrum_every > 0 && monitor.steps.is_multiple_of(config.spectrum_every) {
                let low = rho.check_spectrum(tk + h, config)?;
                monitor.min_eigenvalue = monitor.min_eigenvalue.min(low);
            }
        }
        t = target;
        let low = rho.check_spectrum(t, config)?;
        monitor.min_eigenvalue = monitor.min_eigenvalue.min(low);
        out.push(rho.clone());
    }
    Ok((out, monitor))
}

/// Endpoint of [`evolve_sampled`] at `t_end`.
pub fn evolve(
    rho0: &DensityMatrix,
    ops: &FockOperators,
    params: &ModelParams,
    t_end: f64,
    config: &OracleConfig,
) -> Result<DensityMatrix, OracleError> {
    let (mut out, _) = evolve_sampled(rho0, ops, params, &[t_end], config)?;
    Ok(out.pop().expect("one sample"))
}

/// Lyapunov solution and its by-products.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub sld: CMatrix,
    /// `Σ 2|∂ρ_mn|²/(λ_m+λ_n)` over the support.
    pub qfi_direct: f64,
    /// Fraction of `‖∂ρ‖²` falling in the discarded kernel sector.
    pub kernel_weight: f64,
    pub eigenvalues: Vec<f64>,
}

/// Solves `∂ρ = ½{L, ρ}` in the eigenbasis of `ρ`.
pub fn sld_lyapunov(
    rho: &DensityMatrix,
    drho: &CMatrix,
    config: &OracleConfig,
) -> Result<LyapunovSolution, OracleError> {
    let tr = drho.trace().norm();
    if tr > 1e-8 {
        return Err(OracleError::NotTraceless { trace: tr });
    }
    let eig = rho.matrix.clone().symmetric_eigen();
    let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let v = &eig.eigenvectors;
    let d = v.adjoint() * drho * v;
    let max_l = lambda.iter().copied().fold(0.0f64, f64::max);
    let eps = config.kernel_eps_rel * max_l;
    let n = lambda.len();
    let mut l_eig = CMatrix::zeros(n, n);
    let (mut kept, mut dropped, mut qfi) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let s = lambda[i] + lambda[j];
            let w = d[(i, j)].norm_sqr();
            if s > eps {
                l_eig[(i, j)] = d[(i, j)] * (2.0 / s);
                qfi += 2.0 * w / s;
                kept += w;
            } else {
                dropped += w;
            }
        }
    }
    let total = kept + dropped;
    let kernel_weight = if total > 0.0 { dropped / total } else { 0.0 };
    if kernel_weight > config.kernel_weight_cap {
        return Err(OracleError::KernelWeight {
            weight: kernel_weight,
            cap: config.kernel_weight_cap,
        });
    }
    let sld = v * l_eig * v.adjoint();
    let sld = (&sld + sld.adjoint()) * C::new(0.5, 0.0);
    let mut eigenvalues = lambda;
    eigenvalues.sort_by(f64::total_cmp);
    Ok(LyapunovSolution {
        sld,
        qfi_direct: qfi,
        kernel_weight,
        eigenvalues,
    })
}

/// Least-squares fit of an operator onto mean-subtracted basis elements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    /// `‖L − Σ cᵢÃᵢ‖_ρ / ‖L‖_ρ`
    pub residual: f64,
    pub gram_condition: f64,
}

/// Fits `L ≈ Σ cᵢ (Aᵢ − Tr[ρAᵢ])` in `⟨X,Y⟩_ρ = Tr[ρ·½{X,Y}]`.
///
/// `L` from [`sld_lyapunov`] vanishes on eigen-pairs of `ρ` with
/// `λ_m + λ_n ≤ kernel_eps_rel·max λ`; the basis operators are restricted
/// to the same pairs so the fit compares like with like.
pub fn project_coefficients(
    l: &CMatrix,
    rho: &DensityMatrix,
    basis: &[&CMatrix],
    kernel_eps_rel: f64,
) -> Result<Projection, OracleError> {
    let n = rho.dim();
    let k = basis.len();
    let eig = rho.matrix.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let lambda = &eig.eigenvalues;
    let eps = kernel_eps_rel * lambda.max().max(0.0);
    let restrict = |a: &CMatrix| -> CMatrix {
        let mut d = v.adjoint() * a * v;
        for j in 0..n {
            for i in 0..n {
                if lambda[i] + lambda[j] <= eps {
                    d[(i, j)] = C::new(0.0, 0.0);
                }
            }
        }
        v * d * v.adjoint()
    };
    let centered: Vec<CMatrix> = basis
        .iter()
        .map(|a| {
            let mean = rho.expect(a).re;
            restrict(&(*a - CMatrix::identity(n, n) * C::new(mean, 0.0)))
        })
        .collect();
    let inner = |a: &CMatrix, b: &CMatrix| -> f64 {
        let ra = &rho.matrix * a;
        trace_product(&ra, b).re
    };
    let gram = DMatrix::from_fn(k, k, |i, j| inner(&centered[i], &centered[j]));
    let gram = (&gram + gram.transpose()) * 0.5;
    let rhs = DVector::from_fn(k, |i, _| inner(&centered[i], l));
    let sv = gram.singular_values();
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > 1e12 {
        return Err(OracleError::IllConditionedGram { condition });
    }
    let c = gram
        .clone()
        .cholesky()
        .ok_or(OracleError::IllConditionedGram { condition })?
        .solve(&rhs);
    let norm_l = inner(l, l);
    let remainder = centered
        .iter()
        .zip(c.iter())
        .fold(l.clone(), |acc, (a, ci)| acc - a * C::new(*ci, 0.0));
    let rem = inner(&remainder, &remainder).max(0.0);
    let residual = if norm_l > 0.0 {
        (rem / norm_l).sqrt()
    } else {
        0.0
    };
    Ok(Projection {
        coefficients: c.iter().copied().collect(),
        residual,
        gram_condition: condition,
    })
}

/// Oracle output for one parameter at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSample {
    pub t: f64,
    pub theta: Theta,
    pub dim: usize,
    pub coefficients: Vec<f64>,
    pub projection_residual: f64,
    pub gram_condition: f64,
    pub qfi_direct: f64,
    /// `Tr[ρL²]` of the projected operator.
    pub qfi_projected: f64,
    pub kernel_weight: f64,
    pub min_eigenvalue: f64,
    pub tail_population: f64,
    pub moments: MomentState,
    /// Ascending spectrum of `ρ`, for the diagnostics dump.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub spectrum: Vec<f64>,
}

/// Full oracle run at one truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub dim: usize,
    pub samples: Vec<OracleSample>,
    pub monitors: Vec<EvolutionMonitor>,
}

impl OracleReport {
    pub fn sample(&self, t: f64, theta: Theta) -> Option<&OracleSample> {
        self.samples
            .iter()
            .find(|s| s.theta == theta && (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// Pretty JSON of spectra, residuals and monitors.
    pub fn diagnostics_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialises")
    }
}

fn analyse(
    t: f64,
    theta: Theta,
    rho: &DensityMatrix,
    drho: &CMatrix,
    ops: &FockOperators,
    config: &OracleConfig,
) -> Result<OracleSample, OracleError> {
    let basis = ops.basis();
    let lyap = sld_lyapunov(rho, drho, config)?;
    let proj = project_coefficients(&lyap.sld, rho, &basis, config.kernel_eps_rel)?;
    let n = ops.dim();
    let fitted = basis
        .iter()
        .zip(&proj.coefficients)
        .fold(CMatrix::zeros(n, n), |acc, (a, c)| {
            acc + *a * C::new(*c, 0.0)
        });
    let mean = rho.expect(&fitted).re;
    let centered = &fitted - CMatrix::identity(n, n) * C::new(mean, 0.0);
    let qfi_projected = trace_product(&(&rho.matrix * &centered), &centered).re;
    Ok(OracleSample {
        t,
        theta,
        dim: n,
        coefficients: proj.coefficients,
        projection_residual: proj.residual,
        gram_condition: proj.gram_condition,
        qfi_direct: lyap.qfi_direct,
        qfi_projected,
        kernel_weight: lyap.kernel_weight,
        min_eigenvalue: lyap.eigenvalues[0],
        tail_population: rho.tail_population(),
        moments: rho.moments(ops),
        spectrum: lyap.eigenvalues,
    })
}

/// Largest `|dρ/dt|` entry accepted for a state called stationary.
pub const STATIONARITY_TOL: f64 = 1e-9;

/// Oracle SLD of the stationary state, reported at `t = ∞`.
///
/// The stationary states at `θ` and `θ ± δθ` are the Gaussians with
/// equipartition moments `(T/mω², mT, 0)`; each is checked to be a fixed
/// point of [`cl_rhs`] before use.
pub fn stationary_probe(
    params: &ModelParams,
    theta: Theta,
    config: &OracleConfig,
) -> Result<OracleSample, OracleError> {
    let ops = FockOperators::for_params(config.dim, params);
    let stationary = |p: &ModelParams| -> Result<DensityMatrix, OracleError> {
        let m = MomentState::new(
            p.temperature / (p.m * p.omega * p.omega),
            p.m * p.temperature,
            0.0,
        )?;
        let rho = gaussian_state(&m, p, config.dim, config.tail_cap)?;
        let rate = cl_rhs(&rho.matrix, &ops, p).camax();
        if rate > STATIONARITY_TOL {
            return Err(OracleError::InvariantBreach {
                t: f64::INFINITY,
                what: "stationarity residual",
                magnitude: rate,
            });
        }
        Ok(rho)
    };
    let value = theta.value(params);
    let delta = config.dtheta_rel * value;
    let rho = stationary(params)?;
    let plus = stationary(&theta.with_value(params, value + delta))?;
    let minus = stationary(&theta.with_value(params, value - delta))?;
    let drho = (plus.matrix - minus.matrix) / C::new(2.0 * delta, 0.0);
    analyse(f64::INFINITY, theta, &rho, &drho, &ops, config)
}

/// Evolves the unperturbed and `θ ± δθ` problems (in parallel when
/// allowed) and evaluates the SLD at each probe time.
pub fn probe(
    params: &ModelParams,
    init: &MomentState,
    probes: &[f64],
    thetas: &[Theta],
    config: &OracleConfig,
    mode: Execution,
) -> Result<OracleReport, OracleError> {
    let mut times = probes.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let ops = FockOperators::for_params(config.dim, params);
    let rho0 = gaussian_state(init, params, config.dim, config.tail_cap)?;

    let mut jobs = vec![params.clone()];
    let mut deltas = Vec::new();
    for &theta in thetas {
        let value = theta.value(params);
        let delta = config.dtheta_rel * value;
        if !(delta > 0.0) {
            return Err(OracleError::InvalidRequest(format!(
                "θ = {theta} must be positive"
            )));
        }
        deltas.push(delta);
        jobs.push(theta.with_value(params, value + delta));
        jobs.push(theta.with_value(params, value - delta));
    }
    // one step size for every job keeps the difference quotient clean
    let config = OracleConfig {
        dt: Some(
            step_size(&ops, params, config)?.min(
                jobs.iter()
                    .map(|p| ops.stable_step(p))
                    .fold(f64::INFINITY, f64::min),
            ),
        ),
        ..*config
    };
    let runs = try_par_map(&jobs, mode, |p| {
        evolve_sampled(&rho0, &ops, p, &times, &config)
    })?;

    let mut samples = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let rho = &runs[0].0[ti];
        for (k, &theta) in thetas.iter().enumerate() {
            let plus = &runs[1 + 2 * k].0[ti].matrix;
            let minus = &runs[2 + 2 * k].0[ti].matrix;
            let drho = (plus - minus) / C::new(2.0 * deltas[k], 0.0);
            samples.push(analyse(t, theta, rho, &drho, &ops, &config)?);
        }
    }
    Ok(OracleReport {
        dim: config.dim,
        samples,
        monitors: runs.into_iter().map(|(_, m)| m).collect(),
    })
}

/// [`probe`] at several truncations; runs are independent.
pub fn truncation_ladder(
    params: &ModelParams,
    init: &MomentState,
    probes: &[f64],
    thetas: &[Theta],
    dims: &[usize],
    config: &OracleConfig,
    mode: Execution,
) -> Result<Vec<OracleReport>, OracleError> {
    try_par_map(dims, mode, |&dim| {
        // inner runs stay sequential; the ladder already fans out
        probe(
            params,
            init,
            probes,
            thetas,
            &OracleConfig { dim, ..*config },
            Execution::Sequential,
        )
    })
}

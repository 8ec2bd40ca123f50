//! Symmetric logarithmic derivatives and quantum Fisher information for a
//! Brownian particle under the Caldeira–Leggett master equation.
//!
//! The SLD is expanded in a small Hermitian operator basis and its
//! coefficients follow from a linear system whose entries are Gaussian
//! moments. A truncated Fock-space integrator serves as an independent
//! reference.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod dynamics;
pub mod fock_oracle;
pub mod gaussian_moments;
pub mod operator_algebra;
pub mod parallel;
pub mod rk4;
pub mod scalar;
pub mod sld_builder;
pub mod sld_solver;

pub use dynamics::{integrate, steady_state, DynamicsError, ModelParams, TimeSeries};
pub use gaussian_moments::{MomentError, MomentState};
pub use operator_algebra::{AlgebraError, OperatorPoly, WeylCombination};
pub use parallel::Execution;
pub use scalar::{rat, Rational, Scalar};
pub use sld_builder::{BuildError, Layout, OperatorBasis, SldAssembler, SldSystem, Theta};
pub use sld_solver::{
    Pipeline, PipelineError, QfiValue, SampleResult, SldCoefficients, SolveError, SolverConfig,
    ThetaResult,
};

//! Scenario files: schema, defaults and validation.

use serde::{Deserialize, Deserializer, Serialize};
use sld_forge::fock_oracle::OracleConfig;
use sld_forge::{
    DynamicsError, Layout, ModelParams, MomentError, MomentState, SolverConfig, Theta,
};
use std::path::{Component, Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides the directory that relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "SLD_FORGE_OUT";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("invalid field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error(transparent)]
    Params(#[from] DynamicsError),
    #[error("initial moments: {0}")]
    Init(#[source] MomentError),
}

fn field(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field,
        reason: reason.into(),
    }
}

/// A float written either as a JSON number or as `"p/q"`.
fn number<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Float(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Float(v) => Ok(v),
        Raw::Text(s) => parse_fraction(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("not a number: {s:?}"))),
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => Some(n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(deserialize_with = "number")]
    pub m: f64,
    #[serde(deserialize_with = "number")]
    pub omega: f64,
    #[serde(deserialize_with = "number")]
    pub gamma: f64,
    #[serde(rename = "T", deserialize_with = "number")]
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(deserialize_with = "number")]
    pub xx: f64,
    #[serde(deserialize_with = "number")]
    pub pp: f64,
    #[serde(deserialize_with = "number")]
    pub xp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub condition_cap: f64,
    pub residual_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            condition_cap: d.condition_cap,
            residual_tol: d.residual_tol,
        }
    }
}

/// Relative deviation allowed between moment method and oracle, per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerance {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub gamma: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            temperature: 0.02,
            gamma: 0.05,
        }
    }
}

impl Tolerance {
    pub fn get(&self, theta: Theta) -> f64 {
        match theta {
            Theta::Temperature => self.temperature,
            Theta::Gamma => self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Abort when an eigenvalue of ρ falls below this.
    pub negative_eigenvalue: f64,
    /// Largest admissible weight of ∂θρ in the kernel of ρ.
    pub kernel_weight: f64,
    /// Eigenvalues below this fraction of the largest count as kernel.
    pub kernel_eps: f64,
    /// Largest population allowed in the top tenth of the Fock levels.
    pub tail_population: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let d = OracleConfig::default();
        Self {
            negative_eigenvalue: d.negative_eigenvalue_abort,
            kernel_weight: d.kernel_weight_cap,
            kernel_eps: d.kernel_eps_rel,
            tail_population: d.tail_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub enabled: bool,
    pub fock_dim: usize,
    /// Central-difference step relative to θ.
    pub dtheta: f64,
    /// Integration step; derived from the generator norm when absent.
    pub dt: Option<f64>,
    /// Default probe times for `compare`.
    pub times: Vec<f64>,
    /// Truncations for ladder mode.
    pub ladder: Vec<usize>,
    pub tolerance: Tolerance,
    pub residual_max: f64,
    pub thresholds: Thresholds,
}

impl Default for OracleSpec {
    fn default() -> Self {
        let d = OracleConfig::default();
        Self {
            enabled: false,
            fock_dim: d.dim,
            dtheta: d.dtheta_rel,
            dt: None,
            times: Vec::new(),
            ladder: Vec::new(),
            tolerance: Tolerance::default(),
            residual_max: 1e-3,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Relative to the output root.
    pub dir: PathBuf,
    pub moments: String,
    #[serde(rename = "coeffs_T")]
    pub coeffs_temperature: String,
    pub coeffs_gamma: String,
    pub qfi: String,
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            moments: "moments.csv".into(),
            coeffs_temperature: "coeffs_T.csv".into(),
            coeffs_gamma: "coeffs_gamma.csv".into(),
            qfi: "qfi.csv".into(),
            summary: "summary.json".into(),
        }
    }
}

impl OutputSpec {
    pub fn coeffs(&self, theta: Theta) -> &str {
        match theta {
            Theta::Temperature => &self.coeffs_temperature,
            Theta::Gamma => &self.coeffs_gamma,
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub params: ParamsSpec,
    pub init: InitSpec,
    #[serde(deserialize_with = "number")]
    pub t_end: f64,
    #[serde(deserialize_with = "number")]
    pub dt: f64,
    /// Keep every `stride`-th integrator step in the outputs.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub theta: Vec<Theta>,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Scenario {
    /// Parses without semantic checks; see [`Scenario::check`].
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        let mut scenario: Scenario =
            serde_json::from_str(text).map_err(|source| ScenarioError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        if scenario.name.is_empty() {
            scenario.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(scenario)
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// [`Scenario::read`] followed by [`Scenario::check`].
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let scenario = Self::read(path)?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ScenarioError::Version(self.schema));
        }
        let params = self.model_params()?;
        self.init_state()?;
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(field(
                "t_end",
                format!("must be finite and >= 0, got {}", self.t_end),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(field("dt", format!("must be > 0, got {}", self.dt)));
        }
        let limit = params.max_step();
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(field(
                "dt",
                format!("{} exceeds the stability limit {limit}", self.dt),
            ));
        }
        if self.stride == 0 {
            return Err(field("stride", "must be >= 1"));
        }
        if self
            .theta
            .iter()
            .enumerate()
            .any(|(i, t)| self.theta[..i].contains(t))
        {
            return Err(field("theta", "duplicate entry"));
        }
        if !(self.solver.condition_cap > 1.0 && self.solver.residual_tol > 0.0) {
            return Err(field(
                "solver",
                "need condition_cap > 1 and residual_tol > 0",
            ));
        }
        self.check_oracle()?;
        self.check_output()
    }

    fn check_oracle(&self) -> Result<(), ScenarioError> {
        let o = &self.oracle;
        if o.fock_dim < 8 || o.ladder.iter().any(|&d| d < 8) {
            return Err(field("oracle.fock_dim", "Fock dimensions must be >= 8"));
        }
        if !(o.dtheta > 0.0 && o.dtheta < 0.1) {
            return Err(field(
                "oracle.dtheta",
                format!("must lie in (0, 0.1), got {}", o.dtheta),
            ));
        }
        if o.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(field("oracle.dt", "must be > 0"));
        }
        if o.times.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(field("oracle.times", "probe times must be >= 0"));
        }
        if !(o.tolerance.temperature > 0.0 && o.tolerance.gamma > 0.0 && o.residual_max > 0.0) {
            return Err(field("oracle.tolerance", "tolerances must be > 0"));
        }
        let t = &o.thresholds;
        if !(t.negative_eigenvalue <= 0.0
            && t.kernel_weight > 0.0
            && t.kernel_eps > 0.0
            && t.tail_population > 0.0)
        {
            return Err(field(
                "oracle.thresholds",
                "need negative_eigenvalue <= 0 and positive caps",
            ));
        }
        Ok(())
    }

    fn check_output(&self) -> Result<(), ScenarioError> {
        let o = &self.output;
        let relative = o
            .dir
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
        if !relative {
            return Err(field(
                "output.dir",
                format!(
                    "must be a relative path without `..`, got {}",
                    o.dir.display()
                ),
            ));
        }
        let files = [
            &o.moments,
            &o.coeffs_temperature,
            &o.coeffs_gamma,
            &o.qfi,
            &o.summary,
        ];
        for (i, name) in files.iter().enumerate() {
            let plain = Path::new(name.as_str()).components().count() == 1
                && matches!(
                    Path::new(name.as_str()).components().next(),
                    Some(Component::Normal(_))
                );
            if !plain {
                return Err(field(
                    "output",
                    format!("file name {name:?} must be a plain name"),
                ));
            }
            if files[..i].contains(name) {
                return Err(field("output", format!("file name {name:?} used twice")));
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams, ScenarioError> {
        let p = &self.params;
        Ok(ModelParams::new(p.m, p.omega, p.gamma, p.temperature)?)
    }

    pub fn init_state(&self) -> Result<MomentState, ScenarioError> {
        let i = &self.init;
        MomentState::new(i.xx, i.pp, i.xp).map_err(ScenarioError::Init)
    }

    /// Requested parameters in canonical order.
    pub fn thetas(&self) -> Vec<Theta> {
        Theta::ALL
            .into_iter()
            .filter(|t| self.theta.contains(t))
            .collect()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            condition_cap: self.solver.condition_cap,
            residual_tol: self.solver.residual_tol,
        }
    }

    pub fn oracle_config(&self, dim: usize) -> OracleConfig {
        let o = &self.oracle;
        OracleConfig {
            dim,
            dt: o.dt,
            dtheta_rel: o.dtheta,
            kernel_eps_rel: o.thresholds.kernel_eps,
            kernel_weight_cap: o.thresholds.kernel_weight,
            negative_eigenvalue_abort: o.thresholds.negative_eigenvalue,
            tail_cap: o.thresholds.tail_population,
            ..OracleConfig::default()
        }
    }

    pub fn output_dir(&self, root: &Path) -> PathBuf {
        root.join(&self.output.dir)
    }
}

/// `$SLD_FORGE_OUT` when set and non-empty, else the working directory.
pub fn output_root() -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("."),
    }
}

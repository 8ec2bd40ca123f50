//! Moment method against the Fock-space oracle at chosen probe times.

use super::run::{dynamics_failure, pipeline_failure};
use crate::error::CliError;
use crate::output;
use crate::scenario::{Scenario, SCHEMA_VERSION};
use serde::Serialize;
use sld_forge::fock_oracle::{stationary_probe, truncation_ladder, OracleError, OracleSample};
use sld_forge::{
    integrate, steady_state, Execution, Layout, MomentState, Pipeline, Theta, ThetaResult,
};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct CompareRequest {
    /// Probe times; `f64::INFINITY` selects the stationary state.
    pub times: Vec<f64>,
    /// Truncations to run; the largest one is compared.
    pub dims: Vec<usize>,
    pub mode: Execution,
}

impl CompareRequest {
    pub fn new(
        scenario: &Scenario,
        times: Option<Vec<f64>>,
        ladder: Option<Vec<usize>>,
        mode: Execution,
    ) -> Result<Self, CliError> {
        let mut times = times.unwrap_or_else(|| scenario.oracle.times.clone());
        if times.is_empty() {
            return Err(CliError::Usage(
                "no probe times: pass --times or set oracle.times".into(),
            ));
        }
        if times.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(CliError::Usage("probe times must be >= 0".into()));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut dims = match ladder {
            None => vec![scenario.oracle.fock_dim],
            Some(d) if d.is_empty() => scenario.oracle.ladder.clone(),
            Some(d) => d,
        };
        if dims.is_empty() || dims.iter().any(|&d| d < 8) {
            return Err(CliError::Usage(
                "ladder needs Fock dimensions >= 8 (flag or oracle.ladder)".into(),
            ));
        }
        dims.sort_unstable();
        dims.dedup();
        Ok(Self { times, dims, mode })
    }
}

/// Moment-method numbers for one layout.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSide {
    pub layout: Layout,
    pub coefficients: Vec<f64>,
    pub qfi: f64,
    pub residual: f64,
    pub condition: f64,
}

impl MomentSide {
    fn new(layout: Layout, r: &ThetaResult) -> Self {
        Self {
            layout,
            coefficients: r.coefficients.values.clone(),
            qfi: r.qfi,
            residual: r.coefficients.residual,
            condition: r.coefficients.condition,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSide {
    pub fock_dim: usize,
    pub coefficients: Vec<f64>,
    pub qfi_direct: f64,
    pub qfi_projected: f64,
    pub projection_residual: f64,
    pub gram_condition: f64,
    pub kernel_weight: f64,
    pub min_eigenvalue: f64,
    pub tail_population: f64,
}

impl From<&OracleSample> for OracleSide {
    fn from(s: &OracleSample) -> Self {
        Self {
            fock_dim: s.dim,
            coefficients: s.coefficients.clone(),
            qfi_direct: s.qfi_direct,
            qfi_projected: s.qfi_projected,
            projection_residual: s.projection_residual,
            gram_condition: s.gram_condition,
            kernel_weight: s.kernel_weight,
            min_eigenvalue: s.min_eigenvalue,
            tail_population: s.tail_population,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Deviation {
    /// `max_i |a_i − b_i|` over the larger ∞-norm of the two vectors.
    pub coefficients: f64,
    pub per_coefficient: Vec<f64>,
    pub qfi: f64,
}

impl Deviation {
    fn between(moment: &MomentSide, oracle: &OracleSide) -> Self {
        let (coefficients, per_coefficient) =
            relative_deviation(&moment.coefficients, &oracle.coefficients);
        Self {
            coefficients,
            per_coefficient,
            qfi: scalar_deviation(moment.qfi, oracle.qfi_direct),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRung {
    pub fock_dim: usize,
    pub coefficients: Vec<f64>,
    pub projection_residual: f64,
    pub deviation: f64,
    /// Relative change from the previous rung.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThetaComparison {
    pub theta: Theta,
    pub labels: Vec<String>,
    pub moment: MomentSide,
    pub other_layout: MomentSide,
    pub oracle: OracleSide,
    pub deviation: Deviation,
    pub other_layout_deviation: Deviation,
    pub tolerance: f64,
    pub residual_max: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ladder: Vec<LadderRung>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeComparison {
    pub schema: u32,
    pub scenario: String,
    /// `null` for the stationary probe.
    pub t: f64,
    pub stationary: bool,
    pub moment_state: MomentState,
    pub oracle_moments: Option<MomentState>,
    pub thetas: Vec<ThetaComparison>,
    pub pass: bool,
}

impl ProbeComparison {
    pub fn theta(&self, theta: Theta) -> Option<&ThetaComparison> {
        self.thetas.iter().find(|c| c.theta == theta)
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub probes: Vec<ProbeComparison>,
    pub files: Vec<PathBuf>,
}

impl CompareOutcome {
    pub fn failures(&self) -> usize {
        self.probes
            .iter()
            .flat_map(|p| &p.thetas)
            .filter(|c| !c.pass)
            .count()
    }

    pub fn total(&self) -> usize {
        self.probes.iter().map(|p| p.thetas.len()).sum()
    }
}

/// `(max_i |a_i − b_i| / s, per-entry ratios)` with `s = max(‖a‖∞, ‖b‖∞)`;
/// zero when both vectors vanish.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        return (0.0, vec![0.0; a.len()]);
    }
    let per: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .collect();
    (per.iter().fold(0.0f64, |m, v| m.max(*v)), per)
}

fn scalar_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn file_name(t: f64) -> String {
    format!("compare_t{t}.json")
}

/// Oracle samples indexed `[dim][time][theta]`.
fn oracle_samples(
    scenario: &Scenario,
    request: &CompareRequest,
    thetas: &[Theta],
) -> Result<Vec<Vec<Vec<OracleSample>>>, CliError> {
    let params = scenario.model_params()?;
    let init = scenario.init_state()?;
    let finite: Vec<f64> = request
        .times
        .iter()
        .copied()
        .filter(|t| t.is_finite())
        .collect();
    let base = scenario.oracle_config(scenario.oracle.fock_dim);
    let transient = if finite.is_empty() {
        vec![None; request.dims.len()]
    } else {
        truncation_ladder(
            &params,
            &init,
            &finite,
            thetas,
            &request.dims,
            &base,
            request.mode,
        )?
        .into_iter()
        .map(Some)
        .collect()
    };
    let mut out = Vec::new();
    for (&dim, report) in request.dims.iter().zip(transient) {
        let config = scenario.oracle_config(dim);
        let mut per_time = Vec::new();
        for &t in &request.times {
            let row = thetas
                .iter()
                .map(|&theta| match &report {
                    Some(r) if t.is_finite() => r.sample(t, theta).cloned().ok_or_else(|| {
                        OracleError::InvalidRequest(format!("no oracle sample at t = {t}"))
                    }),
                    _ => stationary_probe(&params, theta, &config),
                })
                .collect::<Result<Vec<_>, _>>()?;
            per_time.push(row);
        }
        out.push(per_time);
    }
    Ok(out)
}

fn moment_state(scenario: &Scenario, t: f64) -> Result<MomentState, CliError> {
    let params = scenario.model_params()?;
    if t.is_infinite() {
        return Ok(steady_state(&params));
    }
    let series =
        integrate(&scenario.init_state()?, &params, t, scenario.dt).map_err(dynamics_failure)?;
    Ok(series.last().clone())
}

/// Runs the comparison and writes one JSON report per probe time into `dir`.
pub fn compare(
    scenario: &Scenario,
    request: &CompareRequest,
    dir: &Path,
) -> Result<CompareOutcome, CliError> {
    scenario.check()?;
    if !scenario.oracle.enabled {
        return Err(CliError::Usage(
            "compare needs `oracle.enabled: true`".into(),
        ));
    }
    let thetas = match scenario.thetas() {
        t if t.is_empty() => Theta::ALL.to_vec(),
        t => t,
    };
    let params = scenario.model_params()?;
    let other = match scenario.layout {
        Layout::Printed => Layout::TestRows,
        Layout::TestRows => Layout::Printed,
    };
    let pipeline = |layout| {
        Pipeline::new(&params, layout, scenario.solver_config()).map_err(|e| CliError::Solver {
            t: 0.0,
            detail: e.to_string(),
        })
    };
    let (main, alt) = (pipeline(scenario.layout)?, pipeline(other)?);
    let labels: Vec<String> = main.basis().labels().to_vec();
    let oracle = oracle_samples(scenario, request, &thetas)?;
    let top = oracle.len() - 1;

    let mut probes = Vec::new();
    for (ti, &t) in request.times.iter().enumerate() {
        let state = moment_state(scenario, t)?;
        let ours = main
            .evaluate_thetas(t, &state, &thetas)
            .map_err(pipeline_failure)?;
        let theirs = alt
            .evaluate_thetas(t, &state, &thetas)
            .map_err(pipeline_failure)?;
        let mut comparisons = Vec::new();
        for (k, &theta) in thetas.iter().enumerate() {
            let moment = MomentSide::new(scenario.layout, &ours[k]);
            let other_layout = MomentSide::new(other, &theirs[k]);
            let side = OracleSide::from(&oracle[top][ti][k]);
            let deviation = Deviation::between(&moment, &side);
            let other_layout_deviation = Deviation::between(&other_layout, &side);
            let tolerance = scenario.oracle.tolerance.get(theta);
            let residual_max = scenario.oracle.residual_max;
            let pass = deviation.coefficients < tolerance
                && deviation.qfi < tolerance
                && side.projection_residual < residual_max;
            let ladder = if oracle.len() > 1 {
                ladder_rungs(&oracle, ti, k, &moment.coefficients)
            } else {
                Vec::new()
            };
            comparisons.push(ThetaComparison {
                theta,
                labels: labels.clone(),
                moment,
                other_layout,
                oracle: side,
                deviation,
                other_layout_deviation,
                tolerance,
                residual_max,
                pass,
                ladder,
            });
        }
        probes.push(ProbeComparison {
            schema: SCHEMA_VERSION,
            scenario: scenario.name.clone(),
            t,
            stationary: t.is_infinite(),
            moment_state: state,
            oracle_moments: t.is_finite().then(|| oracle[top][ti][0].moments.clone()),
            pass: comparisons.iter().all(|c| c.pass),
            thetas: comparisons,
        });
    }

    output::create_dir(dir)?;
    let mut files = Vec::new();
    for p in &probes {
        let path = dir.join(file_name(p.t));
        output::write(&path, &output::json(p))?;
        files.push(path);
    }
    Ok(CompareOutcome { probes, files })
}

fn ladder_rungs(
    oracle: &[Vec<Vec<OracleSample>>],
    ti: usize,
    k: usize,
    moment: &[f64],
) -> Vec<LadderRung> {
    let mut rungs: Vec<LadderRung> = Vec::new();
    for per_dim in oracle {
        let s = &per_dim[ti][k];
        let change = rungs
            .last()
            .map(|prev| relative_deviation(&s.coefficients, &prev.coefficients).0);
        rungs.push(LadderRung {
            fock_dim: s.dim,
            coefficients: s.coefficients.clone(),
            projection_residual: s.projection_residual,
            deviation: relative_deviation(moment, &s.coefficients).0,
            change,
        });
    }
    rungs
}

/// One line per probe and parameter.
pub fn summary_table(outcome: &CompareOutcome) -> String {
    let mut out =
        String::from("t         theta  dev_coeff     dev_qfi       residual      status\n");
    for p in &outcome.probes {
        for c in &p.thetas {
            out.push_str(&format!(
                "{:<9} {:<6} {:<13.6e} {:<13.6e} {:<13.6e} {}\n",
                p.t,
                c.theta.tag(),
                c.deviation.coefficients,
                c.deviation.qfi,
                c.oracle.projection_residual,
                if c.pass { "ok" } else { "FAIL" }
            ));
            for r in &c.ladder {
                out.push_str(&format!(
                    "  N={:<5} deviation {:.6e}  change {}\n",
                    r.fock_dim,
                    r.deviation,
                    r.change.map_or("-".to_string(), |c| format!("{c:.6e}"))
                ));
            }
        }
    }
    out
}

use crate::error::CliError;
use crate::output::{self, csv};
use crate::scenario::Scenario;
use serde_json::json;
use sld_forge::fock_oracle::probe;
use sld_forge::sld_solver::PipelineError;
use sld_forge::{integrate, DynamicsError, Execution, MomentState, Pipeline, Theta, ThetaResult};
use std::path::{Path, PathBuf};

pub const MOMENT_HEADER: [&str; 4] = ["t", "xx", "pp", "xp"];
pub const COEFF_HEADER: [&str; 8] = [
    "t",
    "c_x",
    "c_p",
    "c_xx",
    "c_pp",
    "c_xp",
    "residual",
    "condition",
];

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub samples: usize,
}

pub(crate) fn dynamics_failure(e: DynamicsError) -> CliError {
    let t = match &e {
        DynamicsError::Unphysical { t, .. } => *t,
        _ => 0.0,
    };
    CliError::Solver {
        t,
        detail: e.to_string(),
    }
}

pub(crate) fn pipeline_failure(e: PipelineError) -> CliError {
    let t = match &e {
        PipelineError::Build { t, .. }
        | PipelineError::Solve { t, .. }
        | PipelineError::Qfi { t, .. } => *t,
    };
    CliError::Solver {
        t,
        detail: e.to_string(),
    }
}

/// Stride-thinned trajectory of the scenario.
pub fn trajectory(scenario: &Scenario) -> Result<Vec<(f64, MomentState)>, CliError> {
    let params = scenario.model_params()?;
    let series = integrate(
        &scenario.init_state()?,
        &params,
        scenario.t_end,
        scenario.dt,
    )
    .map_err(dynamics_failure)?;
    Ok(series.thinned(scenario.stride))
}

/// Moment-method results for the requested parameters at every sample.
pub fn evaluate(
    scenario: &Scenario,
    samples: &[(f64, MomentState)],
    mode: Execution,
) -> Result<Vec<Vec<ThetaResult>>, CliError> {
    let pipeline = Pipeline::new(
        &scenario.model_params()?,
        scenario.layout,
        scenario.solver_config(),
    )
    .map_err(|e| CliError::Solver {
        t: 0.0,
        detail: e.to_string(),
    })?;
    pipeline
        .evaluate_series_for(samples, &scenario.thetas(), mode)
        .map_err(pipeline_failure)
}

/// Writes the CSVs and summary into `dir`; with `with_oracle`, also the
/// oracle diagnostics at the scenario's probe times.
pub fn run(
    scenario: &Scenario,
    dir: &Path,
    mode: Execution,
    with_oracle: bool,
) -> Result<RunOutcome, CliError> {
    scenario.check()?;
    output::create_dir(dir)?;
    let out = &scenario.output;
    let mut files = Vec::new();

    let samples = trajectory(scenario)?;
    emit(
        dir,
        &mut files,
        &out.moments,
        csv(
            &MOMENT_HEADER,
            samples.iter().map(|(t, s)| vec![*t, s.xx, s.pp, s.xp]),
        ),
    )?;

    let thetas = scenario.thetas();
    let mut last_qfi = serde_json::Map::new();
    if !thetas.is_empty() {
        let results = evaluate(scenario, &samples, mode)?;
        for (k, theta) in thetas.iter().enumerate() {
            let rows = samples.iter().zip(&results).map(|((t, _), r)| {
                let c = &r[k].coefficients;
                let mut row = vec![*t];
                row.extend(&c.values);
                row.extend([c.residual, c.condition]);
                row
            });
            emit(
                dir,
                &mut files,
                out.coeffs(*theta),
                csv(&COEFF_HEADER, rows),
            )?;
        }
        let mut header = vec!["t"];
        header.extend(thetas.iter().map(|t| qfi_column(*t)));
        let rows = samples
            .iter()
            .zip(&results)
            .map(|((t, _), r)| std::iter::once(*t).chain(r.iter().map(|x| x.qfi)).collect());
        emit(dir, &mut files, &out.qfi, csv(&header, rows))?;
        if let Some(r) = results.last() {
            for (theta, x) in thetas.iter().zip(r) {
                last_qfi.insert(qfi_column(*theta).into(), json!(x.qfi));
            }
        }
    }

    if with_oracle {
        let params = scenario.model_params()?;
        let config = scenario.oracle_config(scenario.oracle.fock_dim);
        let probes: Vec<f64> = scenario
            .oracle
            .times
            .iter()
            .copied()
            .filter(|t| t.is_finite())
            .collect();
        let oracle_thetas = if thetas.is_empty() {
            Theta::ALL.to_vec()
        } else {
            thetas.clone()
        };
        let report = probe(
            &params,
            &scenario.init_state()?,
            &probes,
            &oracle_thetas,
            &config,
            mode,
        )?;
        emit(
            dir,
            &mut files,
            "oracle.json",
            output::json(&report.diagnostics_json()),
        )?;
    }

    let (t_last, s_last) = samples.last().expect("trajectory has at least one sample");
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let summary = json!({
        "schema": crate::scenario::SCHEMA_VERSION,
        "scenario": scenario.name,
        "layout": scenario.layout,
        "theta": thetas,
        "samples": samples.len(),
        "dt": scenario.dt,
        "stride": scenario.stride,
        "files": names,
        "final": {"t": t_last, "xx": s_last.xx, "pp": s_last.pp, "xp": s_last.xp, "qfi": last_qfi},
    });
    emit(dir, &mut files, &out.summary, output::json(&summary))?;

    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        files,
        samples: samples.len(),
    })
}

fn emit(dir: &Path, files: &mut Vec<PathBuf>, name: &str, text: String) -> Result<(), CliError> {
    let path = dir.join(name);
    output::write(&path, &text)?;
    files.push(path);
    Ok(())
}

pub fn qfi_column(theta: Theta) -> &'static str {
    match theta {
        Theta::Temperature => "F_T",
        Theta::Gamma => "F_gamma",
    }
}

//! Report-only checks: resolved parameters, regime ratios, cost estimate.

use crate::error::CliError;
use crate::scenario::Scenario;
use sld_forge::fock_oracle::{cl_rhs, FockOperators};
use sld_forge::{integrate, Execution, MomentState, Pipeline};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct Validation {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Builds the report; uncertainty violations and schema errors are returned
/// as errors after the report text is complete.
pub fn validate(scenario: &Scenario) -> (Validation, Result<(), CliError>) {
    let mut text = String::new();
    let mut warnings = Vec::new();
    let p = &scenario.params;
    let _ = writeln!(text, "scenario        {}", scenario.name);
    let _ = writeln!(
        text,
        "params          m = {}, omega = {}, gamma = {}, T = {}",
        p.m, p.omega, p.gamma, p.temperature
    );
    let (b, c, a) = (
        1.0 / (2.0 * p.m),
        0.5 * p.m * p.omega * p.omega,
        (4.0 * p.m * p.temperature).sqrt(),
    );
    let _ = writeln!(text, "resolved        b = {b:.6}, c = {c:.6}, a = {a:.6}");

    let i = &scenario.init;
    let det = i.xx * i.pp - 0.25 * i.xp * i.xp;
    let ok = det >= 0.25 * (1.0 - 1e-12);
    let _ = writeln!(
        text,
        "uncertainty     xx*pp - (xp/2)^2 = {det:.6} (bound 0.25): {}",
        if ok { "ok" } else { "VIOLATED" }
    );

    let scale = 2.0 * std::f64::consts::PI * p.temperature;
    let _ = writeln!(
        text,
        "markov ratios   gamma/(2 pi T) = {:.6}, omega/(2 pi T) = {:.6}",
        p.gamma / scale,
        p.omega / scale
    );

    let checked = scenario.check().map_err(CliError::from);
    if let Ok(params) = scenario.model_params() {
        warnings.extend(params.markov_warnings().iter().map(|w| w.to_string()));
    }
    if checked.is_ok() {
        let _ = writeln!(
            text,
            "equilibrium     xx = {:.6}, pp = {:.6}",
            p.temperature / (p.m * p.omega * p.omega),
            p.m * p.temperature
        );
        let (moment, oracle) = estimate_runtime(scenario);
        let _ = writeln!(text, "est. runtime    run {moment:.2} s");
        if let Some(oracle) = oracle {
            let _ = writeln!(
                text,
                "est. runtime    compare {oracle:.1} s (single core, N = {})",
                scenario.oracle.fock_dim
            );
        }
    }
    for w in &warnings {
        let _ = writeln!(text, "warning         {w}");
    }
    (Validation { text, warnings }, checked)
}

/// Seconds for `run` and, when the oracle is enabled, for `compare` at the
/// scenario's probe times; extrapolated from short timed samples.
pub fn estimate_runtime(scenario: &Scenario) -> (f64, Option<f64>) {
    let (Ok(params), Ok(init)) = (scenario.model_params(), scenario.init_state()) else {
        return (f64::NAN, None);
    };
    let steps = (scenario.t_end / scenario.dt).ceil().max(1.0);
    let probe_steps = 2000.0f64.min(steps);
    let start = Instant::now();
    let _ = integrate(&init, &params, probe_steps * scenario.dt, scenario.dt);
    let integration = start.elapsed().as_secs_f64() * steps / probe_steps;

    let samples = (steps / scenario.stride as f64).ceil() + 1.0;
    let thetas = scenario.thetas();
    let mut solve = 0.0;
    if !thetas.is_empty() {
        if let Ok(pipeline) = Pipeline::new(&params, scenario.layout, scenario.solver_config()) {
            let trial: Vec<(f64, MomentState)> =
                (0..20).map(|k| (k as f64, init.clone())).collect();
            let start = Instant::now();
            let _ = pipeline.evaluate_series_for(&trial, &thetas, Execution::Sequential);
            solve = start.elapsed().as_secs_f64() / 20.0 * samples;
        }
    }

    let oracle = scenario.oracle.enabled.then(|| {
        let ops = FockOperators::for_params(scenario.oracle.fock_dim, &params);
        let dt = scenario
            .oracle
            .dt
            .unwrap_or_else(|| ops.stable_step(&params));
        let rho = ops.hamiltonian().unscale(scenario.oracle.fock_dim as f64);
        let reps = 8;
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(cl_rhs(&rho, &ops, &params));
        }
        let per_rhs = start.elapsed().as_secs_f64() / reps as f64;
        let horizon = scenario
            .oracle
            .times
            .iter()
            .copied()
            .filter(|t| t.is_finite())
            .fold(0.0, f64::max);
        let n_theta = if thetas.is_empty() { 2 } else { thetas.len() };
        // RK4 stages, base run plus two per parameter
        horizon / dt * 4.0 * per_rhs * (1 + 2 * n_theta) as f64
    });
    (integration + solve, oracle)
}

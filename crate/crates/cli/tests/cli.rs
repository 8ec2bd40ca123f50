//! End-to-end behaviour of the `sld-forge` binary.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sld-forge"))
}

fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(path)
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    bin().args(args).env("SLD_FORGE_OUT", out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a variant of `fig1_top.json` with `edit` applied to the JSON.
fn variant(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(repo("scenarios/fig1_top.json")).unwrap())
            .unwrap();
    v["output"]["dir"] = Value::from(name);
    edit(&mut v);
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn lines(text: &str) -> Vec<&str> {
    text.lines().collect()
}

fn assert_rows_close(got: &str, want: &str, context: &str) {
    let (g, w): (Vec<f64>, Vec<f64>) = (
        got.split(',').map(|v| v.parse().unwrap()).collect(),
        want.split(',').map(|v| v.parse().unwrap()).collect(),
    );
    assert_eq!(g.len(), w.len(), "{context}");
    for (a, b) in g.iter().zip(&w) {
        assert!(
            (a - b).abs() <= 1e-12 * b.abs() + 1e-15,
            "{context}: {a} vs {b}"
        );
    }
}

#[test]
fn shipped_scenario_matches_golden_snippets() {
    let out = TempDir::new().unwrap();
    let o = run_in(
        out.path(),
        &["run", repo("scenarios/fig1_top.json").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = out.path().join("out/fig1_top");
    for name in ["moments", "coeffs_T", "coeffs_gamma", "qfi"] {
        let text = std::fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap();
        let golden = std::fs::read_to_string(repo(&format!(
            "crates/cli/tests/golden/fig1_top_{name}.csv"
        )))
        .unwrap();
        let (got, want) = (lines(&text), lines(&golden));
        assert!(!text.contains('\r') && text.ends_with('\n'));
        assert_eq!(got[..2], want[..2], "{name}: comment and header");
        assert_eq!(got.len(), 1603, "{name}: comment + header + 1601 samples");
        for (k, (g, w)) in got[2..7].iter().zip(&want[2..7]).enumerate() {
            assert_rows_close(g, w, &format!("{name} head row {k}"));
        }
        for (k, (g, w)) in got[got.len() - 5..].iter().zip(&want[7..]).enumerate() {
            assert_rows_close(g, w, &format!("{name} tail row {k}"));
        }
    }
    // endpoint at equilibrium (T/mω², mT, 0)
    let moments = std::fs::read_to_string(dir.join("moments.csv")).unwrap();
    let end: Vec<f64> = moments
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((end[1] - 2.25).abs() < 1e-6 && (end[2] - 4.0).abs() < 1e-6 && end[3].abs() < 1e-6);

    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["samples"], 1601);
}

#[test]
fn bottom_scenario_relaxes_to_its_equilibrium() {
    let out = TempDir::new().unwrap();
    let o = run_in(
        out.path(),
        &["run", repo("scenarios/fig1_bottom.json").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let moments = std::fs::read_to_string(out.path().join("out/fig1_bottom/moments.csv")).unwrap();
    let end: Vec<f64> = moments
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((end[1] - 9.0).abs() < 1e-6 && (end[2] - 4.0).abs() < 1e-6 && end[3].abs() < 1e-6);
}

#[test]
fn empty_theta_list_writes_moments_only() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "moments_only", |v| {
        v["theta"] = Value::Array(vec![]);
        v["t_end"] = Value::from(1.0);
    });
    let o = run_in(tmp.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut files: Vec<String> = std::fs::read_dir(tmp.path().join("moments_only"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, ["moments.csv", "summary.json"]);
}

#[test]
fn schema_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = [
        variant(tmp.path(), "v2", |v| v["schema"] = Value::from(2)),
        variant(tmp.path(), "typo", |v| v["stepsize"] = Value::from(0.1)),
        variant(tmp.path(), "uncertain", |v| {
            v["init"]["xp"] = Value::from(3.0)
        }),
        variant(tmp.path(), "abs", |v| {
            v["output"]["dir"] = Value::from("/etc/sld")
        }),
    ];
    for path in bad {
        let o = run_in(tmp.path(), &["run", path.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{}: {}", path.display(), stderr(&o));
    }
    let o = run_in(tmp.path(), &["run", "/nonexistent.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solver_failure_exits_3_with_time() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "cap", |v| {
        v["solver"] = serde_json::json!({"condition_cap": 1.5})
    });
    let o = run_in(tmp.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("at t = 0"), "{}", stderr(&o));
}

#[test]
fn oracle_breach_exits_4() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "tiny", |v| {
        v["oracle"]["fock_dim"] = Value::from(10)
    });
    let o = run_in(
        tmp.path(),
        &["compare", path.to_str().unwrap(), "--times", "0.5"],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("too small"));
}

#[test]
fn validate_reports_and_guards() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        &[
            "validate",
            repo("scenarios/fig1_top.json").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for needle in [
        "b = 0.500000",
        "c = 0.888889",
        "a = 4.000000",
        "gamma/(2 pi T) = 0.004974",
        "est. runtime",
    ] {
        assert!(text.contains(needle), "missing {needle}: {text}");
    }
    assert!(!text.contains("warning"));

    let hot = variant(tmp.path(), "hot", |v| {
        v["params"]["gamma"] = Value::from(400.0);
        v["dt"] = Value::from(5e-6);
        v["oracle"]["enabled"] = Value::from(false);
    });
    let o = run_in(tmp.path(), &["validate", hot.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("warning") && stdout(&o).contains("gamma/(2 pi T)"));

    let bad = variant(tmp.path(), "bad", |v| v["init"]["xx"] = Value::from(0.1));
    let o = run_in(tmp.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("VIOLATED"));
}

#[test]
fn sweep_runs_each_scenario_into_its_own_directory() {
    let tmp = TempDir::new().unwrap();
    let scenarios = tmp.path().join("batch");
    std::fs::create_dir(&scenarios).unwrap();
    for (name, omega) in [("a", "4/3"), ("b", "2/3"), ("c", "1")] {
        variant(&scenarios, name, |v| {
            v["params"]["omega"] = Value::from(omega);
            v["t_end"] = Value::from(2.0);
        });
    }
    let out = tmp.path().join("out");
    let o = run_in(&out, &["sweep", scenarios.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["a", "b", "c"] {
        assert!(out.join(name).join("qfi.csv").is_file());
    }
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);

    // one broken file: the others still run, exit code reports the failure
    std::fs::write(scenarios.join("d.json"), "{").unwrap();
    let o = run_in(&out, &["sweep", scenarios.to_str().unwrap(), "--jobs", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("d.json: exit 2"));
}

#[test]
fn compare_stationary_probe_passes() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "stationary", |v| {
        v["oracle"]["fock_dim"] = Value::from(60)
    });
    let o = run_in(
        tmp.path(),
        &["compare", path.to_str().unwrap(), "--times", "inf"],
    );
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("stationary/compare_tinf.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["stationary"], true);
    let t = &report["thetas"][0];
    assert_eq!(t["theta"], "T");
    assert!(t["deviation"]["coefficients"].as_f64().unwrap() < 0.02);
    // the transposed orientation is the exact stationary SLD
    assert!(
        t["other_layout_deviation"]["coefficients"]
            .as_f64()
            .unwrap()
            < 1e-6
    );
}

#[test]
fn compare_thermal_start_is_finite() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "thermal", |v| {
        v["init"] = serde_json::json!({"xx": 2.25, "pp": 4, "xp": 0});
        v["theta"] = serde_json::json!(["gamma"]);
        v["oracle"]["fock_dim"] = Value::from(60);
    });
    let o = run_in(
        tmp.path(),
        &["compare", path.to_str().unwrap(), "--times", "0"],
    );
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("thermal/compare_t0.json")).unwrap(),
    )
    .unwrap();
    let d = &report["thetas"][0]["deviation"];
    assert!(
        d["coefficients"].as_f64().unwrap().is_finite() && d["qfi"].as_f64().unwrap().is_finite()
    );
}

#[test]
fn compare_ladder_changes_shrink() {
    let tmp = TempDir::new().unwrap();
    let path = variant(tmp.path(), "ladder", |v| {
        v["theta"] = serde_json::json!(["T"]);
        // small truncations are the point here; let the tail guard through
        v["oracle"]["thresholds"]["tail_population"] = Value::from(1.0);
    });
    let o = run_in(
        tmp.path(),
        &[
            "compare",
            path.to_str().unwrap(),
            "--times",
            "1",
            "--ladder",
            "20,30,40",
        ],
    );
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let report: Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("ladder/compare_t1.json")).unwrap(),
    )
    .unwrap();
    let ladder = report["thetas"][0]["ladder"].as_array().unwrap();
    let dims: Vec<u64> = ladder
        .iter()
        .map(|r| r["fock_dim"].as_u64().unwrap())
        .collect();
    assert_eq!(dims, [20, 30, 40]);
    let changes: Vec<f64> = ladder[1..]
        .iter()
        .map(|r| r["change"].as_f64().unwrap())
        .collect();
    assert!(changes[1] < changes[0], "{changes:?}");
}

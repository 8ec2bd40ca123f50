//! Independent scenario runs on a fixed number of worker threads.

use super::run::{run, RunOutcome};
use crate::error::CliError;
use crate::output;
use crate::scenario::{Scenario, SCHEMA_VERSION};
use serde_json::json;
use sld_forge::Execution;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug)]
pub struct SweepEntry {
    pub scenario: PathBuf,
    pub result: Result<RunOutcome, CliError>,
}

/// `*.json` files directly inside `dir`, sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every scenario in `dir`; each writes to `<root>/<file stem>`.
pub fn sweep(dir: &Path, root: &Path, jobs: usize) -> Result<Vec<SweepEntry>, CliError> {
    let files = scenario_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no scenario files in {}",
            dir.display()
        )));
    }
    let jobs = jobs.clamp(1, files.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome, CliError>>>> =
        files.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let result = Scenario::load(path).map_err(CliError::from).and_then(|s| {
                    let stem = path.file_stem().unwrap_or_default();
                    // workers already fan out; keep each run on its thread
                    run(&s, &root.join(stem), Execution::Sequential, false)
                });
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    let entries: Vec<SweepEntry> = files
        .into_iter()
        .zip(slots)
        .map(|(scenario, slot)| SweepEntry {
            scenario,
            result: slot.into_inner().unwrap().expect("every slot is filled"),
        })
        .collect();

    output::create_dir(root)?;
    let summary: Vec<_> = entries
        .iter()
        .map(|e| {
            let name = e.scenario.file_name().unwrap_or_default().to_string_lossy().into_owned();
            match &e.result {
                Ok(o) => json!({"scenario": name, "exit_code": 0, "samples": o.samples}),
                Err(err) => json!({"scenario": name, "exit_code": err.exit_code(), "error": err.to_string()}),
            }
        })
        .collect();
    output::write(
        &root.join("sweep.json"),
        &output::json(&json!({"schema": SCHEMA_VERSION, "runs": summary})),
    )?;
    Ok(entries)
}

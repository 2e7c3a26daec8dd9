//! Golden regression suite: config-driven runs compared metric by metric
//! against recorded values, each with its own tolerance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use muse_core::io::KeyValueConfig;

use crate::commands::run_command;
use crate::error::{CliError, CliResult};
use crate::summary::Summary;

/// Recorded value of one metric and the absolute deviation allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub name: String,
    /// Subcommand that consumes `config`.
    pub command: String,
    /// Config path relative to the golden file.
    pub config: PathBuf,
    /// Acceptance criteria this case covers.
    pub criteria: Vec<u32>,
    pub metrics: BTreeMap<String, Expected>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseOutcome {
    pub name: String,
    pub failures: Vec<String>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Every `*.json` case in `dir`, sorted by file name.
pub fn load_cases(dir: &Path) -> CliResult<Vec<(PathBuf, GoldenCase)>> {
    let listing = std::fs::read_dir(dir)
        .map_err(|e| CliError::Golden(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Golden(format!("no golden files in {}", dir.display())));
    }
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Golden(format!("cannot read {}: {e}", p.display())))?;
            let case: GoldenCase = serde_json::from_str(&text)
                .map_err(|e| CliError::Golden(format!("malformed {}: {e}", p.display())))?;
            Ok((p, case))
        })
        .collect()
}

/// Compares a summary against the recorded metrics.
pub fn compare(case: &GoldenCase, summary: &Summary) -> CaseOutcome {
    let mut failures = Vec::new();
    for (key, want) in &case.metrics {
        match summary.metrics.get(key).and_then(|v| v.as_f64()) {
            None => failures.push(format!("{key}: missing or non-numeric")),
            Some(got) if (got - want.value).abs() > want.tol || got.is_nan() != want.value.is_nan() => {
                failures.push(format!("{key}: got {got}, expected {} ± {}", want.value, want.tol))
            }
            Some(_) => {}
        }
    }
    CaseOutcome {
        name: case.name.clone(),
        failures,
    }
}

/// Runs one case with its outputs under `out_root/<name>`.
pub fn run_case(golden_file: &Path, case: &GoldenCase, out_root: &Path) -> CliResult<Summary> {
    let dir = golden_file.parent().unwrap_or(Path::new("."));
    let mut cfg = KeyValueConfig::load(&dir.join(&case.config))?;
    cfg.set("out_path", out_root.join(&case.name).display().to_string());
    run_command(&case.command, &cfg)
}

/// Runs every case whose name contains `filter`. With `bless`, recorded
/// values are replaced by the observed ones and the files rewritten.
pub fn run_suite(
    dir: &Path,
    filter: Option<&str>,
    out_root: &Path,
    bless: bool,
) -> CliResult<Vec<CaseOutcome>> {
    let mut outcomes = Vec::new();
    for (path, mut case) in load_cases(dir)? {
        if filter.is_some_and(|f| !case.name.contains(f)) {
            continue;
        }
        let summary = run_case(&path, &case, out_root)?;
        if bless {
            for (key, want) in case.metrics.iter_mut() {
                if let Some(v) = summary.metrics.get(key).and_then(|v| v.as_f64()) {
                    want.value = v;
                }
            }
            let text = serde_json::to_string_pretty(&case)
                .map_err(|e| CliError::Golden(e.to_string()))?;
            std::fs::write(&path, text + "\n")
                .map_err(|e| CliError::Golden(format!("cannot write {}: {e}", path.display())))?;
        }
        outcomes.push(compare(&case, &summary));
    }
    if outcomes.is_empty() {
        return Err(CliError::Golden("no case matches the filter".into()));
    }
    Ok(outcomes)
}

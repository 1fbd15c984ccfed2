//! Scenario runner: reads an experiment document, executes the named
//! scenario and writes `paths.jsonl`, `summary.csv` and `report.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use config::ExperimentConfig;
pub use error::CliError;
use scenarios::{Check, Params};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "SSR_WORKERS";

#[derive(Serialize)]
struct ReportDocument<'a> {
    scenario: &'a str,
    expected_verdict: &'a str,
    verdict: &'a str,
    passed: bool,
    params: Params,
    checks: &'a [Check],
    condition_norms: &'a BTreeMap<String, f64>,
    details: &'a serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub scenario: String,
    pub verdict: String,
    pub expected: String,
    pub passed: bool,
    pub out_dir: PathBuf,
    pub failed_checks: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_MISMATCH
        }
    }
}

/// Runs the scenario and writes its artifacts into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    config.validate()?;
    let scenario = scenarios::find(&config.scenario)
        .ok_or_else(|| CliError::Usage(format!("unknown scenario `{}`", config.scenario)))?;
    log::info!("running {} ({})", scenario.name, scenario.summary);
    let outcome = scenarios::run_scenario(scenario, config)?;
    let passed = outcome.verdict == scenario.expected && outcome.checks_pass();

    fs::create_dir_all(out_dir)?;
    output::write_paths(out_dir, &outcome.paths)?;
    output::write_summary(out_dir, &outcome.summary_rows())?;
    output::write_report(
        out_dir,
        &ReportDocument {
            scenario: scenario.name,
            expected_verdict: scenario.expected,
            verdict: &outcome.verdict,
            passed,
            params: outcome.params,
            checks: &outcome.checks,
            condition_norms: &outcome.condition_norms,
            details: &outcome.details,
        },
    )?;
    Ok(RunSummary {
        scenario: scenario.name.to_string(),
        verdict: outcome.verdict.clone(),
        expected: scenario.expected.to_string(),
        passed,
        out_dir: out_dir.to_path_buf(),
        failed_checks: outcome.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect(),
    })
}

/// Parses the worker count from the environment value, if any.
pub fn workers_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

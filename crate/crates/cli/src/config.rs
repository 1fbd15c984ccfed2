//! Experiment documents: scenario name, optional model, state and run parameters.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::CliError;
use crate::scenarios::SCENARIOS;

#[derive(Clone, Debug, PartialEq)]
pub enum PsiSpec {
    /// Whatever the scenario uses by default.
    Default,
    /// Projection of a seeded random vector onto eigenspace `index`
    /// (ascending eigenvalue order) of a model observable, normalised.
    Eigenvector {
        observable: String,
        index: usize,
        seed: u64,
    },
    /// `sum_k c_k P_k r / ||P_k r||` over the sectors of the observable, with
    /// `r` a seeded random reference vector. Empty coefficients mean equal weights.
    SectorSuperposition {
        observable: String,
        coefficients: Vec<f64>,
        seed: u64,
    },
    Random { seed: u64 },
    Amplitudes { re: Vec<f64>, im: Vec<f64> },
}

/// Run parameters; `None` means the scenario default.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOverrides {
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub model: Option<Value>,
    pub observable: Option<String>,
    pub psi: PsiSpec,
    pub run: RunOverrides,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn for_scenario(name: &str) -> Self {
        Self {
            scenario: name.to_string(),
            model: None,
            observable: None,
            psi: PsiSpec::Default,
            run: RunOverrides::default(),
            output: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| field("$", format!("malformed document: {e}")))?;
        let obj = value.as_object().ok_or_else(|| field("$", "expected an object"))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "scenario" | "model" | "observable" | "psi" | "run" | "output") {
                return Err(field(key, "unknown field"));
            }
        }
        let scenario = obj
            .get("scenario")
            .ok_or_else(|| field("scenario", "required field is missing"))?
            .as_str()
            .ok_or_else(|| field("scenario", "expected a string"))?
            .to_string();
        let observable = match obj.get("observable") {
            Some(v) => Some(v.as_str().ok_or_else(|| field("observable", "expected a string"))?.to_string()),
            None => None,
        };
        let psi = match obj.get("psi") {
            Some(v) => parse_psi(v)?,
            None => PsiSpec::Default,
        };
        let run = match obj.get("run") {
            Some(v) => parse_run(v)?,
            None => RunOverrides::default(),
        };
        let output = match obj.get("output") {
            Some(v) => Some(PathBuf::from(v.as_str().ok_or_else(|| field("output", "expected a string"))?)),
            None => None,
        };
        let config = Self {
            scenario,
            model: obj.get("model").cloned(),
            observable,
            psi,
            run,
            output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !SCENARIOS.iter().any(|s| s.name == self.scenario) {
            let names: Vec<&str> = SCENARIOS.iter().map(|s| s.name).collect();
            return Err(field(
                "scenario",
                format!("unknown scenario `{}` (known: {})", self.scenario, names.join(", ")),
            ));
        }
        let r = &self.run;
        if r.n == Some(0) {
            return Err(field("run.n", "must be positive"));
        }
        for (name, v) in [
            ("run.horizon", r.horizon),
            ("run.dt", r.dt),
            ("run.tolerance", r.tolerance),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(field(name, "must be a positive number"));
                }
            }
        }
        if let Some(a) = r.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(field("run.alpha", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

fn field(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_keys(obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), CliError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(field(&format!("{prefix}.{key}"), "unknown field"));
        }
    }
    Ok(())
}

fn get_str(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<String, CliError> {
    let path = format!("{prefix}.{key}");
    obj.get(key)
        .ok_or_else(|| field(&path, "required field is missing"))?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| field(&path, "expected a string"))
}

fn get_u64(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<u64>, CliError> {
    match obj.get(key) {
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| field(&format!("{prefix}.{key}"), "expected a nonnegative integer")),
        None => Ok(None),
    }
}

fn get_f64(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<f64>, CliError> {
    match obj.get(key) {
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| field(&format!("{prefix}.{key}"), "expected a number")),
        None => Ok(None),
    }
}

fn get_f64_array(obj: &Map<String, Value>, prefix: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    let path = format!("{prefix}.{key}");
    match obj.get(key) {
        None => Ok(None),
        Some(v) => {
            let arr = v.as_array().ok_or_else(|| field(&path, "expected an array of numbers"))?;
            arr.iter()
                .enumerate()
                .map(|(i, x)| x.as_f64().ok_or_else(|| field(&format!("{path}[{i}]"), "expected a number")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        }
    }
}

fn parse_psi(v: &Value) -> Result<PsiSpec, CliError> {
    let obj = v.as_object().ok_or_else(|| field("psi", "expected an object"))?;
    let kind = get_str(obj, "psi", "kind")?;
    match kind.as_str() {
        "eigenvector" => {
            check_keys(obj, "psi", &["kind", "observable", "index", "seed"])?;
            Ok(PsiSpec::Eigenvector {
                observable: get_str(obj, "psi", "observable")?,
                index: get_u64(obj, "psi", "index")?.unwrap_or(0) as usize,
                seed: get_u64(obj, "psi", "seed")?.unwrap_or(0),
            })
        }
        "sector_superposition" => {
            check_keys(obj, "psi", &["kind", "observable", "coefficients", "seed"])?;
            Ok(PsiSpec::SectorSuperposition {
                observable: get_str(obj, "psi", "observable")?,
                coefficients: get_f64_array(obj, "psi", "coefficients")?.unwrap_or_default(),
                seed: get_u64(obj, "psi", "seed")?.unwrap_or(0),
            })
        }
        "random" => {
            check_keys(obj, "psi", &["kind", "seed"])?;
            Ok(PsiSpec::Random {
                seed: get_u64(obj, "psi", "seed")?.unwrap_or(0),
            })
        }
        "amplitudes" => {
            check_keys(obj, "psi", &["kind", "re", "im"])?;
            let re = get_f64_array(obj, "psi", "re")?.ok_or_else(|| field("psi.re", "required field is missing"))?;
            let im = get_f64_array(obj, "psi", "im")?.unwrap_or_else(|| vec![0.0; re.len()]);
            if im.len() != re.len() {
                return Err(field("psi.im", format!("expected {} entries, found {}", re.len(), im.len())));
            }
            Ok(PsiSpec::Amplitudes { re, im })
        }
        other => Err(field(
            "psi.kind",
            format!("unknown state kind `{other}` (eigenvector, sector_superposition, random, amplitudes)"),
        )),
    }
}

fn parse_run(v: &Value) -> Result<RunOverrides, CliError> {
    let obj = v.as_object().ok_or_else(|| field("run", "expected an object"))?;
    check_keys(obj, "run", &["n", "horizon", "dt", "seed", "alpha", "tolerance"])?;
    Ok(RunOverrides {
        n: get_u64(obj, "run", "n")?.map(|n| n as usize),
        horizon: get_f64(obj, "run", "horizon")?,
        dt: get_f64(obj, "run", "dt")?,
        seed: get_u64(obj, "run", "seed")?,
        alpha: get_f64(obj, "run", "alpha")?,
        tolerance: get_f64(obj, "run", "tolerance")?,
    })
}

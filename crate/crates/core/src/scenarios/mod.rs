//! Named, reproducible experiments: the mean-but-not-energy sequence, the
//! `W¹K_φ` counterexample, the energy-to-modular demonstration and the
//! autonomous Orlicz–Sobolev approximation.
//!
//! Every scenario takes a JSON config (missing keys take defaults, unknown
//! keys are rejected), returns a [`ScenarioRun`], and is bit-for-bit
//! deterministic for a given config.

mod energy;
mod ex;
pub mod recipes;
mod w1k;

pub use energy::{
    energy_to_modular, modular_gaps, orlicz_sobolev, EnergyToModular, EnergyToModularConfig,
    OrliczSobolev, OrliczSobolevConfig,
};
pub use ex::{example_ex, ExConfig, ExOutcome, ExRow};
pub use w1k::{example_w1k, W1kConfig, W1kOutcome};

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::field::FieldError;
use crate::modular::ModularError;
use crate::nfunc::NFuncError;
use crate::smooth::SmoothError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    NFunc(#[from] NFuncError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// What an expected value rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// A formula evaluated exactly.
    ClosedForm,
    /// An independent computation (antiderivative, finite difference).
    Oracle,
    /// A trend or flag read off the run itself.
    Audit,
    /// Holds by construction.
    Trivial,
}

/// One expected outcome and how the run measured up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub basis: Basis,
    pub expected: String,
    pub computed: Option<f64>,
    pub tol: Option<f64>,
    pub passed: bool,
    /// Recorded only; does not affect [`ScenarioRun::passed`].
    #[serde(default = "yes")]
    pub asserted: bool,
}

fn yes() -> bool {
    true
}

impl Check {
    /// `|computed − expected| ≤ tol`.
    pub fn near(name: impl Into<String>, basis: Basis, expected: f64, computed: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            basis,
            expected: expected.to_string(),
            computed: Some(computed),
            tol: Some(tol),
            passed: (computed - expected).abs() <= tol,
            asserted: true,
        }
    }

    pub fn flag(name: impl Into<String>, basis: Basis, expected: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            basis,
            expected: expected.into(),
            computed: None,
            tol: None,
            passed,
            asserted: true,
        }
    }

    pub fn with_value(mut self, v: f64) -> Self {
        self.computed = Some(v);
        self
    }

    pub fn recorded(mut self) -> Self {
        self.asserted = false;
        self
    }
}

/// A CSV table of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Parses CSV text produced by one of the report writers.
    pub fn from_csv(name: impl Into<String>, bytes: &[u8]) -> Result<Self, ScenarioError> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(FieldError::from)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(FieldError::from)?;
        Ok(Self {
            name: name.into(),
            header,
            rows,
        })
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, ScenarioError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(FieldError::from)?;
        for row in &self.rows {
            w.write_record(row).map_err(FieldError::from)?;
        }
        w.into_inner().map_err(|e| ScenarioError::Io(e.into_error()))
    }
}

/// Result of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: String,
    /// The config with all defaults filled in.
    pub config: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub tables: Vec<Table>,
    /// Scenario-specific report body.
    pub report: Value,
}

impl ScenarioRun {
    fn new(scenario: &str, config: Value, checks: Vec<Check>, tables: Vec<Table>, report: Value) -> Self {
        let passed = checks.iter().filter(|c| c.asserted).all(|c| c.passed);
        Self {
            scenario: scenario.to_string(),
            config,
            checks,
            passed,
            tables,
            report,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.asserted && !c.passed)
    }

    /// Writes `config.json`, `report.json` and one CSV per table into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, bytes: Vec<u8>| -> Result<(), ScenarioError> {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            written.push(path);
            Ok(())
        };
        put("config.json".into(), serde_json::to_vec_pretty(&self.config)?)?;
        put("report.json".into(), serde_json::to_vec_pretty(self)?)?;
        for t in &self.tables {
            put(format!("{}.csv", t.name), t.to_csv()?)?;
        }
        Ok(written)
    }
}

/// Registry entry.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub default_config: Value,
}

pub const SCENARIOS: &[(&str, &str)] = &[
    ("example_ex", "mean convergence without energy convergence for φ(s) = e^s − 1 − s on (0,1)"),
    ("example_w1k", "u with N_φ(|u'|) finite and N_φ(2|u'|) infinite on (−1,1)"),
    ("energy_to_modular", "smoothing ladder: energy convergence gives N_φ(|Db_δ − Db|/2) → 0"),
    ("orlicz_sobolev", "autonomous smoothing of u(x): mean and energy convergence"),
];

fn defaults_of<C: Serialize + Default>() -> Value {
    serde_json::to_value(C::default()).expect("configs serialize")
}

pub fn list() -> Vec<ScenarioInfo> {
    SCENARIOS
        .iter()
        .map(|&(name, summary)| ScenarioInfo {
            name,
            summary,
            default_config: default_config(name).expect("registered"),
        })
        .collect()
}

pub fn default_config(name: &str) -> Result<Value, ScenarioError> {
    Ok(match name {
        "example_ex" => defaults_of::<ExConfig>(),
        "example_w1k" => defaults_of::<W1kConfig>(),
        "energy_to_modular" => defaults_of::<EnergyToModularConfig>(),
        "orlicz_sobolev" => defaults_of::<OrliczSobolevConfig>(),
        _ => return Err(ScenarioError::Unknown(name.to_string())),
    })
}

/// Parses a config, treating `null` as `{}`.
pub fn parse_config<C: DeserializeOwned>(config: &Value) -> Result<C, ScenarioError> {
    let v = if config.is_null() {
        Value::Object(Default::default())
    } else {
        config.clone()
    };
    serde_json::from_value(v).map_err(|e| ScenarioError::Config(e.to_string()))
}

/// Runs a registered scenario by name.
pub fn run(name: &str, config: &Value) -> Result<ScenarioRun, ScenarioError> {
    match name {
        "example_ex" => ex::run(&parse_config(config)?),
        "example_w1k" => w1k::run(&parse_config(config)?),
        "energy_to_modular" => energy::run_energy_to_modular(&parse_config(config)?),
        "orlicz_sobolev" => energy::run_orlicz_sobolev(&parse_config(config)?),
        _ => Err(ScenarioError::Unknown(name.to_string())),
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for info in list() {
            let v = default_config(info.name).unwrap();
            assert_eq!(v, info.default_config);
            let again = match info.name {
                "example_ex" => serde_json::to_value(parse_config::<ExConfig>(&v).unwrap()).unwrap(),
                "example_w1k" => serde_json::to_value(parse_config::<W1kConfig>(&v).unwrap()).unwrap(),
                "energy_to_modular" => {
                    serde_json::to_value(parse_config::<EnergyToModularConfig>(&v).unwrap()).unwrap()
                }
                _ => serde_json::to_value(parse_config::<OrliczSobolevConfig>(&v).unwrap()).unwrap(),
            };
            assert_eq!(v, again);
        }
        assert!(matches!(run("nope", &Value::Null), Err(ScenarioError::Unknown(_))));
        let bad = serde_json::json!({"h_ladder": [100.0], "colour": 1});
        assert!(matches!(run("example_ex", &bad), Err(ScenarioError::Config(_))));
    }

    #[test]
    fn check_constructors() {
        assert!(Check::near("a", Basis::Trivial, 1.0, 1.0 + 1e-9, 1e-8).passed);
        assert!(!Check::near("a", Basis::Trivial, 1.0, 1.1, 1e-8).passed);
        let run = ScenarioRun::new(
            "x",
            Value::Null,
            vec![Check::flag("f", Basis::Audit, "true", false).recorded()],
            vec![],
            Value::Null,
        );
        assert!(run.passed);
    }

    #[test]
    fn table_csv_round_trip() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1".into(), "diverged".into()]);
        let back = Table::from_csv("t", &t.to_csv().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}

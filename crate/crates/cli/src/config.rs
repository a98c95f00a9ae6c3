//! The per-run JSON document. Every field is optional; flags fill in or
//! override whatever the file sets.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orlicz::field::QuadratureSpec;
use orlicz::scenarios::{self, recipes};
use orlicz::NFunction;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const OUT_DIR_VAR: &str = "ORLICZ_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "orlicz-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Nfunc,
    Modular,
    Norm,
    Energy,
    Smooth,
    Scenario,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    /// Recipe name, or a path to a field CSV or JSON descriptor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec<f64>>,
    /// Evaluation points for `nfunc eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Smoothing working grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Weak-subadditivity constant for `nfunc verify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// `[lo, hi]` for `nfunc delta2` and the `nfunc verify` grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finite_measure: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Passed through to the scenario's own config parser.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_config: Option<Value>,
}

/// Sets `slot` when the flag was given.
pub fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("config line {}, column {}: {e}", e.line(), e.column())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Records the command, refusing a file written for another one.
    pub fn bind(&mut self, kind: CommandKind) -> Result<()> {
        match self.command {
            Some(k) if k != kind => bail!("config is for `{k:?}`, not `{kind:?}`"),
            _ => self.command = Some(kind),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(phi) = &self.phi {
            phi.parse::<NFunction>().with_context(|| format!("phi `{phi}`"))?;
        }
        if let Some(f) = &self.field {
            if !is_path(f) && recipes::space_time(f).is_err() && recipes::spatial(f).is_err() {
                bail!("unknown field recipe `{f}` (known: {})", field_names().join(", "));
            }
        }
        if let Some(w) = &self.weight {
            if !recipes::WEIGHTS.iter().any(|(n, _)| n == w) {
                bail!("unknown weight recipe `{w}`");
            }
        }
        if let Some(s) = &self.scenario {
            scenarios::default_config(s)?;
        }
        if let Some(q) = &self.quadrature {
            q.validate()?;
        }
        if let Some(d) = &self.deltas {
            if d.is_empty() || d.iter().any(|x| !(*x > 0.0)) || d.windows(2).any(|w| !(w[1] < w[0])) {
                bail!("deltas {d:?} must be positive and strictly decreasing");
            }
        }
        if let Some(t) = &self.t {
            if t.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                bail!("evaluation points {t:?} must be finite and nonnegative");
            }
        }
        for (name, v) in [("lambda", self.lambda), ("tol", self.tol), ("k", self.k), ("fraction", self.fraction)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    bail!("{name} = {v} must be positive");
                }
            }
        }
        if let Some([lo, hi]) = self.range {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                bail!("range [{lo}, {hi}] must satisfy 0 < lo < hi");
            }
        }
        Ok(())
    }

    /// Flag, then config, then the environment, then `./orlicz-out`.
    pub fn out_root(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn require_phi(&self) -> Result<NFunction> {
        let s = self.phi.as_deref().context("no N-function given (--phi or \"phi\")")?;
        Ok(s.parse()?)
    }
}

pub fn is_path(s: &str) -> bool {
    s.ends_with(".csv") || s.ends_with(".json")
}

pub fn field_names() -> Vec<&'static str> {
    recipes::SPACE_TIME.iter().chain(recipes::SPATIAL).map(|r| r.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_normalized() {
        let text = r#"{
            "command": "smooth", "phi": "exp_star", "field": "tsin3x",
            "deltas": [0.1, 0.01], "resolution": 32, "seed": 7,
            "quadrature": {"resolution": 32, "grading_depth": 10},
            "scenario_config": {"tol": 0.5}
        }"#;
        let a = ExperimentConfig::parse(text).unwrap();
        let b = ExperimentConfig::parse(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        a.validate().unwrap();
        assert_eq!(ExperimentConfig::parse("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let e = ExperimentConfig::parse("{\n  \"phi\": \"exp_star\",\n  \"colour\": 1\n}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let bad = |t: &str| ExperimentConfig::parse(t).unwrap().validate().is_err();
        assert!(bad(r#"{"deltas": [0.01, 0.1]}"#));
        assert!(bad(r#"{"tol": 0}"#));
        assert!(bad(r#"{"field": "nope"}"#));
        assert!(bad(r#"{"weight": "heavy"}"#));
        assert!(bad(r#"{"scenario": "nope"}"#));
        assert!(bad(r#"{"phi": "exp:gamma=2,tau=20"}"#));
        assert!(!bad(r#"{"field": "data/u.csv", "weight": "one_plus_x2"}"#));
    }

    #[test]
    fn bind_refuses_other_commands() {
        let mut c = ExperimentConfig::parse(r#"{"command": "norm"}"#).unwrap();
        assert!(c.bind(CommandKind::Modular).is_err());
        assert!(c.bind(CommandKind::Norm).is_ok());
    }
}

//! Command bodies. Each takes a resolved [`ExperimentConfig`] and returns the
//! JSON printed on stdout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use orlicz::field::{Field, QuadratureSpec};
use orlicz::modular::{luxemburg_norm, scaled_modular, weighted_energy, ModularError};
use orlicz::nfunc::{
    check_convexity_grid, check_difference_quotients, check_submultiplicativity, check_weak_subadditivity,
    classify_delta2, find_tau0, tau0_residual,
};
use orlicz::scenarios::{self, modular_gaps, recipes, ScenarioError};
use orlicz::smooth::{subadditivity_constant, verify_energy_convergence, LadderSettings, SmoothError, SmoothingOptions};
use orlicz::Generator;
use serde_json::{json, Value};

use crate::config::{field_names, is_path, ExperimentConfig};

/// A computed answer that should still end the process with a nonzero status.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub message: String,
    pub report: Value,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub const EXIT_ASSERTION: i32 = 2;
pub const EXIT_PLAN: i32 = 3;

fn plan_failure(e: &SmoothError) -> Option<Exit> {
    matches!(e, SmoothError::Plan { .. }).then(|| Exit {
        code: EXIT_PLAN,
        message: format!("smoothing plan failed: {e}"),
        report: Value::Null,
    })
}

const DEFAULT_T: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
const DEFAULT_RANGE: [f64; 2] = [1e-3, 40.0];

pub fn nfunc_eval(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let ts = cfg.t.clone().unwrap_or_else(|| DEFAULT_T.to_vec());
    let rows: Vec<Value> = ts
        .iter()
        .map(|&t| match (phi.eval(t), phi.deriv1(t), phi.deriv2(t)) {
            (Ok(v), Ok(d1), Ok(d2)) => json!({"t": t, "value": v, "deriv1": d1, "deriv2": d2}),
            (v, _, _) => json!({"t": t, "value": v.ok(), "error": "saturated"}),
        })
        .collect();
    Ok(json!({"phi": phi.to_string(), "rows": rows}))
}

pub fn nfunc_tau0() -> Value {
    let tau0: f64 = find_tau0();
    json!({"tau0": tau0, "residual": tau0_residual(tau0)})
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn nfunc_verify(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let [lo, hi] = cfg.range.unwrap_or(DEFAULT_RANGE);
    let mut grid = vec![0.0];
    grid.extend(log_grid(lo, hi, 400));
    let coarse = log_grid(lo, hi, 40);
    let pairs: Vec<(f64, f64)> = coarse.iter().flat_map(|&a| coarse.iter().map(move |&b| (a, b))).collect();
    let k = cfg.k.unwrap_or_else(|| subadditivity_constant(&phi));
    let mut reports = vec![
        serde_json::to_value(check_convexity_grid(&phi, &grid))?,
        serde_json::to_value(check_difference_quotients(&phi, &pairs))?,
        serde_json::to_value(check_weak_subadditivity(&phi, k, &pairs))?,
    ];
    if let Some((gamma, tau)) = phi.gamma_tau() {
        reports.push(serde_json::to_value(check_submultiplicativity(gamma, tau, &pairs)?)?);
    }
    let vanishes = phi.eval(0.0)? == 0.0;
    let passed = vanishes && reports.iter().all(|r| r["passed"] == json!(true));
    let report = json!({
        "phi": phi.to_string(),
        "passed": passed,
        "vanishes_at_zero": vanishes,
        "k": k,
        "checks": reports,
    });
    if passed {
        Ok(report)
    } else {
        Err(Exit {
            code: EXIT_ASSERTION,
            message: format!("{} failed at least one property check", phi),
            report,
        }
        .into())
    }
}

pub fn nfunc_delta2(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let [lo, hi] = cfg.range.unwrap_or(DEFAULT_RANGE);
    let r = classify_delta2(&phi, (lo, hi), cfg.finite_measure.unwrap_or(false))?;
    Ok(json!({"phi": phi.to_string(), "report": r}))
}

/// A recipe (space-time first, then spatial) or a stored CSV/JSON field.
pub fn load_field(spec: &str) -> Result<Field<f64>> {
    if is_path(spec) {
        let path = Path::new(spec);
        return if spec.ends_with(".json") {
            Field::load(path).with_context(|| format!("loading {spec}"))
        } else {
            let file = fs::File::open(path).with_context(|| format!("opening {spec}"))?;
            Field::read_csv(file).with_context(|| format!("reading {spec}"))
        };
    }
    recipes::space_time(spec)
        .or_else(|_| recipes::spatial(spec))
        .map_err(|_| anyhow::anyhow!("unknown field `{spec}` (known: {})", field_names().join(", ")))
}

fn field_of(cfg: &ExperimentConfig) -> Result<(String, Field<f64>)> {
    let name = cfg.field.clone().context("no field given (--field or \"field\")")?;
    let f = load_field(&name)?;
    Ok((name, f))
}

fn quadrature(cfg: &ExperimentConfig) -> QuadratureSpec<f64> {
    cfg.quadrature.clone().unwrap_or_default()
}

pub fn modular(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let (name, u) = field_of(cfg)?;
    let q = quadrature(cfg);
    let lambda = cfg.lambda.unwrap_or(1.0);
    let w = cfg.weight.as_deref().map(|w| recipes::weight(w, u.domain())).transpose()?;
    let m = scaled_modular(&phi, &u, lambda, w.as_ref(), &q)?;
    Ok(json!({
        "phi": phi.to_string(),
        "field": name,
        "lambda": lambda,
        "weight": cfg.weight,
        "diverged": m.is_diverged(),
        "result": m,
    }))
}

pub fn norm(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let (name, u) = field_of(cfg)?;
    let q = quadrature(cfg);
    let tol = cfg.tol.unwrap_or(1e-10);
    let (norm, note) = match luxemburg_norm(&phi, &u, &q, tol) {
        Ok(v) => (Some(v), None),
        Err(ModularError::Bracket(msg)) => (None, Some(msg)),
        Err(e) => return Err(e.into()),
    };
    Ok(json!({
        "phi": phi.to_string(),
        "field": name,
        "norm": norm,
        "finite": norm.is_some(),
        "note": note,
        "tol": tol,
        "quadrature": q,
    }))
}

/// Interval fields are lifted to `b(t, x) = u(x)` on `(0,1) × Ω`.
fn space_time_field(u: Field<f64>) -> Result<Field<f64>> {
    Ok(if u.domain().dim() == 1 { recipes::autonomous(&u)? } else { u })
}

pub fn energy(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let (name, b) = field_of(cfg)?;
    let b = space_time_field(b)?;
    let q = quadrature(cfg);
    let weight = cfg.weight.clone().unwrap_or_else(|| "unit".into());
    let w = recipes::weight(&weight, b.domain())?;
    let db = b.finite_diff_gradient()?;
    let m = weighted_energy(&phi, &w, &db, &q)?;
    Ok(json!({
        "phi": phi.to_string(),
        "field": name,
        "weight": weight,
        "diverged": m.is_diverged(),
        "result": m,
    }))
}

struct RunDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl RunDir {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }

    fn put_json(&mut self, name: &str, v: &impl serde::Serialize) -> Result<()> {
        self.put(name, serde_json::to_vec_pretty(v)?)
    }

    fn save_field(&mut self, f: &Field<f64>, stem: &str) -> Result<()> {
        let json = f.save(&self.dir, stem)?;
        self.files.push(json.with_extension("csv"));
        self.files.push(json);
        Ok(())
    }
}

pub fn smooth_run(cfg: &ExperimentConfig) -> Result<Value> {
    let phi = cfg.require_phi()?;
    let (name, b) = field_of(cfg)?;
    let b = space_time_field(b)?;
    let weight = cfg.weight.clone().unwrap_or_else(|| "unit".into());
    let w = recipes::weight(&weight, b.domain())?;
    let deltas = cfg.deltas.clone().unwrap_or_else(|| vec![1e-2]);
    let mut opts = SmoothingOptions::new(deltas[0]);
    if let Some(n) = cfg.resolution {
        opts.resolution = n;
    }
    if let Some(k) = cfg.kernel_cells {
        opts.kernel_cells = k;
    }
    if let Some(f) = cfg.fraction {
        opts.fraction = f;
    }
    let defaults = LadderSettings::<f64>::default();
    let settings = LadderSettings {
        tol: cfg.tol.unwrap_or(defaults.tol),
        audit_points: cfg.audit_points.unwrap_or(defaults.audit_points),
        seed: cfg.seed.unwrap_or(defaults.seed),
        k_phi: cfg.k,
    };
    let conv = match verify_energy_convergence(&b, &phi, &w, &deltas, &opts, &settings) {
        Ok(c) => c,
        Err(e) => return Err(plan_failure(&e).map_or_else(|| e.into(), Into::into)),
    };
    let mut out = RunDir::create(cfg.out_root().join("smooth"))?;
    out.put("config.json", cfg.to_json().into_bytes())?;
    for (k, plan) in conv.plans.iter().enumerate() {
        out.put_json(&format!("plan_{k}.json"), plan)?;
    }
    out.put_json("energy.json", &conv.report)?;
    let mut csv = Vec::new();
    conv.report.write_csv(&mut csv)?;
    out.put("energy.csv", csv)?;
    let modular = if phi.strictly_convex() {
        let hs: Vec<f64> = deltas.iter().map(|d| 1.0 / d).collect();
        let q = QuadratureSpec::uniform(opts.resolution);
        let r = modular_gaps(&phi, &hs, &conv.db_delta, &conv.db, settings.tol, &q)?;
        out.put_json("convergence.json", &r)?;
        let mut csv = Vec::new();
        r.write_csv(&mut csv)?;
        out.put("convergence.csv", csv)?;
        Some(r.flags)
    } else {
        None
    };
    out.save_field(&conv.b, "b")?;
    out.save_field(&conv.db, "db")?;
    for k in 0..deltas.len() {
        out.save_field(&conv.b_delta[k], &format!("b_delta_{k}"))?;
        out.save_field(&conv.db_delta[k], &format!("db_delta_{k}"))?;
    }
    Ok(json!({
        "field": name,
        "phi": phi.to_string(),
        "weight": weight,
        "deltas": deltas,
        "budgets_met": conv.plans.iter().all(|p| p.all_budgets_met()),
        "energy_converges": conv.report.energy_converges,
        "within_budgets": conv.report.within_budgets,
        "modular_flags": modular,
        "run_dir": out.dir,
        "files": out.files,
    }))
}

pub fn scenario_list() -> Value {
    json!(scenarios::list())
}

pub fn scenario_run(cfg: &ExperimentConfig) -> Result<Value> {
    let name = cfg.scenario.as_deref().context("no scenario named")?;
    let mut sc = cfg.scenario_config.clone().unwrap_or(Value::Null);
    if let Some(seed) = cfg.seed {
        if scenarios::default_config(name)?.get("seed").is_some() {
            if sc.is_null() {
                sc = json!({});
            }
            sc["seed"] = json!(seed);
        }
    }
    let run = match scenarios::run(name, &sc) {
        Ok(r) => r,
        Err(ScenarioError::Smooth(e)) => {
            return Err(plan_failure(&e).map_or_else(|| ScenarioError::Smooth(e).into(), Into::into))
        }
        Err(e) => return Err(e.into()),
    };
    let dir = cfg.out_root().join(name);
    let files = run.write_to(&dir)?;
    let failures: Vec<&str> = run.failures().map(|c| c.name.as_str()).collect();
    let summary = json!({
        "scenario": name,
        "passed": run.passed,
        "failures": failures,
        "run_dir": dir,
        "files": files,
    });
    if run.passed {
        Ok(summary)
    } else {
        Err(Exit {
            code: EXIT_ASSERTION,
            message: format!("scenario `{name}` failed: {}", failures.join("; ")),
            report: summary,
        }
        .into())
    }
}

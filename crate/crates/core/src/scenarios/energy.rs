//! Smoothing-ladder demonstrations: modular convergence of `Db_δ` at
//! `λ = 2` for strictly convex `φ`, and the autonomous `b(t,x) = u(x)` case.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{recipes, strictly_decreasing, Basis, Check, ScenarioError, ScenarioRun, Table};
use crate::field::{Field, QuadratureSpec};
use crate::modular::{classify_sequence, trend_to_zero, ClassifyOptions, ConvergenceReport};
use crate::nfunc::{Generator, NFunction};
use crate::smooth::{verify_energy_convergence, EnergyConvergence, EnergyReport, LadderSettings, SmoothingOptions};

/// `N_φ((Db_h − Db)/λ)` for `λ ∈ {1, 2}` along `hs`, with the usual flags.
pub fn modular_gaps<G: Generator<f64> + ?Sized>(
    phi: &G,
    hs: &[f64],
    db_h: &[Field<f64>],
    db: &Field<f64>,
    tol: f64,
    q: &QuadratureSpec<f64>,
) -> Result<ConvergenceReport<f64>, ScenarioError> {
    if !phi.strictly_convex() {
        return Err(ScenarioError::Config(format!("{} is not strictly convex", phi.label())));
    }
    Ok(classify_sequence(phi, hs, db_h, db, &ClassifyOptions::new(vec![1.0, 2.0], tol), q)?)
}

fn lambda2(report: &ConvergenceReport<f64>) -> Vec<Option<f64>> {
    let k = report.lambdas.iter().position(|&l| l == 2.0).expect("λ = 2 present");
    report.entries.iter().map(|e| e.scaled[k]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyToModularConfig {
    pub b: String,
    pub phi: String,
    pub weight: String,
    pub deltas: Vec<f64>,
    pub resolution: usize,
    pub kernel_cells: usize,
    pub audit_points: usize,
    pub seed: u64,
    /// Final `N_φ(|Db_δ − Db|/2)` must fall below this.
    pub tol: f64,
}

impl Default for EnergyToModularConfig {
    fn default() -> Self {
        Self {
            b: "tsin3x".into(),
            phi: "tilde_exp:gamma=0,tau=2tau0".into(),
            weight: "unit".into(),
            deltas: vec![1e-1, 1e-2, 1e-3],
            resolution: 64,
            kernel_cells: 16,
            audit_points: 1000,
            seed: 0,
            tol: 1e-3,
        }
    }
}

fn ladder(
    b: &Field<f64>,
    phi: &NFunction<f64>,
    weight: &str,
    deltas: &[f64],
    resolution: usize,
    kernel_cells: usize,
    audit_points: usize,
    seed: u64,
) -> Result<EnergyConvergence<f64>, ScenarioError> {
    let w = recipes::weight(weight, b.domain())?;
    let opts = SmoothingOptions {
        kernel_cells,
        ..SmoothingOptions::new(deltas[0]).with_resolution(resolution)
    };
    let settings = LadderSettings {
        audit_points,
        seed,
        ..Default::default()
    };
    Ok(verify_energy_convergence(b, phi, &w, deltas, &opts, &settings)?)
}

fn hs(deltas: &[f64]) -> Vec<f64> {
    deltas.iter().map(|d| 1.0 / d).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyToModular {
    pub energy: EnergyReport<f64>,
    pub modular: ConvergenceReport<f64>,
    pub budgets_met: bool,
}

pub fn energy_to_modular(cfg: &EnergyToModularConfig) -> Result<EnergyToModular, ScenarioError> {
    let phi: NFunction<f64> = cfg.phi.parse()?;
    if !phi.strictly_convex() {
        return Err(ScenarioError::Config(format!("{} is not strictly convex", phi.label())));
    }
    let b = recipes::space_time(&cfg.b)?;
    let run = ladder(&b, &phi, &cfg.weight, &cfg.deltas, cfg.resolution, cfg.kernel_cells, cfg.audit_points, cfg.seed)?;
    let modular = modular_gaps(
        &phi,
        &hs(&cfg.deltas),
        &run.db_delta,
        &run.db,
        cfg.tol,
        &QuadratureSpec::uniform(cfg.resolution),
    )?;
    Ok(EnergyToModular {
        budgets_met: run.plans.iter().all(|p| p.all_budgets_met()),
        energy: run.report,
        modular,
    })
}

fn tables(energy: &EnergyReport<f64>, conv: &ConvergenceReport<f64>, name: &str) -> Result<Vec<Table>, ScenarioError> {
    let mut e = Vec::new();
    energy.write_csv(&mut e)?;
    let mut c = Vec::new();
    conv.write_csv(&mut c)?;
    Ok(vec![Table::from_csv("energy", &e)?, Table::from_csv(name, &c)?])
}

pub(super) fn run_energy_to_modular(cfg: &EnergyToModularConfig) -> Result<ScenarioRun, ScenarioError> {
    let out = energy_to_modular(cfg)?;
    let gaps = lambda2(&out.modular);
    let finite: Option<Vec<f64>> = gaps.iter().copied().collect();
    let last = finite.as_ref().and_then(|v| v.last().copied());
    let mut checks = vec![
        Check::flag("plans meet all budgets", Basis::Audit, "true", out.budgets_met),
        Check::flag(
            "N(|Db_δ − Db|/2) strictly decreasing",
            Basis::Audit,
            "decreasing",
            finite.as_deref().is_some_and(strictly_decreasing),
        ),
    ];
    checks.push(match last {
        Some(v) => Check::flag("final N(|Db_δ − Db|/2) below tol", Basis::Audit, format!("< {}", cfg.tol), v < cfg.tol)
            .with_value(v),
        None => Check::flag("final N(|Db_δ − Db|/2) below tol", Basis::Audit, format!("< {}", cfg.tol), false),
    });
    checks.push(Check::flag(
        "energy converges (‖Db_δ − Db‖ ≤ δ, sup|z_δ| < δ/2)",
        Basis::Audit,
        "true",
        out.energy.within_budgets,
    ));
    let t = tables(&out.energy, &out.modular, "modular")?;
    Ok(ScenarioRun::new("energy_to_modular", serde_json::to_value(cfg)?, checks, t, json!(out)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrliczSobolevConfig {
    pub u: String,
    pub phi: String,
    pub deltas: Vec<f64>,
    pub resolution: usize,
    pub kernel_cells: usize,
    pub audit_points: usize,
    pub seed: u64,
    /// Final mean modular below `tol`; final energy gap below `tol·max(1, N_φ(|Du|))`.
    pub tol: f64,
}

impl Default for OrliczSobolevConfig {
    fn default() -> Self {
        Self {
            u: "xlog".into(),
            phi: "tilde_exp:gamma=0,tau=tau0".into(),
            deltas: vec![1e-1, 1e-2, 1e-3],
            resolution: 64,
            kernel_cells: 16,
            audit_points: 200,
            seed: 0,
            tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrliczSobolev {
    pub energy: EnergyReport<f64>,
    /// `u_δ → u` in mean, modular and (recorded) norm.
    pub values: ConvergenceReport<f64>,
}

pub fn orlicz_sobolev(cfg: &OrliczSobolevConfig) -> Result<OrliczSobolev, ScenarioError> {
    let phi: NFunction<f64> = cfg.phi.parse()?;
    let b = recipes::autonomous(&recipes::spatial(&cfg.u)?)?;
    let run = ladder(&b, &phi, "unit", &cfg.deltas, cfg.resolution, cfg.kernel_cells, cfg.audit_points, cfg.seed)?;
    let values = classify_sequence(
        &phi,
        &hs(&cfg.deltas),
        &run.b_delta,
        &run.b,
        &ClassifyOptions::new(vec![1.0], cfg.tol),
        &QuadratureSpec::uniform(cfg.resolution),
    )?;
    Ok(OrliczSobolev {
        energy: run.report,
        values,
    })
}

pub(super) fn run_orlicz_sobolev(cfg: &OrliczSobolevConfig) -> Result<ScenarioRun, ScenarioError> {
    let out = orlicz_sobolev(cfg)?;
    let means: Vec<Option<f64>> = out.values.entries.iter().map(|e| e.mean).collect();
    let gaps: Vec<Option<f64>> = out.energy.entries.iter().map(|e| Some(e.energy_gap)).collect();
    let energy_tol = cfg.tol * out.energy.reference_energy.max(1.0);
    let mut checks = vec![
        Check::flag("N(u_δ − u) → 0", Basis::Audit, format!("trend below {}", cfg.tol), trend_to_zero(&means, cfg.tol)),
        Check::flag(
            "N(|Du_δ|) → N(|Du|)",
            Basis::Audit,
            format!("trend below {energy_tol}"),
            trend_to_zero(&gaps, energy_tol),
        ),
    ];
    if let Some(v) = means.last().copied().flatten() {
        checks[0] = checks[0].clone().with_value(v);
    }
    if let Some(v) = gaps.last().copied().flatten() {
        checks[1] = checks[1].clone().with_value(v);
    }
    checks.push(
        Check::flag("Luxemburg norm trend", Basis::Audit, "recorded", out.values.flags.norm).recorded(),
    );
    let t = tables(&out.energy, &out.values, "values")?;
    Ok(ScenarioRun::new("orlicz_sobolev", serde_json::to_value(cfg)?, checks, t, json!(out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Domain, Shape};

    fn square() -> Domain<f64> {
        Domain::space_time((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    fn grad_field(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Field<f64> {
        Field::analytic(square(), Shape::Matrix { rows: 1, cols: 1 }, move |p, o| o[0] = f(p)).unwrap()
    }

    #[test]
    fn identical_ladder_has_zero_gaps() {
        let db = grad_field(|p| (3.0 * p[1]).cos());
        let phi = NFunction::exp_star();
        let r = modular_gaps(&phi, &[1.0, 2.0], &[db.clone(), db.clone()], &db, 1e-3, &QuadratureSpec::uniform(32)).unwrap();
        assert!(lambda2(&r).iter().all(|v| *v == Some(0.0)));
        assert_eq!(r.flags.modular, Some(1.0));
    }

    #[test]
    fn power_two_closed_form() {
        let db = grad_field(|p| p[0]);
        let hs = [1.0, 10.0, 100.0];
        let dbh: Vec<Field<f64>> = hs
            .iter()
            .map(|&h| grad_field(move |p| p[0] + p[1] / h))
            .collect();
        let phi = NFunction::power(2.0).unwrap();
        let r = modular_gaps(&phi, &hs, &dbh, &db, 1e-3, &QuadratureSpec::uniform(64)).unwrap();
        for (v, h) in lambda2(&r).iter().zip(hs) {
            // ∫ (x/(2h))² over the unit square.
            let exact = 1.0 / (12.0 * h * h);
            assert!((v.unwrap() - exact).abs() < 1e-4 * exact, "{v:?} vs {exact}");
        }
    }

    #[test]
    fn rejects_non_strict() {
        let db = grad_field(|_| 0.0);
        let phi = NFunction::power(1.0).unwrap();
        assert!(modular_gaps(&phi, &[1.0], std::slice::from_ref(&db), &db, 1e-3, &QuadratureSpec::uniform(8)).is_err());
    }

    #[test]
    fn linear_autonomous_is_reproduced() {
        let cfg = OrliczSobolevConfig {
            u: "linear".into(),
            deltas: vec![1e-1, 1e-2],
            resolution: 16,
            audit_points: 20,
            ..Default::default()
        };
        let out = orlicz_sobolev(&cfg).unwrap();
        for e in &out.energy.entries {
            assert!(e.energy_gap < e.delta);
            assert!(e.db_l1 <= e.delta);
        }
    }
}

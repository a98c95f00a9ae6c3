//! `f = x^{-1/2}`, `f_h` its truncation-and-damping, `u = log f`,
//! `u_h = u + log(1 + f_h)` on `(0,1)` with `φ(s) = e^s − 1 − s`:
//! `N_φ(u_h − u) → 0` while `N_φ(u_h) − N_φ(u) → 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{strictly_decreasing, Basis, Check, ScenarioError, ScenarioRun, Table};
use crate::field::{integrate, Domain, Field, QuadratureSpec};
use crate::modular::{classify_sequence, modular, ClassifyOptions, ConvergenceReport};
use crate::nfunc::{Family, NFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExConfig {
    pub h_ladder: Vec<f64>,
    pub phi: String,
    pub quadrature: QuadratureSpec<f64>,
    /// Scales for the modular-convergence column.
    pub lambdas: Vec<f64>,
    /// Trend threshold of the convergence report.
    pub trend_tol: f64,
    /// Tolerance against closed-form integrals.
    pub integral_tol: f64,
    /// Tolerance of the modular identities.
    pub identity_tol: f64,
}

impl Default for ExConfig {
    fn default() -> Self {
        Self {
            h_ladder: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            phi: "tilde_exp:gamma=0,tau=tau0".into(),
            quadrature: QuadratureSpec::default(),
            lambdas: vec![1.0, 2.0],
            trend_tol: 2e-2,
            integral_tol: 1e-4,
            identity_tol: 2e-3,
        }
    }
}

/// One ladder rung of the integral table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExRow {
    pub h: f64,
    pub int_f_h: f64,
    pub int_log1p_f_h: f64,
    pub int_f_f_h: f64,
    /// `N_φ(u_h − u)`.
    pub mean_modular: f64,
    /// `N_φ(u_h) − N_φ(u)`.
    pub energy_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExOutcome {
    pub int_f: f64,
    pub int_log_f: f64,
    /// `N_φ(u)`.
    pub modular_u: f64,
    pub rows: Vec<ExRow>,
    pub report: ConvergenceReport<f64>,
}

fn unit() -> Domain<f64> {
    Domain::interval(0.0, 1.0).expect("valid interval")
}

pub(crate) fn f_h(h: f64, x: f64) -> f64 {
    if x < 1.0 / h {
        2.0 * h.sqrt() / h.ln()
    } else {
        1.0 / (h.ln() * x.sqrt())
    }
}

/// `∫₀¹ f_h` from the piecewise antiderivative.
pub fn int_f_h_exact(h: f64) -> f64 {
    2.0 / (h.sqrt() * h.ln()) + (2.0 - 2.0 / h.sqrt()) / h.ln()
}

/// `∫₀¹ f·f_h = 4/log h + 1`.
pub fn int_f_f_h_exact(h: f64) -> f64 {
    4.0 / h.ln() + 1.0
}

fn value(f: &Field<f64>, q: &QuadratureSpec<f64>, what: &str) -> Result<f64, ScenarioError> {
    integrate(f, q)?
        .value()
        .ok_or_else(|| ScenarioError::Config(format!("{what} diverged")))
}

fn u() -> Field<f64> {
    Field::scalar_fn(unit(), |p| -0.5 * p[0].ln())
}

fn u_h(h: f64) -> Field<f64> {
    Field::scalar_fn(unit(), move |p| -0.5 * p[0].ln() + f_h(h, p[0]).ln_1p()).with_kink(0, 1.0 / h)
}

pub fn example_ex(cfg: &ExConfig) -> Result<ExOutcome, ScenarioError> {
    if cfg.h_ladder.is_empty() || cfg.h_ladder.iter().any(|&h| !(h >= 10.0)) {
        return Err(ScenarioError::Config("h ladder needs values ≥ 10".into()));
    }
    if cfg.h_ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ScenarioError::Config("h ladder must be strictly increasing".into()));
    }
    let phi: NFunction<f64> = cfg.phi.parse()?;
    let q = &cfg.quadrature;
    let int_f = value(&Field::scalar_fn(unit(), |p| p[0].powf(-0.5)), q, "∫f")?;
    let int_log_f = value(&u(), q, "∫log f")?;
    let modular_u = modular(&phi, &u(), q)?
        .value()
        .ok_or_else(|| ScenarioError::Config("N_φ(u) diverged".into()))?;
    let rows = cfg
        .h_ladder
        .par_iter()
        .map(|&h| {
            let kinked = |g: fn(f64, f64) -> f64| Field::scalar_fn(unit(), move |p| g(h, p[0])).with_kink(0, 1.0 / h);
            let int_f_h = value(&kinked(f_h), q, "∫f_h")?;
            let int_log1p_f_h = value(&kinked(|h, x| f_h(h, x).ln_1p()), q, "∫log(1+f_h)")?;
            let int_f_f_h = value(&kinked(|h, x| f_h(h, x) / x.sqrt()), q, "∫f·f_h")?;
            let mean_modular = modular(&phi, &u_h(h).sub(&u())?, q)?
                .value()
                .ok_or_else(|| ScenarioError::Config("N_φ(u_h − u) diverged".into()))?;
            let nh = modular(&phi, &u_h(h), q)?
                .value()
                .ok_or_else(|| ScenarioError::Config("N_φ(u_h) diverged".into()))?;
            Ok(ExRow {
                h,
                int_f_h,
                int_log1p_f_h,
                int_f_f_h,
                mean_modular,
                energy_gap: nh - modular_u,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let us: Vec<Field<f64>> = cfg.h_ladder.iter().map(|&h| u_h(h)).collect();
    let report = classify_sequence(
        &phi,
        &cfg.h_ladder,
        &us,
        &u(),
        &ClassifyOptions::new(cfg.lambdas.clone(), cfg.trend_tol),
        q,
    )?;
    Ok(ExOutcome {
        int_f,
        int_log_f,
        modular_u,
        rows,
        report,
    })
}

fn checks(cfg: &ExConfig, out: &ExOutcome, phi: &NFunction<f64>) -> Vec<Check> {
    let (it, id) = (cfg.integral_tol, cfg.identity_tol);
    let mut c = vec![
        Check::near("int_f", Basis::ClosedForm, 2.0, out.int_f, it),
        Check::near("int_log_f", Basis::ClosedForm, 0.5, out.int_log_f, it),
    ];
    let exp_minus_one = matches!(phi.family(), Family::TildeExpGammaTau { gamma, .. } if gamma == 0.0) && phi.scale() == 1.0;
    if exp_minus_one {
        c.push(Check::near("modular_u", Basis::ClosedForm, 0.5, out.modular_u, it));
    }
    for r in &out.rows {
        c.push(Check::near(format!("int_f_f_h[h={}]", r.h), Basis::ClosedForm, int_f_f_h_exact(r.h), r.int_f_f_h, it));
        c.push(Check::near(format!("int_f_h[h={}]", r.h), Basis::Oracle, int_f_h_exact(r.h), r.int_f_h, it));
        if exp_minus_one {
            c.push(Check::near(
                format!("energy_identity[h={}]", r.h),
                Basis::ClosedForm,
                r.int_f_f_h - r.int_log1p_f_h,
                r.energy_gap,
                id,
            ));
            c.push(Check::near(
                format!("mean_identity[h={}]", r.h),
                Basis::ClosedForm,
                r.int_f_h - r.int_log1p_f_h,
                r.mean_modular,
                id,
            ));
        }
    }
    let means: Vec<f64> = out.rows.iter().map(|r| r.mean_modular).collect();
    let dist: Vec<f64> = out.rows.iter().map(|r| (r.energy_gap - 1.0).abs()).collect();
    c.push(Check::flag("mean_modular strictly decreasing", Basis::Audit, "decreasing", strictly_decreasing(&means)));
    c.push(Check::flag(
        "energy_gap approaches 1 from above",
        Basis::Audit,
        "|gap − 1| decreasing, gap > 1",
        strictly_decreasing(&dist) && out.rows.iter().all(|r| r.energy_gap > 1.0),
    ));
    c.push(Check::flag("report: mean convergence", Basis::Audit, "true", out.report.flags.mean));
    c.push(Check::flag("report: no energy convergence", Basis::Audit, "false", !out.report.flags.energy));
    c
}

pub(super) fn run(cfg: &ExConfig) -> Result<ScenarioRun, ScenarioError> {
    let out = example_ex(cfg)?;
    let phi: NFunction<f64> = cfg.phi.parse()?;
    let mut table = Table::new(
        "integrals",
        &["h", "int_f_h", "int_log1p_f_h", "int_f_f_h", "mean_modular", "energy_gap"],
    );
    for r in &out.rows {
        table.push(
            [r.h, r.int_f_h, r.int_log1p_f_h, r.int_f_f_h, r.mean_modular, r.energy_gap]
                .iter()
                .map(f64::to_string)
                .collect(),
        );
    }
    let mut conv = Vec::new();
    out.report.write_csv(&mut conv)?;
    let tables = vec![table, Table::from_csv("convergence", &conv)?];
    Ok(ScenarioRun::new(
        "example_ex",
        serde_json::to_value(cfg)?,
        checks(cfg, &out, &phi),
        tables,
        json!(out),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: [[f64; 6]; 5] = [
        [1e2, 0.434294481903, 0.333742203295, 1.86858896381, 0.100552278609, 1.53484676051],
        [1e3, 0.289529654602, 0.236790427484, 1.5790593092, 0.0527392271177, 1.34226888172],
        [1e4, 0.217147240952, 0.184276874368, 1.4342944819, 0.0328703665837, 1.25001760754],
        [1e5, 0.173717792761, 0.151089482502, 1.34743558552, 0.0226283102595, 1.19634610302],
        [1e6, 0.144764827301, 0.128142116902, 1.2895296546, 0.0166227103988, 1.1613875377],
    ];

    #[test]
    fn closed_forms() {
        assert!((int_f_f_h_exact(4f64.exp()) - 2.0).abs() < 1e-15);
        assert!((int_f_h_exact(1e4) - 0.217147240952).abs() < 1e-11);
    }

    #[test]
    fn reproduces_table() {
        let cfg = ExConfig::default();
        let out = example_ex(&cfg).unwrap();
        for (r, t) in out.rows.iter().zip(TABLE) {
            assert_eq!(r.h, t[0]);
            for (got, want) in [r.int_f_h, r.int_log1p_f_h, r.int_f_f_h, r.mean_modular, r.energy_gap]
                .iter()
                .zip(&t[1..])
            {
                assert!((got - want).abs() < 2e-5, "h={} {got} vs {want}", r.h);
            }
        }
        assert!((out.modular_u - 0.5).abs() < 1e-5);
        let run = run(&cfg).unwrap();
        assert!(run.passed, "{:?}", run.failures().collect::<Vec<_>>());
        assert_eq!(run.tables[0].header.len(), 6);
    }

    #[test]
    fn h_equal_e4() {
        let h = 4f64.exp();
        let cfg = ExConfig {
            h_ladder: vec![h],
            ..Default::default()
        };
        let r = example_ex(&cfg).unwrap().rows[0];
        assert!((r.int_f_f_h - 2.0).abs() < 1e-4);
        assert!((r.int_f_h - 0.5).abs() < 1e-6);
        assert!((r.energy_gap - 1.62508079803).abs() < 2e-5);
    }

    #[test]
    fn refines_with_resolution() {
        let cfg = ExConfig {
            h_ladder: vec![1e2, 1e6],
            quadrature: QuadratureSpec::new(256, 40),
            ..Default::default()
        };
        let out = example_ex(&cfg).unwrap();
        for (r, t) in out.rows.iter().zip([TABLE[0], TABLE[4]]) {
            assert!((r.int_f_f_h - t[3]).abs() < 1e-6 && (r.energy_gap - t[5]).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_ladders() {
        for l in [vec![], vec![5.0], vec![1e3, 1e2]] {
            let cfg = ExConfig {
                h_ladder: l,
                ..Default::default()
            };
            assert!(example_ex(&cfg).is_err());
        }
    }
}

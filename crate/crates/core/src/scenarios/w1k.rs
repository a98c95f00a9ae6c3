//! `u(x) = (x/2) log(1/(e|x|))` near `0` on `(−1,1)`: `N_φ(|u'|) < ∞` but
//! `N_φ(2|u'|) = ∞`, so `|u'| ∈ K_φ \ E_φ`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::recipes::{w1k_du, w1k_u};
use super::{Basis, Check, ScenarioError, ScenarioRun, Table};
use crate::field::{integrate, Domain, Field, Integral, QuadratureSpec};
use crate::modular::{scaled_modular, ModularValue};
use crate::nfunc::NFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct W1kConfig {
    pub phi: String,
    pub quadrature: QuadratureSpec<f64>,
    pub fd_points: Vec<f64>,
    pub fd_step: f64,
    pub fd_tol: f64,
    /// Tolerance of `∫_{|x|<1/e} e^{u'} = 4e^{−3/2}`.
    pub exp_tol: f64,
    /// Points near `0` where `e^{2u'} = 1/(e²|x|)` is checked.
    pub anchor_points: Vec<f64>,
}

impl Default for W1kConfig {
    fn default() -> Self {
        Self {
            phi: "tilde_exp:gamma=0,tau=tau0".into(),
            quadrature: QuadratureSpec::default(),
            fd_points: vec![-0.2, -0.05, 0.05, 0.2],
            fd_step: 1e-6,
            fd_tol: 1e-4,
            exp_tol: 1e-4,
            anchor_points: vec![-1e-9, 1e-6, 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W1kOutcome {
    /// `N_φ(|u'|)` at the configured and at doubled grading depth.
    pub modular: [ModularValue<f64>; 2],
    /// `N_φ(2|u'|)` at the same two depths.
    pub modular_doubled: [ModularValue<f64>; 2],
    /// `∫_{|x|<1/e} e^{u'}`.
    pub exp_part: f64,
    /// `(x, u'(x), central difference)`.
    pub fd: Vec<(f64, f64, f64)>,
    /// `(x, e^{2u'(x)}, 1/(e²|x|))`.
    pub anchor: Vec<(f64, f64, f64)>,
}

pub fn example_w1k(cfg: &W1kConfig) -> Result<W1kOutcome, ScenarioError> {
    let phi: NFunction<f64> = cfg.phi.parse()?;
    let u = w1k_u();
    let du = u.finite_diff_gradient()?;
    let du = Field::scalar_fn(u.domain().clone(), move |p| {
        let mut o = [0.0];
        du.eval(p, &mut o).map(|_| o[0]).unwrap_or(f64::NAN)
    })
    .with_singular_point(0, 0.0)
    .with_kink(0, -1.0 / E)
    .with_kink(0, 1.0 / E);
    let deep = QuadratureSpec {
        grading_depth: 2 * cfg.quadrature.grading_depth,
        ..cfg.quadrature.clone()
    };
    let at = |lambda: f64| -> Result<[ModularValue<f64>; 2], ScenarioError> {
        Ok([
            scaled_modular(&phi, &du, lambda, None, &cfg.quadrature)?,
            scaled_modular(&phi, &du, lambda, None, &deep)?,
        ])
    };
    let modular = at(1.0)?;
    let modular_doubled = at(0.5)?;
    let inner = Domain::interval(-1.0 / E, 1.0 / E)?;
    let exp_field = Field::scalar_fn(inner, |p| w1k_du(p[0]).exp()).with_singular_point(0, 0.0);
    let exp_part = match integrate(&exp_field, &cfg.quadrature)? {
        Integral::Value { value } => value,
        Integral::Diverged { .. } => return Err(ScenarioError::Config("exp-part diverged".into())),
    };
    let h = cfg.fd_step;
    let fd = cfg
        .fd_points
        .iter()
        .map(|&x| {
            let d = (u.eval_scalar(&[x + h])? - u.eval_scalar(&[x - h])?) / (2.0 * h);
            Ok((x, w1k_du(x), d))
        })
        .collect::<Result<_, ScenarioError>>()?;
    let anchor = cfg
        .anchor_points
        .iter()
        .map(|&x| (x, (2.0 * w1k_du(x)).exp(), 1.0 / (E * E * x.abs())))
        .collect();
    Ok(W1kOutcome {
        modular,
        modular_doubled,
        exp_part,
        fd,
        anchor,
    })
}

fn status(m: &ModularValue<f64>) -> String {
    m.value().map_or_else(|| "diverged".into(), |v| v.to_string())
}

pub(super) fn run(cfg: &W1kConfig) -> Result<ScenarioRun, ScenarioError> {
    let out = example_w1k(cfg)?;
    let depths = [cfg.quadrature.grading_depth, 2 * cfg.quadrature.grading_depth];
    let mut c = Vec::new();
    for k in 0..2 {
        let m = &out.modular[k];
        let mut check = Check::flag(format!("N(|u'|) finite[depth={}]", depths[k]), Basis::Audit, "finite", !m.is_diverged());
        if let Some(v) = m.value() {
            check = check.with_value(v);
        }
        c.push(check);
        c.push(Check::flag(
            format!("N(2|u'|) diverged[depth={}]", depths[k]),
            Basis::ClosedForm,
            "diverged",
            out.modular_doubled[k].is_diverged(),
        ));
    }
    if let (Some(a), Some(b)) = (out.modular[0].value(), out.modular[1].value()) {
        c.push(Check::near("N(|u'|) stable under doubled depth", Basis::Audit, a, b, 1e-6));
    }
    c.push(Check::near("exp_part", Basis::Oracle, 4.0 * (-1.5f64).exp(), out.exp_part, cfg.exp_tol));
    for &(x, d, fd) in &out.fd {
        c.push(Check::near(format!("u' vs difference[x={x}]"), Basis::Oracle, fd, d, cfg.fd_tol));
    }
    for &(x, lhs, rhs) in &out.anchor {
        c.push(Check::near(format!("exp(2u') = 1/(e²|x|)[x={x}]"), Basis::ClosedForm, 1.0, lhs / rhs, 1e-12));
    }
    let mut table = Table::new("modulars", &["quantity", "grading_depth", "value"]);
    for k in 0..2 {
        table.push(vec!["N(|u'|)".into(), depths[k].to_string(), status(&out.modular[k])]);
        table.push(vec!["N(2|u'|)".into(), depths[k].to_string(), status(&out.modular_doubled[k])]);
    }
    table.push(vec!["exp_part".into(), depths[0].to_string(), out.exp_part.to_string()]);
    Ok(ScenarioRun::new("example_w1k", serde_json::to_value(cfg)?, c, vec![table], json!(out)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_and_diverged() {
        let out = example_w1k(&W1kConfig::default()).unwrap();
        for m in &out.modular {
            let v = m.value().unwrap();
            assert!((v - 0.163_172_186_098_368_4).abs() < 1e-5, "{v}");
        }
        assert!(out.modular_doubled.iter().all(|m| m.is_diverged()));
        assert!((out.exp_part - 0.8925206405937193).abs() < 1e-5, "{}", out.exp_part);
        let run = run(&W1kConfig::default()).unwrap();
        assert!(run.passed, "{:?}", run.failures().collect::<Vec<_>>());
    }

    #[test]
    fn refines_with_resolution() {
        let cfg = W1kConfig {
            quadrature: QuadratureSpec::new(256, 40),
            ..Default::default()
        };
        let v = example_w1k(&cfg).unwrap().modular[0].value().unwrap();
        assert!((v - 0.163_172_186_098_368_4).abs() < 2e-7, "{v}");
    }

    #[test]
    fn derivative_sign_changes() {
        assert!(w1k_du(0.5 / (E * E)) > 0.0);
        assert!(w1k_du(0.3) < 0.0);
        assert_eq!(w1k_du(0.5), 0.0);
    }
}

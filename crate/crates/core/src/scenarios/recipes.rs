//! Named analytic fields and weights, addressable from configs and the CLI.

use std::f64::consts::E;

use crate::field::{Domain, Field, Shape, Weight};

use super::ScenarioError;

/// Space-time fields `b(t, x)` on `(0,1) × (0,1)`.
pub const SPACE_TIME: &[(&str, &str)] = &[
    ("tsin3x", "t·sin(3x)"),
    ("sign_t_x", "sign(t − 1/2)·x"),
    ("plane", "t + 2x"),
    ("zero", "0"),
];

/// Spatial fields `u(x)` with their derivative.
pub const SPATIAL: &[(&str, &str)] = &[
    ("linear", "u = x on (0,1)"),
    ("xlog", "u = (x/2)·log(1/x) on (0,1)"),
    ("half_log", "u = ½·log(1/x) on (0,1)"),
    ("w1k", "u = (x/2)·log(1/(e|x|)) for |x| ≤ 1/e, 0 otherwise, on (−1,1)"),
];

pub const WEIGHTS: &[(&str, &str)] = &[("unit", "w ≡ 1"), ("one_plus_x2", "w(x) = 1 + x²")];

fn unknown(kind: &str, name: &str, known: &[(&str, &str)]) -> ScenarioError {
    let names: Vec<&str> = known.iter().map(|k| k.0).collect();
    ScenarioError::Config(format!("unknown {kind} recipe `{name}` (known: {})", names.join(", ")))
}

fn unit_square() -> Domain<f64> {
    Domain::space_time((0.0, 1.0), (0.0, 1.0)).expect("valid box")
}

fn grad(domain: Domain<f64>, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Field<f64> {
    Field::analytic(domain, Shape::Matrix { rows: 1, cols: 1 }, move |p, o| o[0] = g(p)).expect("1×1")
}

fn with_grad(
    domain: Domain<f64>,
    f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> Field<f64> {
    Field::scalar_fn(domain.clone(), f)
        .with_gradient(grad(domain, g))
        .expect("matching gradient")
}

pub fn space_time(name: &str) -> Result<Field<f64>, ScenarioError> {
    let d = unit_square();
    Ok(match name {
        "tsin3x" => with_grad(d, |p| p[0] * (3.0 * p[1]).sin(), |p| 3.0 * p[0] * (3.0 * p[1]).cos()),
        "sign_t_x" => with_grad(d, |p| (p[0] - 0.5).signum() * p[1], |p| (p[0] - 0.5).signum()).with_kink(0, 0.5),
        "plane" => with_grad(d, |p| p[0] + 2.0 * p[1], |_| 2.0),
        "zero" => with_grad(d, |_| 0.0, |_| 0.0),
        _ => return Err(unknown("space-time", name, SPACE_TIME)),
    })
}

/// `u` on its interval, with `u'` registered.
pub fn spatial(name: &str) -> Result<Field<f64>, ScenarioError> {
    let unit = Domain::interval(0.0, 1.0)?;
    Ok(match name {
        "linear" => with_grad(unit, |p| p[0], |_| 1.0),
        "xlog" => with_grad(unit, |p| 0.5 * p[0] * (1.0 / p[0]).ln(), |p| 0.5 * ((1.0 / p[0]).ln() - 1.0)),
        "half_log" => with_grad(unit, |p| -0.5 * p[0].ln(), |p| -0.5 / p[0]).with_singular_point(0, 0.0),
        "w1k" => w1k_u(),
        _ => return Err(unknown("spatial", name, SPATIAL)),
    })
}

pub(crate) fn w1k_u() -> Field<f64> {
    let d = Domain::interval(-1.0, 1.0).expect("valid interval");
    let u = |x: f64| {
        if x != 0.0 && x.abs() <= 1.0 / E {
            0.5 * x * (1.0 / (E * x.abs())).ln()
        } else {
            0.0
        }
    };
    let f = with_grad(d, move |p| u(p[0]), |p| w1k_du(p[0]));
    f.with_singular_point(0, 0.0).with_kink(0, -1.0 / E).with_kink(0, 1.0 / E)
}

/// `u'` of the `w1k` recipe; `±∞`-free away from `0`.
pub(crate) fn w1k_du(x: f64) -> f64 {
    if x.abs() < 1.0 / E {
        (1.0 / (E * x.abs().sqrt())).ln()
    } else {
        0.0
    }
}

/// `b(t, x) = u(x)` on `(0,1) × Ω` with `Db = u'(x)`.
pub fn autonomous(u: &Field<f64>) -> Result<Field<f64>, ScenarioError> {
    if u.domain().dim() != 1 || u.shape() != Shape::Scalar {
        return Err(ScenarioError::Config("autonomous lift needs a scalar field on an interval".into()));
    }
    let ax = u.domain().axis(0);
    let domain = Domain::space_time((0.0, 1.0), (ax.lo, ax.hi))?;
    let du = u.finite_diff_gradient()?;
    let (uu, dd) = (u.clone(), du.clone());
    let b = Field::scalar_fn(domain.clone(), move |p| {
        let mut o = [0.0];
        uu.eval_unchecked(&p[1..], &mut o);
        o[0]
    });
    let g = Field::analytic(domain, Shape::Matrix { rows: 1, cols: 1 }, move |p, o| {
        dd.eval_unchecked(&p[1..], o)
    })?;
    let mut b = b.with_gradient(g)?;
    for &s in &u.hints().singular[0] {
        b = b.with_singular_point(1, s);
    }
    for &k in &u.hints().kinks[0] {
        b = b.with_kink(1, k);
    }
    Ok(b)
}

pub fn weight(name: &str, domain: &Domain<f64>) -> Result<Weight<f64>, ScenarioError> {
    match name {
        "unit" => Ok(Weight::unit(domain.clone())),
        "one_plus_x2" => Ok(Weight::spatial(domain.clone(), |x| 1.0 + x[0] * x[0])?),
        _ => Err(unknown("weight", name, WEIGHTS)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_match_differences() {
        for &(name, _) in SPACE_TIME {
            let b = space_time(name).unwrap();
            let g = b.gradient().unwrap();
            for p in [[0.3, 0.4], [0.7, 0.2]] {
                let h = 1e-6;
                let fd = (b.eval_scalar(&[p[0], p[1] + h]).unwrap() - b.eval_scalar(&[p[0], p[1] - h]).unwrap()) / (2.0 * h);
                let mut o = [0.0];
                g.eval(&p, &mut o).unwrap();
                assert!((fd - o[0]).abs() < 1e-6, "{name}");
            }
        }
        for &(name, _) in SPATIAL {
            let u = spatial(name).unwrap();
            let g = u.gradient().unwrap();
            for x in [0.05, 0.2, 0.7] {
                let h = 1e-6;
                let fd = (u.eval_scalar(&[x + h]).unwrap() - u.eval_scalar(&[x - h]).unwrap()) / (2.0 * h);
                let mut o = [0.0];
                g.eval(&[x], &mut o).unwrap();
                assert!((fd - o[0]).abs() < 1e-5, "{name} at {x}");
            }
        }
        assert!(space_time("nope").is_err());
    }

    #[test]
    fn lift_is_time_independent() {
        let b = autonomous(&spatial("xlog").unwrap()).unwrap();
        assert_eq!(b.eval_scalar(&[0.1, 0.5]).unwrap(), b.eval_scalar(&[0.9, 0.5]).unwrap());
        assert_eq!(b.hints().singular[1], Vec::<f64>::new());
        let w = autonomous(&spatial("w1k").unwrap()).unwrap();
        assert_eq!(w.hints().singular[1], vec![0.0]);
    }
}

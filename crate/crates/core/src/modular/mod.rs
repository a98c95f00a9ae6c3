//! Modulars `N_φ(u) = ∫ φ(|u|)`, weighted energies `∫ w φ(|Db|)` and the
//! Luxemburg norm, with divergence kept as an ordinary outcome.

mod report;

pub use report::{
    classify_sequence, trend_to_zero, ClassifyOptions, ConvergenceFlags, ConvergenceReport,
    LadderEntry,
};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::field::{frobenius, integrate_with, Field, FieldError, Integral, QuadratureSpec, Shape, Weight};
use crate::nfunc::{Generator, NFuncError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModularError {
    #[error(transparent)]
    Field(#[from] FieldError),
    /// No `λ` in `[2^-60, 2^60]` separates `N_φ(u/λ) ≤ 1` from `> 1`.
    #[error("Luxemburg bracket search failed: {0}")]
    Bracket(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Largest and smallest `λ` tried by the Luxemburg bracket search.
pub const BRACKET_CAP: f64 = 1_152_921_504_606_846_976.0; // 2^60

/// A modular value together with the quadrature that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ModularValue<T> {
    #[serde(flatten)]
    pub integral: Integral<T>,
    pub quadrature: QuadratureSpec<T>,
}

impl<T: Scalar> ModularValue<T> {
    pub fn value(&self) -> Option<T> {
        self.integral.value()
    }

    pub fn is_diverged(&self) -> bool {
        self.integral.is_diverged()
    }
}

fn phi_at<T: Scalar, G: Generator<T> + ?Sized>(phi: &G, s: T) -> Result<T, FieldError> {
    if !s.is_finite() {
        return Err(FieldError::NFunc(NFuncError::Saturation { t: s.as_f64() }));
    }
    Ok(phi.eval(s)?)
}

/// `∫ w φ(|u| / λ)`; `w = None` means `w ≡ 1`.
pub fn scaled_modular<T, G>(
    phi: &G,
    u: &Field<T>,
    lambda: T,
    weight: Option<&Weight<T>>,
    q: &QuadratureSpec<T>,
) -> Result<ModularValue<T>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(ModularError::Input(format!("scale λ = {lambda} must be positive")));
    }
    if let Some(w) = weight {
        if w.field().domain() != u.domain() {
            return Err(FieldError::Domain("weight and field live on different domains".into()).into());
        }
    }
    let integral = integrate_with(u, q, |p, v| {
        let e = phi_at(phi, frobenius(v) / lambda)?;
        Ok(match weight {
            Some(w) => w.eval(p) * e,
            None => e,
        })
    })?;
    if let Integral::Value { value } = integral {
        debug_assert!(value >= T::zero());
    }
    Ok(ModularValue {
        integral,
        quadrature: q.clone(),
    })
}

/// `N_φ(u) = ∫ φ(|u|)` (Frobenius norm for vector and matrix fields).
pub fn modular<T, G>(phi: &G, u: &Field<T>, q: &QuadratureSpec<T>) -> Result<ModularValue<T>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    scaled_modular(phi, u, T::one(), None, q)
}

/// `N_{φ,w}(|Db|) = ∫∫ w φ(|Db|)` for a matrix-valued `Db`.
pub fn weighted_energy<T, G>(
    phi: &G,
    w: &Weight<T>,
    db: &Field<T>,
    q: &QuadratureSpec<T>,
) -> Result<ModularValue<T>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    if !matches!(db.shape(), Shape::Matrix { .. }) {
        return Err(FieldError::Shape(format!("energy needs a matrix field, got {:?}", db.shape())).into());
    }
    scaled_modular(phi, db, T::one(), Some(w), q)
}

/// `N_φ(u/λ) ≤ 1`, counting divergence and overflow as "no".
fn feasible<T, G>(phi: &G, u: &Field<T>, lambda: T, q: &QuadratureSpec<T>) -> Result<bool, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    match scaled_modular(phi, u, lambda, None, q) {
        Ok(m) => Ok(m.value().is_some_and(|v| v <= T::one())),
        Err(ModularError::Field(FieldError::NFunc(NFuncError::Saturation { .. })))
        | Err(ModularError::Field(FieldError::Evaluation { .. })) => Ok(false),
        Err(e) => Err(e),
    }
}

/// `inf{λ > 0 : N_φ(u/λ) ≤ 1}` by bracket expansion from `λ = 1` and
/// bisection until the bracket width is at most `tol·λ`.
///
/// The returned `λ` is the feasible end of the final bracket.
pub fn luxemburg_norm<T, G>(phi: &G, u: &Field<T>, q: &QuadratureSpec<T>, tol: T) -> Result<T, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    if !(tol > T::zero() && tol < T::one()) {
        return Err(ModularError::Input(format!("tolerance {tol} must lie in (0, 1)")));
    }
    let mass = integrate_with(u, q, |_, v| Ok(frobenius(v)))?;
    if mass.value() == Some(T::zero()) {
        return Ok(T::zero());
    }
    let cap = T::c(BRACKET_CAP);
    let two = T::c(2.0);
    let (mut lo, mut hi);
    if feasible(phi, u, T::one(), q)? {
        hi = T::one();
        lo = hi / two;
        while feasible(phi, u, lo, q)? {
            hi = lo;
            lo /= two;
            if lo < T::one() / cap {
                return Err(ModularError::Bracket(format!("N_φ(u/λ) ≤ 1 down to λ = {hi}")));
            }
        }
    } else {
        lo = T::one();
        hi = two;
        while !feasible(phi, u, hi, q)? {
            lo = hi;
            hi *= two;
            if hi > cap {
                return Err(ModularError::Bracket(format!(
                    "N_φ(u/λ) > 1 up to λ = {lo}; u is outside L_φ within range"
                )));
            }
        }
    }
    while hi - lo > tol * hi {
        let mid = (lo + hi) / two;
        if feasible(phi, u, mid, q)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Outcome of `N_{φ₂}(f+g) ≤ ½N_φ(f) + ½N_φ(g)` with `φ₂(t) = φ(t/2)`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitReport<T> {
    pub lhs: ModularValue<T>,
    pub modular_f: ModularValue<T>,
    pub modular_g: ModularValue<T>,
    /// `rhs − lhs` when all three are finite.
    pub gap: Option<T>,
    pub holds: bool,
}

/// Checks the half-sum convexity bound for scalar `f`, `g`.
pub fn check_convexity_split<T, G>(
    phi: &G,
    f: &Field<T>,
    g: &Field<T>,
    q: &QuadratureSpec<T>,
) -> Result<SplitReport<T>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    if f.shape() != Shape::Scalar || g.shape() != Shape::Scalar {
        return Err(FieldError::Shape("split check needs scalar fields".into()).into());
    }
    let sum = f.add(g)?;
    let lhs = scaled_modular(phi, &sum, T::c(2.0), None, q)?;
    let modular_f = modular(phi, f, q)?;
    let modular_g = modular(phi, g, q)?;
    let half = T::c(0.5);
    let (gap, holds) = match (lhs.value(), modular_f.value(), modular_g.value()) {
        (Some(l), Some(a), Some(b)) => {
            let rhs = half * a + half * b;
            let gap = rhs - l;
            (Some(gap), gap >= -T::c(1e-12) * (T::one() + rhs.abs()))
        }
        (_, Some(_), Some(_)) => (None, false),
        _ => (None, true),
    };
    Ok(SplitReport {
        lhs,
        modular_f,
        modular_g,
        gap,
        holds,
    })
}

/// `(λ, N_φ(u/λ) < ∞)` per scale: the numerical stand-in for membership
/// questions about `K_φ`, `E_φ` and `L_φ`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ScaleFiniteness<T> {
    pub lambda: T,
    pub value: Option<T>,
    pub finite: bool,
}

pub fn finite_at_scales<T, G>(
    phi: &G,
    u: &Field<T>,
    lambdas: &[T],
    q: &QuadratureSpec<T>,
) -> Result<Vec<ScaleFiniteness<T>>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    lambdas
        .par_iter()
        .map(|&lambda| {
            let value = match scaled_modular(phi, u, lambda, None, q) {
                Ok(m) => m.value(),
                Err(ModularError::Field(FieldError::NFunc(NFuncError::Saturation { .. }))) => None,
                Err(e) => return Err(e),
            };
            Ok(ScaleFiniteness {
                lambda,
                value,
                finite: value.is_some(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Domain;
    use crate::nfunc::NFunction;
    use proptest::prelude::*;

    fn unit() -> Domain<f64> {
        Domain::<f64>::interval(0.0, 1.0).unwrap()
    }

    fn tilde0() -> NFunction<f64> {
        NFunction::tilde_exp(0.0, 2.0).unwrap()
    }

    #[test]
    fn zero_field() {
        let z = Field::zero(unit(), Shape::Scalar).unwrap();
        let q = QuadratureSpec::default();
        assert_eq!(modular(&NFunction::exp_star(), &z, &q).unwrap().value(), Some(0.0));
        assert_eq!(luxemburg_norm(&NFunction::exp_star(), &z, &q, 1e-8).unwrap(), 0.0);
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap();
        let db = Field::zero(d.clone(), Shape::Matrix { rows: 1, cols: 1 }).unwrap();
        let e = weighted_energy(&NFunction::exp_star(), &Weight::unit(d), &db, &q).unwrap();
        assert_eq!(e.value(), Some(0.0));
    }

    #[test]
    fn log_inverse_sqrt() {
        // N(u) = ∫f − 1 − ∫log f with f = x^{-1/2}.
        let u = Field::scalar_fn(unit(), |p| -0.5 * p[0].ln());
        let v = modular(&tilde0(), &u, &QuadratureSpec::default()).unwrap();
        assert!((v.value().unwrap() - 0.5).abs() < 1e-3, "{v:?}");
    }

    #[test]
    fn constant_norm_inverts_phi() {
        // ‖c‖ on a set of measure V is c / φ^{-1}(1/V).
        let d = Domain::<f64>::interval(0.0, 2.0).unwrap();
        let u = Field::constant(d, vec![3.0]).unwrap();
        let n = luxemburg_norm(&NFunction::exp_star(), &u, &QuadratureSpec::default(), 1e-9).unwrap();
        let expect = 3.0 / (1.5f64).ln();
        assert!((n - expect).abs() <= 2e-9 * expect, "{n} vs {expect}");
    }

    #[test]
    fn power_norm_is_lp() {
        let u = Field::scalar_fn(unit(), |p| p[0]);
        let q = QuadratureSpec::default();
        for (p, exact) in [(1.0, 0.5), (2.0, (1.0f64 / 3.0).sqrt()), (4.0, 0.2f64.powf(0.25))] {
            let n = luxemburg_norm(&NFunction::power(p).unwrap(), &u, &q, 1e-8).unwrap();
            let discrete = integrate_with(&u, &q, |_, v| Ok(v[0].abs().powf(p)))
                .unwrap()
                .value()
                .unwrap()
                .powf(1.0 / p);
            assert!((n - discrete).abs() <= 1e-8 * discrete, "p = {p}: {n} vs {discrete}");
            assert!((n - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn large_norm_brackets_upward() {
        let u = Field::constant(unit(), vec![1e6]).unwrap();
        let n = luxemburg_norm(&NFunction::exp_star(), &u, &QuadratureSpec::default(), 1e-9).unwrap();
        let expect = 1e6 / 2f64.ln();
        assert!((n - expect).abs() <= 2e-9 * expect);
    }

    #[test]
    fn unit_weight_matches_modular() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, std::f64::consts::PI)).unwrap();
        let db = Field::analytic(d.clone(), Shape::Matrix { rows: 1, cols: 1 }, |p, o| {
            o[0] = p[0] * p[1].cos()
        })
        .unwrap();
        let phi = NFunction::exp_star();
        let q = QuadratureSpec::uniform(128);
        let a = weighted_energy(&phi, &Weight::unit(d), &db, &q).unwrap().value().unwrap();
        let b = modular(&phi, &db, &q).unwrap().value().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_self_convergence() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, std::f64::consts::PI)).unwrap();
        let db = Field::analytic(d.clone(), Shape::Matrix { rows: 1, cols: 1 }, |p, o| {
            o[0] = p[0] * p[1].cos()
        })
        .unwrap()
        .with_kink(1, std::f64::consts::FRAC_PI_2);
        let phi = NFunction::exp_star();
        let w = Weight::unit(d);
        let coarse = weighted_energy(&phi, &w, &db, &QuadratureSpec::uniform(64)).unwrap();
        let fine = weighted_energy(&phi, &w, &db, &QuadratureSpec::uniform(256)).unwrap();
        assert!((coarse.value().unwrap() - fine.value().unwrap()).abs() < 1e-4);
    }

    #[test]
    fn energy_rejects_vectors() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap();
        let v = Field::zero(d.clone(), Shape::Vector(2)).unwrap();
        assert!(weighted_energy(&NFunction::exp_star(), &Weight::unit(d), &v, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn split_with_itself_is_equality() {
        let f = Field::scalar_fn(unit(), |p| 1.0 + p[0]);
        let r = check_convexity_split(&NFunction::exp_star(), &f, &f, &QuadratureSpec::default()).unwrap();
        assert!(r.holds);
        assert!(r.gap.unwrap().abs() < 1e-12);
    }

    #[test]
    fn split_with_zero_holds() {
        let f = Field::scalar_fn(unit(), |p| 3.0 * p[0]);
        let z = Field::zero(unit(), Shape::Scalar).unwrap();
        let r = check_convexity_split(&NFunction::exp_star(), &f, &z, &QuadratureSpec::default()).unwrap();
        assert!(r.holds && r.gap.unwrap() > 0.0);
    }

    #[test]
    fn diverged_scales() {
        // exp(2·(−½ log x)) = 1/x is not integrable; exp(½ log(1/x)·½) is.
        let u = Field::scalar_fn(unit(), |p| -0.5 * p[0].ln());
        let r = finite_at_scales(&tilde0(), &u, &[0.5, 1.0, 2.0], &QuadratureSpec::default()).unwrap();
        assert_eq!(r.iter().map(|s| s.finite).collect::<Vec<_>>(), vec![false, true, true]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn monotone_in_lambda(a in 0.1f64..5.0, l1 in 0.1f64..4.0, dl in 0.01f64..4.0) {
            let u = Field::scalar_fn(unit(), move |p| a * (1.0 + p[0]).ln());
            let q = QuadratureSpec::uniform(64);
            let phi = NFunction::exp_star();
            let m1 = scaled_modular(&phi, &u, l1, None, &q).unwrap().value().unwrap();
            let m2 = scaled_modular(&phi, &u, l1 + dl, None, &q).unwrap().value().unwrap();
            prop_assert!(m1 >= m2);
        }

        #[test]
        fn homogeneous(a in 0.1f64..3.0, c in prop::sample::select(vec![0.5f64, 2.0, 10.0])) {
            let u = Field::scalar_fn(unit(), move |p| a * p[0].sin() + 0.2);
            let cu = u.scale(c);
            let q = QuadratureSpec::uniform(64);
            let phi = NFunction::exp_star();
            let tol = 1e-9;
            let n = luxemburg_norm(&phi, &u, &q, tol).unwrap();
            let nc = luxemburg_norm(&phi, &cu, &q, tol).unwrap();
            prop_assert!((nc - c * n).abs() <= 2.0 * tol * nc.max(c * n));
        }

        #[test]
        fn triangle(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let res = [32];
            let f = Field::scalar_fn(unit(), move |p| a * p[0]).sample(&res).unwrap();
            let g = Field::scalar_fn(unit(), move |p| b * (1.0 - p[0]).powi(2) + 0.1).sample(&res).unwrap();
            let q = QuadratureSpec::default();
            let phi = NFunction::exp_star();
            let tol = 1e-9;
            let s = luxemburg_norm(&phi, &f.add(&g).unwrap(), &q, tol).unwrap();
            let nf = luxemburg_norm(&phi, &f, &q, tol).unwrap();
            let ng = luxemburg_norm(&phi, &g, &q, tol).unwrap();
            prop_assert!(s <= nf + ng + 2.0 * tol * (1.0 + s));
        }
    }
}

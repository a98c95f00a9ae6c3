//! Exponential and sub-exponential Young functions with closed-form derivatives.
//!
//! Every family is evaluated from its explicit formula; the first and second
//! derivatives are the hand-derived closed forms (no automatic differentiation),
//! so finite-difference checks in the test suite validate the formulas
//! independently.
//!
//! | family | formula |
//! |---|---|
//! | `ExpStar` | `exp(t) - 1` |
//! | `ExpGammaTau` | `exp(t / log(t+τ)^γ)` (value 1 at the origin) |
//! | `ExpGammaTauStar` | `exp(t / log(t+τ)^γ) - 1` |
//! | `TildeExpGammaTau` | `exp(t / log(t+τ)^γ) - 1 - t / log(τ)^γ` |
//! | `Power` | `t^p` |
//! | `ExpAlphaStar` | `exp(α t) - 1` |
//!
//! Each instance also carries a scale `λ > 0`, evaluating `φ(t/λ)`.

mod checks;
mod descriptor;

pub use checks::{
    check_convexity_grid, check_difference_quotients, check_submultiplicativity,
    check_weak_subadditivity, classify_delta2, comparison_threshold, find_tau0, tau0_residual,
    Delta2Class, Delta2Report, VerificationReport,
};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NFuncError {
    #[error("domain error: {0}")]
    Domain(String),
    /// The value exceeds the representable range of the scalar type.
    #[error("saturation: value at t = {t} is not representable")]
    Saturation { t: f64 },
    #[error("cannot parse descriptor `{descriptor}`: {reason}")]
    Parse { descriptor: String, reason: String },
    #[error("operation not supported by generator `{0}`")]
    Unsupported(String),
}

/// A pointwise-evaluable convex generator `φ : [0, ∞) → [0, ∞)`.
///
/// Implemented by [`NFunction`]; user code can plug in other generators
/// through [`CustomGenerator`].
pub trait Generator<T: Scalar>: Send + Sync {
    fn eval(&self, t: T) -> Result<T, NFuncError>;
    fn deriv1(&self, t: T) -> Result<T, NFuncError>;
    fn deriv2(&self, t: T) -> Result<T, NFuncError>;
    /// Human-readable label (descriptor string for built-in families).
    fn label(&self) -> String;
    /// Whether the generator is known to be strictly convex on `[0, ∞)`.
    fn strictly_convex(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<T> {
    ExpStar,
    ExpGammaTau { gamma: T, tau: T },
    ExpGammaTauStar { gamma: T, tau: T },
    TildeExpGammaTau { gamma: T, tau: T },
    Power { p: T },
    ExpAlphaStar { alpha: T },
}

/// A member of one of the built-in families, optionally rescaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NFunction<T> {
    family: Family<T>,
    scale: T,
}

fn check_gamma_tau<T: Scalar>(gamma: T, tau: T) -> Result<(), NFuncError> {
    if !(gamma >= T::zero() && gamma <= T::one()) {
        return Err(NFuncError::Domain(format!("gamma = {gamma} outside [0, 1]")));
    }
    if !(tau > T::one()) || !tau.is_finite() {
        return Err(NFuncError::Domain(format!("tau = {tau} must exceed 1")));
    }
    Ok(())
}

impl<T: Scalar> NFunction<T> {
    pub fn new(family: Family<T>) -> Result<Self, NFuncError> {
        match family {
            Family::ExpStar => {}
            Family::ExpGammaTau { gamma, tau }
            | Family::ExpGammaTauStar { gamma, tau }
            | Family::TildeExpGammaTau { gamma, tau } => check_gamma_tau(gamma, tau)?,
            Family::Power { p } => {
                if !(p >= T::one()) || !p.is_finite() {
                    return Err(NFuncError::Domain(format!("p = {p} must be at least 1")));
                }
            }
            Family::ExpAlphaStar { alpha } => {
                if !(alpha > T::zero()) || !alpha.is_finite() {
                    return Err(NFuncError::Domain(format!("alpha = {alpha} must be positive")));
                }
            }
        }
        Ok(Self {
            family,
            scale: T::one(),
        })
    }

    /// `exp(t) - 1`.
    pub fn exp_star() -> Self {
        Self {
            family: Family::ExpStar,
            scale: T::one(),
        }
    }

    pub fn exp_gamma_tau(gamma: T, tau: T) -> Result<Self, NFuncError> {
        Self::new(Family::ExpGammaTau { gamma, tau })
    }

    pub fn exp_gamma_tau_star(gamma: T, tau: T) -> Result<Self, NFuncError> {
        Self::new(Family::ExpGammaTauStar { gamma, tau })
    }

    pub fn tilde_exp(gamma: T, tau: T) -> Result<Self, NFuncError> {
        Self::new(Family::TildeExpGammaTau { gamma, tau })
    }

    pub fn power(p: T) -> Result<Self, NFuncError> {
        Self::new(Family::Power { p })
    }

    pub fn exp_alpha_star(alpha: T) -> Result<Self, NFuncError> {
        Self::new(Family::ExpAlphaStar { alpha })
    }

    /// The rescaled generator `t ↦ φ(t/λ)`; scales compose multiplicatively.
    pub fn scaled(&self, lambda: T) -> Result<Self, NFuncError> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(NFuncError::Domain(format!("scale {lambda} must be positive")));
        }
        Ok(Self {
            family: self.family,
            scale: self.scale * lambda,
        })
    }

    pub fn family(&self) -> Family<T> {
        self.family
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// `(γ, τ)` for the sub-exponential families.
    pub fn gamma_tau(&self) -> Option<(T, T)> {
        match self.family {
            Family::ExpGammaTau { gamma, tau }
            | Family::ExpGammaTauStar { gamma, tau }
            | Family::TildeExpGammaTau { gamma, tau } => Some((gamma, tau)),
            _ => None,
        }
    }

    /// True when `φ(0) = 0`. Only the raw `exp_{γ,τ}` family fails this.
    pub fn vanishes_at_zero(&self) -> bool {
        !matches!(self.family, Family::ExpGammaTau { .. })
    }

    fn unscaled_eval(&self, t: T) -> Result<T, NFuncError> {
        let v = match self.family {
            Family::ExpStar => t.exp_m1(),
            Family::ExpAlphaStar { alpha } => (alpha * t).exp_m1(),
            Family::ExpGammaTau { gamma, tau } => sub_exponent(gamma, tau, t).exp(),
            Family::ExpGammaTauStar { gamma, tau } => sub_exponent(gamma, tau, t).exp_m1(),
            Family::TildeExpGammaTau { gamma, tau } => {
                // nonnegative in exact arithmetic; clamp cancellation noise near 0
                (sub_exponent(gamma, tau, t).exp_m1() - t / tau.ln().powf(gamma)).max(T::zero())
            }
            Family::Power { p } => {
                if t == T::zero() {
                    T::zero()
                } else {
                    t.powf(p)
                }
            }
        };
        finite_or_saturate(v, t)
    }

    fn unscaled_deriv1(&self, t: T) -> Result<T, NFuncError> {
        let v = match self.family {
            Family::ExpStar => t.exp(),
            Family::ExpAlphaStar { alpha } => alpha * (alpha * t).exp(),
            Family::ExpGammaTau { gamma, tau } | Family::ExpGammaTauStar { gamma, tau } => {
                sub_exp_deriv1(gamma, tau, t)
            }
            Family::TildeExpGammaTau { gamma, tau } => {
                if t == T::zero() {
                    T::zero()
                } else {
                    sub_exp_deriv1(gamma, tau, t) - T::one() / tau.ln().powf(gamma)
                }
            }
            Family::Power { p } => {
                if p == T::one() {
                    T::one()
                } else if t == T::zero() {
                    T::zero()
                } else {
                    p * t.powf(p - T::one())
                }
            }
        };
        finite_or_saturate(v, t)
    }

    fn unscaled_deriv2(&self, t: T) -> Result<T, NFuncError> {
        let v = match self.family {
            Family::ExpStar => t.exp(),
            Family::ExpAlphaStar { alpha } => alpha * alpha * (alpha * t).exp(),
            Family::ExpGammaTau { gamma, tau }
            | Family::ExpGammaTauStar { gamma, tau }
            | Family::TildeExpGammaTau { gamma, tau } => sub_exp_deriv2(gamma, tau, t),
            Family::Power { p } => {
                let two = T::c(2.0);
                if p == T::one() {
                    T::zero()
                } else if p == two {
                    two
                } else if t == T::zero() {
                    if p > two {
                        T::zero()
                    } else {
                        T::infinity()
                    }
                } else {
                    p * (p - T::one()) * t.powf(p - two)
                }
            }
        };
        finite_or_saturate(v, t)
    }
}

fn check_arg<T: Scalar>(t: T) -> Result<(), NFuncError> {
    if t >= T::zero() {
        Ok(())
    } else {
        Err(NFuncError::Domain(format!("argument {t} must be nonnegative")))
    }
}

fn finite_or_saturate<T: Scalar>(v: T, t: T) -> Result<T, NFuncError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NFuncError::Saturation { t: t.as_f64() })
    }
}

/// `t / log(t+τ)^γ`
#[inline]
fn sub_exponent<T: Scalar>(gamma: T, tau: T, t: T) -> T {
    t / (t + tau).ln().powf(gamma)
}

/// `exp_{γ,τ}'(t) = exp_{γ,τ}(t) [log(t+τ) - γt/(t+τ)] / log(t+τ)^{γ+1}`
fn sub_exp_deriv1<T: Scalar>(gamma: T, tau: T, t: T) -> T {
    let s = t + tau;
    let l = s.ln();
    let e = (t / l.powf(gamma)).exp();
    e * (l - gamma * t / s) / l.powf(gamma + T::one())
}

/// Second derivative, three-term bracket:
/// `E / L^{2γ+2} [ (L - γt/s)^2 - L^{γ+1} (γτ + γs)/s^2 + γ(γ+1) t L^γ / s^2 ]`
/// with `s = t + τ`, `L = log s`.
fn sub_exp_deriv2<T: Scalar>(gamma: T, tau: T, t: T) -> T {
    let one = T::one();
    let s = t + tau;
    let l = s.ln();
    let lg = l.powf(gamma);
    let e = (t / lg).exp();
    let a = l - gamma * t / s;
    let bracket = a * a - l.powf(gamma + one) * (gamma * tau + gamma * s) / (s * s)
        + gamma * (gamma + one) * t * lg / (s * s);
    e / l.powf(T::c(2.0) * gamma + T::c(2.0)) * bracket
}

impl<T: Scalar> Generator<T> for NFunction<T> {
    fn eval(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        self.unscaled_eval(t / self.scale)
    }

    fn deriv1(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        Ok(self.unscaled_deriv1(t / self.scale)? / self.scale)
    }

    fn deriv2(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        Ok(self.unscaled_deriv2(t / self.scale)? / (self.scale * self.scale))
    }

    fn label(&self) -> String {
        self.to_string()
    }

    fn strictly_convex(&self) -> bool {
        match self.family {
            Family::ExpStar | Family::ExpAlphaStar { .. } => true,
            Family::Power { p } => p > T::one(),
            Family::ExpGammaTau { gamma, tau }
            | Family::ExpGammaTauStar { gamma, tau }
            | Family::TildeExpGammaTau { gamma, tau } => {
                gamma == T::zero() || tau >= find_tau0::<T>()
            }
        }
    }
}

impl<T: Scalar> Serialize for NFunction<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de, T: Scalar> Deserialize<'de> for NFunction<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

type PointFn<T> = Box<dyn Fn(T) -> T + Send + Sync>;

/// Plug-in hook for user-supplied generators evaluated pointwise.
pub struct CustomGenerator<T: Scalar> {
    name: String,
    value: PointFn<T>,
    first: Option<PointFn<T>>,
    second: Option<PointFn<T>>,
    strictly_convex: bool,
}

impl<T: Scalar> CustomGenerator<T> {
    pub fn new(name: impl Into<String>, value: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            value: Box::new(value),
            first: None,
            second: None,
            strictly_convex: false,
        }
    }

    pub fn with_derivatives(
        mut self,
        first: impl Fn(T) -> T + Send + Sync + 'static,
        second: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        self.first = Some(Box::new(first));
        self.second = Some(Box::new(second));
        self
    }

    pub fn with_strict_convexity(mut self, yes: bool) -> Self {
        self.strictly_convex = yes;
        self
    }
}

impl<T: Scalar> Generator<T> for CustomGenerator<T> {
    fn eval(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        finite_or_saturate((self.value)(t), t)
    }

    fn deriv1(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        let f = self
            .first
            .as_ref()
            .ok_or_else(|| NFuncError::Unsupported(self.name.clone()))?;
        finite_or_saturate(f(t), t)
    }

    fn deriv2(&self, t: T) -> Result<T, NFuncError> {
        check_arg(t)?;
        let f = self
            .second
            .as_ref()
            .ok_or_else(|| NFuncError::Unsupported(self.name.clone()))?;
        finite_or_saturate(f(t), t)
    }

    fn label(&self) -> String {
        self.name.clone()
    }

    fn strictly_convex(&self) -> bool {
        self.strictly_convex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_at_zero_exactly() {
        let fams: Vec<NFunction<f64>> = vec![
            NFunction::exp_star(),
            NFunction::exp_gamma_tau_star(0.5, 20.0).unwrap(),
            NFunction::tilde_exp(1.0, 15.0).unwrap(),
            NFunction::power(2.5).unwrap(),
            NFunction::exp_alpha_star(2.0).unwrap(),
        ];
        for f in fams {
            assert_eq!(f.eval(0.0).unwrap(), 0.0, "{f}");
            assert_eq!(f.scaled(3.0).unwrap().eval(0.0).unwrap(), 0.0);
        }
        let raw = NFunction::exp_gamma_tau(0.5, 20.0).unwrap();
        assert_eq!(raw.eval(0.0).unwrap(), 1.0);
        assert!(!raw.vanishes_at_zero());
    }

    #[test]
    fn gamma_zero_collapses_to_exp() {
        for tau in [1.5, 5.0, 40.0] {
            let f = NFunction::exp_gamma_tau(0.0, tau).unwrap();
            for t in [0.0, 0.3, 2.0, 17.0] {
                let want = f64::exp(t);
                assert!((f.eval(t).unwrap() - want).abs() <= 1e-15 * want);
                assert!((f.deriv1(t).unwrap() - want).abs() <= 1e-14 * want);
                assert!((f.deriv2(t).unwrap() - want).abs() <= 1e-14 * want);
            }
        }
    }

    #[test]
    fn tilde_exp_zero_at_one() {
        let f = NFunction::tilde_exp(0.0, 3.0).unwrap();
        let v: f64 = f.eval(1.0).unwrap();
        assert!((v - 0.718_281_828_459_045_2).abs() < 1e-15);
        assert_eq!(f.deriv1(0.0).unwrap(), 0.0);
        assert_eq!(NFunction::tilde_exp(0.7, 30.0).unwrap().deriv1(0.0).unwrap(), 0.0);
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(NFunction::exp_gamma_tau(1.5, 20.0).is_err());
        assert!(NFunction::exp_gamma_tau(-0.1, 20.0).is_err());
        assert!(NFunction::tilde_exp(0.5, 1.0).is_err());
        assert!(NFunction::power(0.5).is_err());
        assert!(NFunction::exp_alpha_star(0.0).is_err());
        assert!(NFunction::<f64>::exp_star().scaled(0.0).is_err());
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        let f = NFunction::<f64>::exp_star();
        assert!(matches!(f.eval(-1.0), Err(NFuncError::Domain(_))));
        assert!(matches!(f.deriv1(f64::NAN), Err(NFuncError::Domain(_))));
    }

    #[test]
    fn overflow_saturates() {
        let f = NFunction::<f64>::exp_star();
        assert!(matches!(f.eval(1000.0), Err(NFuncError::Saturation { .. })));
        assert!(f.eval(700.0).is_ok());
    }

    #[test]
    fn scaling_rescales_argument_and_derivatives() {
        let f = NFunction::<f64>::power(3.0).unwrap();
        let g = f.scaled(2.0).unwrap();
        assert!((g.eval(4.0).unwrap() - 8.0).abs() < 1e-12);
        assert!((g.deriv1(4.0).unwrap() - 6.0).abs() < 1e-12);
        assert!((g.deriv2(4.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_endpoint_derivatives() {
        let lin = NFunction::<f64>::power(1.0).unwrap();
        assert_eq!(lin.deriv1(0.0).unwrap(), 1.0);
        assert_eq!(lin.deriv2(0.0).unwrap(), 0.0);
        let p15 = NFunction::<f64>::power(1.5).unwrap();
        assert!(matches!(p15.deriv2(0.0), Err(NFuncError::Saturation { .. })));
        assert_eq!(NFunction::<f64>::power(3.0).unwrap().deriv2(0.0).unwrap(), 0.0);
    }

    #[test]
    fn custom_generator_plugin() {
        let g = CustomGenerator::new("cosh-1", |t: f64| t.cosh() - 1.0)
            .with_derivatives(f64::sinh, f64::cosh)
            .with_strict_convexity(true);
        assert_eq!(g.eval(0.0).unwrap(), 0.0);
        assert!((g.deriv1(1.0).unwrap() - 1.0f64.sinh()).abs() < 1e-15);
        assert!(g.strictly_convex());
        let bare = CustomGenerator::new("sq", |t: f64| t * t);
        assert!(matches!(bare.deriv2(1.0), Err(NFuncError::Unsupported(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let f = NFunction::<f32>::tilde_exp(0.5, 20.0).unwrap();
        let v = f.eval(2.0).unwrap();
        let w = NFunction::<f64>::tilde_exp(0.5, 20.0).unwrap().eval(2.0).unwrap();
        assert!(((v as f64) - w).abs() < 1e-5 * w);
    }
}

//! Machine checks of the structural properties used by the smoothing theory:
//! weak subadditivity, sub-multiplicativity, the convexity threshold τ₀,
//! and a range-limited Δ₂ classification.

use serde::Serialize;

use super::{Generator, NFuncError, NFunction};
use crate::scalar::Scalar;

/// Relative tolerance used by the sample-based inequality checks.
pub const INEQUALITY_RTOL: f64 = 1e-12;

/// Outcome of a sample-based inequality check.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport<T> {
    pub check: String,
    pub samples: usize,
    /// Samples skipped because an evaluation saturated.
    pub skipped: usize,
    pub violations: usize,
    /// Largest `(lhs - rhs) / (1 + |rhs|)` over the evaluated samples.
    pub max_excess: T,
    pub worst: Option<(T, T)>,
    pub tolerance: T,
    pub passed: bool,
}

struct Tally<T: Scalar> {
    check: String,
    samples: usize,
    skipped: usize,
    violations: usize,
    max_excess: T,
    worst: Option<(T, T)>,
    tol: T,
}

impl<T: Scalar> Tally<T> {
    fn new(check: impl Into<String>, tol: T) -> Self {
        Self {
            check: check.into(),
            samples: 0,
            skipped: 0,
            violations: 0,
            max_excess: T::neg_infinity(),
            worst: None,
            tol,
        }
    }

    /// Records `lhs ≤ rhs` at the sample point `at`.
    fn record(&mut self, lhs: Result<T, NFuncError>, rhs: Result<T, NFuncError>, at: (T, T)) {
        self.samples += 1;
        let (l, r) = match (lhs, rhs) {
            (Ok(l), Ok(r)) if l.is_finite() && r.is_finite() => (l, r),
            _ => {
                self.skipped += 1;
                return;
            }
        };
        let excess = (l - r) / (T::one() + r.abs());
        if excess > self.max_excess {
            self.max_excess = excess;
            self.worst = Some(at);
        }
        if excess > self.tol {
            self.violations += 1;
        }
    }

    fn finish(self) -> VerificationReport<T> {
        let evaluated = self.samples - self.skipped;
        VerificationReport {
            check: self.check,
            samples: self.samples,
            skipped: self.skipped,
            violations: self.violations,
            max_excess: self.max_excess,
            worst: self.worst,
            tolerance: self.tol,
            passed: self.violations == 0 && evaluated > 0,
        }
    }
}

/// `g(τ) = log τ - 2 (log τ / τ + 1)`; positivity of `g` makes every
/// `exp_{γ,τ}` strictly convex on `[0, ∞)` for all `γ ∈ [0, 1]`.
pub fn tau0_residual<T: Scalar>(tau: T) -> T {
    let l = tau.ln();
    l - T::c(2.0) * (l / tau + T::one())
}

/// Smallest `τ` with `g(τ) ≥ 0`, located by bisection on `[3, 100]`
/// (`g(3) < 0 < g(100)`). Returns the upper end of the final bracket.
pub fn find_tau0<T: Scalar>() -> T {
    let mut lo = T::c(3.0);
    let mut hi = T::c(100.0);
    for _ in 0..200 {
        let mid = (lo + hi) / T::c(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if tau0_residual(mid) >= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `φ(a+b) ≤ k [φ(a) φ(b) + φ(a) + φ(b)]` over the sample.
pub fn check_weak_subadditivity<T: Scalar, G: Generator<T> + ?Sized>(
    phi: &G,
    k: T,
    sample: &[(T, T)],
) -> VerificationReport<T> {
    let mut tally = Tally::new(
        format!("weak subadditivity of {} with k = {k}", phi.label()),
        T::c(INEQUALITY_RTOL),
    );
    for &(a, b) in sample {
        let lhs = phi.eval(a + b);
        let rhs = phi
            .eval(a)
            .and_then(|pa| phi.eval(b).map(|pb| k * (pa * pb + pa + pb)));
        tally.record(lhs, rhs, (a, b));
    }
    tally.finish()
}

/// `exp_{γ,τ}(t+s) ≤ exp_{γ,τ}(t) exp_{γ,τ}(s)` over the sample.
pub fn check_submultiplicativity<T: Scalar>(
    gamma: T,
    tau: T,
    sample: &[(T, T)],
) -> Result<VerificationReport<T>, NFuncError> {
    let e = NFunction::exp_gamma_tau(gamma, tau)?;
    let mut tally = Tally::new(
        format!("sub-multiplicativity of exp_raw:gamma={gamma},tau={tau}"),
        T::c(INEQUALITY_RTOL),
    );
    for &(t, s) in sample {
        let lhs = e.eval(t + s);
        let rhs = e.eval(t).and_then(|a| e.eval(s).map(|b| a * b));
        tally.record(lhs, rhs, (t, s));
    }
    Ok(tally.finish())
}

/// `φ(s)/s ≤ φ(t)/t` for every pair `0 < s < t` in the sample.
pub fn check_difference_quotients<T: Scalar, G: Generator<T> + ?Sized>(
    phi: &G,
    pairs: &[(T, T)],
) -> VerificationReport<T> {
    let mut tally = Tally::new(
        format!("monotone difference quotients of {}", phi.label()),
        T::c(INEQUALITY_RTOL),
    );
    for &(a, b) in pairs {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        if !(s > T::zero()) || s == t {
            continue;
        }
        tally.record(phi.eval(s).map(|v| v / s), phi.eval(t).map(|v| v / t), (s, t));
    }
    tally.finish()
}

/// Strict convexity on an increasing grid: consecutive chord slopes strictly increase.
pub fn check_convexity_grid<T: Scalar, G: Generator<T> + ?Sized>(
    phi: &G,
    grid: &[T],
) -> VerificationReport<T> {
    let mut tally = Tally::new(format!("strict convexity of {}", phi.label()), T::zero());
    for w in grid.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let vals = (phi.eval(a), phi.eval(b), phi.eval(c));
        let (lhs, rhs) = match vals {
            (Ok(fa), Ok(fb), Ok(fc)) => {
                let left = (fb - fa) / (b - a);
                let right = (fc - fb) / (c - b);
                // strict: left slope must be below the right slope
                (Ok(left), Ok(right))
            }
            _ => (Err(NFuncError::Saturation { t: c.as_f64() }), Ok(T::zero())),
        };
        match (&lhs, &rhs) {
            (Ok(l), Ok(r)) if *l >= *r => {
                tally.samples += 1;
                tally.violations += 1;
                let excess = (*l - *r) / (T::one() + r.abs());
                if excess > tally.max_excess || tally.worst.is_none() {
                    tally.max_excess = excess;
                    tally.worst = Some((a, c));
                }
            }
            _ => tally.record(lhs, rhs, (a, c)),
        }
    }
    tally.finish()
}

/// Smallest grid point `t̄` such that `exp*_{γ,τ}(t)/2 ≤ ~exp_{γ,τ}(t)` for
/// every grid point `t ≥ t̄`. Grid points where evaluation saturates are ignored.
pub fn comparison_threshold<T: Scalar>(
    gamma: T,
    tau: T,
    grid: &[T],
) -> Result<Option<T>, NFuncError> {
    let star = NFunction::exp_gamma_tau_star(gamma, tau)?;
    let tilde = NFunction::tilde_exp(gamma, tau)?;
    let mut threshold = None;
    for &t in grid.iter().rev() {
        match (star.eval(t), tilde.eval(t)) {
            (Ok(s), Ok(a)) => {
                if s / T::c(2.0) <= a {
                    threshold = Some(t);
                } else {
                    break;
                }
            }
            _ => continue,
        }
    }
    Ok(threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Delta2Class {
    Global,
    NearInfinity,
    /// The ratio keeps growing across the top of the sampled range.
    NoneOnRange,
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta2Report<T> {
    pub range: (T, T),
    pub samples: usize,
    /// `sup φ(2t)/φ(t)` over the sampled range (`inf` when `φ(2t)` saturates).
    pub max_ratio: T,
    pub argmax: T,
    /// Growth of the ratio across the top quarter of the (log-spaced) grid.
    pub top_growth: T,
    /// Growth of the ratio toward the lower end of the range.
    pub bottom_growth: T,
    pub class: Delta2Class,
    /// `Global`, or `NearInfinity` on a finite-measure set.
    pub delta_regular: bool,
}

const DELTA2_SAMPLES: usize = 4001;
const DELTA2_GROWTH: f64 = 1e-3;

/// Range-limited Δ₂ classification of `φ` from the ratio `φ(2t)/φ(t)` on a
/// log-spaced grid of `[lo, hi]`. Asymptotic Δ₂ behaviour cannot be decided
/// from finite data; the class only describes the sampled range.
pub fn classify_delta2<T: Scalar, G: Generator<T> + ?Sized>(
    phi: &G,
    range: (T, T),
    finite_measure: bool,
) -> Result<Delta2Report<T>, NFuncError> {
    let (lo, hi) = range;
    if !(lo > T::zero()) || !(hi > lo) || !hi.is_finite() {
        return Err(NFuncError::Domain(format!(
            "Δ₂ range ({lo}, {hi}) must satisfy 0 < lo < hi"
        )));
    }
    let n = DELTA2_SAMPLES;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut ratios = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    for i in 0..n {
        let frac = T::from_usize_lossy(i) / T::from_usize_lossy(n - 1);
        let t = (llo + (lhi - llo) * frac).exp();
        let denom = phi.eval(t)?;
        if denom <= T::zero() {
            return Err(NFuncError::Domain(format!(
                "φ vanishes at t = {t}; the ratio φ(2t)/φ(t) is undefined"
            )));
        }
        let r = match phi.eval(t + t) {
            Ok(num) => num / denom,
            Err(NFuncError::Saturation { .. }) => T::infinity(),
            Err(e) => return Err(e),
        };
        ratios.push(r);
        ts.push(t);
    }
    let (mut max_ratio, mut argmax) = (T::neg_infinity(), lo);
    for (&r, &t) in ratios.iter().zip(&ts) {
        if r > max_ratio {
            max_ratio = r;
            argmax = t;
        }
    }
    let q = n / 4;
    let growth = |base: T, seg: &[T]| {
        let m = seg.iter().copied().fold(T::neg_infinity(), T::max);
        if m.is_infinite() {
            T::infinity()
        } else {
            m / base
        }
    };
    let top_growth = growth(ratios[n - 1 - q], &ratios[n - 1 - q..]);
    let bottom_growth = growth(ratios[q], &ratios[..=q]);
    let thr = T::one() + T::c(DELTA2_GROWTH);
    let class = if top_growth > thr {
        Delta2Class::NoneOnRange
    } else if bottom_growth > thr {
        Delta2Class::NearInfinity
    } else {
        Delta2Class::Global
    };
    let delta_regular = match class {
        Delta2Class::Global => true,
        Delta2Class::NearInfinity => finite_measure,
        Delta2Class::NoneOnRange => false,
    };
    Ok(Delta2Report {
        range,
        samples: n,
        max_ratio,
        argmax,
        top_growth,
        bottom_growth,
        class,
        delta_regular,
    })
}

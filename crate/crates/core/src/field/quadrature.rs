//! Composite midpoint quadrature with dyadic grading toward flagged points.
//!
//! Along each axis the interval is split at every hinted point. A segment end
//! that carries a hint is approached by dyadic shells `[p + L/2^{k+1}, p + L/2^k]`,
//! each with `resolution` midpoint cells, down to `grading_depth` levels; the
//! innermost remainder gets `resolution` cells as well. On a one-dimensional
//! domain the open endpoints are graded and treated as potentially singular.
//!
//! At singular points the shell contributions `c_k` are monitored: when the
//! last three ratios `|c_k| / |c_{k-1}|` all reach `divergence_ratio`, the
//! integral is reported as [`Integral::Diverged`]. For `x^{-a}` the ratio is
//! `2^{a-1}`, so with the default `0.97` the flag fires for `a ≥ 0.956`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops::unravel;
use super::{Axis, Domain, Field, FieldError, Hints, Shape};
use crate::scalar::{compensated_sum, CompensatedSum, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields, default)]
pub struct QuadratureSpec<T> {
    /// Midpoint cells per axis, and per grading shell.
    pub resolution: usize,
    /// Number of dyadic shells toward each graded point.
    pub grading_depth: usize,
    /// Shell-to-shell growth ratio that signals divergence.
    pub divergence_ratio: T,
    /// Extra graded points per axis.
    pub breakpoints: Vec<Vec<T>>,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            resolution: 64,
            grading_depth: 40,
            divergence_ratio: T::c(0.97),
            breakpoints: Vec::new(),
        }
    }
}

impl<T: Scalar> QuadratureSpec<T> {
    pub fn new(resolution: usize, grading_depth: usize) -> Self {
        Self {
            resolution,
            grading_depth,
            ..Self::default()
        }
    }

    /// Plain composite midpoint rule without grading.
    pub fn uniform(resolution: usize) -> Self {
        Self::new(resolution, 0)
    }

    pub fn with_breakpoint(mut self, axis: usize, at: T) -> Self {
        if self.breakpoints.len() <= axis {
            self.breakpoints.resize(axis + 1, Vec::new());
        }
        self.breakpoints[axis].push(at);
        self
    }

    pub fn with_divergence_ratio(mut self, ratio: T) -> Self {
        self.divergence_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.resolution < 2 {
            return Err(FieldError::Resolution(format!(
                "quadrature resolution {} must be at least 2",
                self.resolution
            )));
        }
        if !(self.divergence_ratio > T::zero()) {
            return Err(FieldError::Resolution("divergence ratio must be positive".into()));
        }
        Ok(())
    }
}

/// A quadrature result: a finite value or a divergence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "status", rename_all = "snake_case")]
pub enum Integral<T> {
    Value { value: T },
    /// Shell contributions stopped decaying toward `point` on `axis`.
    Diverged { axis: usize, point: T, ratio: T },
}

impl<T: Scalar> Integral<T> {
    pub fn value(&self) -> Option<T> {
        match *self {
            Integral::Value { value } => Some(value),
            Integral::Diverged { .. } => None,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self, Integral::Diverged { .. })
    }
}

struct Probe<T> {
    point: T,
    shells: Vec<Range<usize>>,
}

struct Rule1D<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    probes: Vec<Probe<T>>,
}

#[derive(Clone, Copy)]
struct Mark<T> {
    at: T,
    graded: bool,
    singular: bool,
}

impl<T: Scalar> Rule1D<T> {
    fn new() -> Self {
        Self {
            nodes: Vec::new(),
            weights: Vec::new(),
            probes: Vec::new(),
        }
    }

    fn push_uniform(&mut self, a: T, b: T, n: usize) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let h = (hi - lo) / T::from_usize_lossy(n);
        for i in 0..n {
            self.nodes.push(lo + h * (T::from_usize_lossy(i) + T::c(0.5)));
            self.weights.push(h);
        }
    }

    /// Shells toward `p` over `[p, p + len]` (`len` may be negative).
    fn push_graded(&mut self, p: T, len: T, singular: bool, spec: &QuadratureSpec<T>) {
        let n = spec.resolution;
        let floor = T::c(4.0) * T::epsilon() * p.abs().max(T::min_positive_value().sqrt());
        let res = T::from_usize_lossy(n);
        let mut depth = 0;
        let mut width = len.abs();
        while depth < spec.grading_depth && width / T::c(2.0) / res > floor {
            width /= T::c(2.0);
            depth += 1;
        }
        let mut shells = Vec::with_capacity(depth);
        let mut outer = len;
        for _ in 0..depth {
            let inner = outer / T::c(2.0);
            let start = self.nodes.len();
            self.push_uniform(p + inner, p + outer, n);
            shells.push(start..self.nodes.len());
            outer = inner;
        }
        self.push_uniform(p, p + outer, n);
        if singular {
            self.probes.push(Probe { point: p, shells });
        }
    }

    fn build(
        axis: &Axis<T>,
        singular: &[T],
        kinks: &[T],
        grade_open_ends: bool,
        spec: &QuadratureSpec<T>,
    ) -> Self {
        let mut marks: Vec<Mark<T>> = Vec::new();
        let mut mark = |at: T, graded: bool, singular: bool| {
            if let Some(m) = marks.iter_mut().find(|m| m.at == at) {
                m.graded |= graded;
                m.singular |= singular;
            } else {
                marks.push(Mark { at, graded, singular });
            }
        };
        mark(axis.lo, grade_open_ends && axis.open_lo, grade_open_ends && axis.open_lo);
        mark(axis.hi, grade_open_ends && axis.open_hi, grade_open_ends && axis.open_hi);
        for &s in singular.iter().filter(|&&s| s >= axis.lo && s <= axis.hi) {
            mark(s, true, true);
        }
        for &k in kinks.iter().filter(|&&k| k >= axis.lo && k <= axis.hi) {
            mark(k, true, false);
        }
        marks.sort_by(|a, b| a.at.partial_cmp(&b.at).expect("finite marks"));
        let mut rule = Self::new();
        for w in marks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let graded_a = a.graded && spec.grading_depth > 0;
            let graded_b = b.graded && spec.grading_depth > 0;
            match (graded_a, graded_b) {
                (false, false) => rule.push_uniform(a.at, b.at, spec.resolution),
                (true, false) => rule.push_graded(a.at, b.at - a.at, a.singular, spec),
                (false, true) => rule.push_graded(b.at, a.at - b.at, b.singular, spec),
                (true, true) => {
                    let half = (b.at - a.at) / T::c(2.0);
                    rule.push_graded(a.at, half, a.singular, spec);
                    rule.push_graded(b.at, -half, b.singular, spec);
                }
            }
        }
        rule
    }
}

fn axis_points<T: Scalar>(lists: &[Vec<T>], axis: usize) -> &[T] {
    lists.get(axis).map(|v| v.as_slice()).unwrap_or(&[])
}

/// Integrates a fallible scalar integrand over `domain` with the grading
/// points of `hints` and `spec`.
pub fn integrate_fn<T, F>(
    domain: &Domain<T>,
    hints: &Hints<T>,
    spec: &QuadratureSpec<T>,
    f: F,
) -> Result<Integral<T>, FieldError>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T, FieldError> + Sync,
{
    spec.validate()?;
    let dim = domain.dim();
    let rules: Vec<Rule1D<T>> = (0..dim)
        .map(|axis| {
            let mut kinks = axis_points(&hints.kinks, axis).to_vec();
            kinks.extend_from_slice(axis_points(&spec.breakpoints, axis));
            Rule1D::build(
                domain.axis(axis),
                axis_points(&hints.singular, axis),
                &kinks,
                dim == 1,
                spec,
            )
        })
        .collect();
    if dim == 1 {
        integrate_1d(&rules[0], spec, &f)
    } else {
        integrate_tensor(&rules, &f).map(|value| Integral::Value { value })
    }
}

fn integrate_1d<T, F>(rule: &Rule1D<T>, spec: &QuadratureSpec<T>, f: &F) -> Result<Integral<T>, FieldError>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T, FieldError> + Sync,
{
    let values: Vec<Option<T>> = rule
        .nodes
        .par_iter()
        .map(|&x| match f(&[x]) {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            Ok(_) | Err(FieldError::NFunc(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    for probe in &rule.probes {
        let contrib: Vec<T> = probe
            .shells
            .iter()
            .map(|r| {
                let mut acc = CompensatedSum::new();
                for i in r.clone() {
                    acc.add(rule.weights[i] * values[i].unwrap_or(T::infinity()));
                }
                acc.value().abs()
            })
            .collect();
        if contrib.len() < 4 {
            continue;
        }
        let tail = &contrib[contrib.len() - 4..];
        let ratios: Vec<T> = tail
            .windows(2)
            .map(|w| {
                if w[1].is_nan() || w[1].is_infinite() {
                    T::infinity()
                } else if w[0] == T::zero() {
                    if w[1] == T::zero() {
                        T::zero()
                    } else {
                        T::infinity()
                    }
                } else {
                    w[1] / w[0]
                }
            })
            .collect();
        if ratios.iter().all(|&r| r >= spec.divergence_ratio) {
            let ratio = ratios.iter().copied().fold(T::infinity(), T::min);
            return Ok(Integral::Diverged {
                axis: 0,
                point: probe.point,
                ratio,
            });
        }
    }
    if let Some(i) = values.iter().position(Option::is_none) {
        let x = rule.nodes[i];
        return Err(FieldError::eval(&[x], "integrand is not finite"));
    }
    let value = compensated_sum(
        rule.weights
            .iter()
            .zip(&values)
            .map(|(&w, v)| w * v.expect("checked finite")),
    );
    Ok(Integral::Value { value })
}

fn integrate_tensor<T, F>(rules: &[Rule1D<T>], f: &F) -> Result<T, FieldError>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T, FieldError> + Sync,
{
    let dim = rules.len();
    let inner: usize = rules[1..].iter().map(|r| r.nodes.len()).product();
    let rows: Vec<T> = (0..rules[0].nodes.len())
        .into_par_iter()
        .map(|i0| {
            let mut p = vec![T::zero(); dim];
            p[0] = rules[0].nodes[i0];
            let mut acc = CompensatedSum::new();
            for flat in 0..inner {
                let mut rem = flat;
                let mut w = rules[0].weights[i0];
                for axis in (1..dim).rev() {
                    let n = rules[axis].nodes.len();
                    let i = rem % n;
                    rem /= n;
                    p[axis] = rules[axis].nodes[i];
                    w *= rules[axis].weights[i];
                }
                let v = f(&p)?;
                if !v.is_finite() {
                    return Err(FieldError::eval(&p, "integrand is not finite"));
                }
                acc.add(w * v);
            }
            Ok(acc.value())
        })
        .collect::<Result<_, _>>()?;
    Ok(compensated_sum(rows))
}

/// `∫ f` over the field's domain. Sampled fields use their own cells.
pub fn integrate<T: Scalar>(f: &Field<T>, spec: &QuadratureSpec<T>) -> Result<Integral<T>, FieldError> {
    if f.shape() != Shape::Scalar {
        return Err(FieldError::Shape(format!(
            "integrate needs a scalar field, got {:?}",
            f.shape()
        )));
    }
    integrate_with(f, spec, |_, v| Ok(v[0]))
}

/// `∫ g(p, f(p)) dp` with the quadrature of [`integrate`]: native cells for
/// sampled fields, graded rules at the field's hints otherwise.
pub fn integrate_with<T, G>(f: &Field<T>, spec: &QuadratureSpec<T>, g: G) -> Result<Integral<T>, FieldError>
where
    T: Scalar,
    G: Fn(&[T], &[T]) -> Result<T, FieldError> + Sync,
{
    let k = f.shape().len();
    if let Some(grid) = f.grid() {
        let vol = f
            .domain()
            .axes()
            .iter()
            .zip(&grid.resolution)
            .fold(T::one(), |acc, (a, &n)| acc * a.len() / T::from_usize_lossy(n));
        let centers = Field::cell_centers(f.domain(), &grid.resolution);
        let terms: Vec<T> = grid
            .values
            .par_chunks(k)
            .enumerate()
            .map(|(cell, vals)| {
                let mut p = vec![T::zero(); grid.resolution.len()];
                unravel(cell, &grid.resolution, &centers, &mut p);
                let v = g(&p, vals)?;
                if v.is_finite() {
                    Ok(v * vol)
                } else {
                    Err(FieldError::eval(&p, "integrand is not finite"))
                }
            })
            .collect::<Result<_, _>>()?;
        return Ok(Integral::Value {
            value: compensated_sum(terms),
        });
    }
    integrate_fn(f.domain(), f.hints(), spec, |p| {
        let mut buf = vec![T::zero(); k];
        f.eval_unchecked(p, &mut buf);
        g(p, &buf)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> Domain<f64> {
        Domain::<f64>::interval(0.0, 1.0).unwrap()
    }

    fn value(f: &Field<f64>, q: &QuadratureSpec<f64>) -> f64 {
        integrate(f, q).unwrap().value().unwrap()
    }

    #[test]
    fn inverse_square_root() {
        let f = Field::scalar_fn(unit(), |p| p[0].powf(-0.5));
        let q = QuadratureSpec::new(64, 20);
        assert!((value(&f, &q) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn log_integrand() {
        let f = Field::scalar_fn(unit(), |p| (p[0].powf(-0.5)).ln());
        assert!((value(&f, &QuadratureSpec::default()) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn harmonic_diverges() {
        let f = Field::scalar_fn(unit(), |p| 1.0 / p[0]);
        let r = integrate(&f, &QuadratureSpec::default()).unwrap();
        assert!(matches!(r, Integral::Diverged { point, .. } if point == 0.0), "{r:?}");
    }

    #[test]
    fn interior_singularity_needs_hint() {
        let d = Domain::<f64>::interval(-1.0, 1.0).unwrap();
        let f = Field::scalar_fn(d, |p| 1.0 / p[0].abs()).with_singular_point(0, 0.0);
        assert!(integrate(&f, &QuadratureSpec::default()).unwrap().is_diverged());
        let g = Field::scalar_fn(Domain::<f64>::interval(-1.0, 1.0).unwrap(), |p| p[0].abs().powf(-0.5))
            .with_singular_point(0, 0.0);
        assert!((value(&g, &QuadratureSpec::default()) - 4.0).abs() < 1e-4);
    }

    #[test]
    fn grading_error_decreases_with_depth() {
        let f = Field::scalar_fn(unit(), |p| p[0].powf(-0.5));
        let errs: Vec<f64> = (5..=20)
            .map(|d| (value(&f, &QuadratureSpec::new(64, d)) - 2.0).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn kink_breakpoint() {
        let f = Field::scalar_fn(unit(), |p| (p[0] - 0.3).abs()).with_kink(0, 0.3);
        let exact = 0.5 * (0.09 + 0.49);
        assert!((value(&f, &QuadratureSpec::default()) - exact).abs() < 1e-8);
    }

    #[test]
    fn two_dimensional_tensor() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, std::f64::consts::PI)).unwrap();
        let f = Field::scalar_fn(d, |p| p[0] * p[1].sin());
        assert!((value(&f, &QuadratureSpec::uniform(256)) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn sampled_uses_native_cells() {
        let f = Field::sampled(unit(), Shape::Scalar, vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(value(&f, &QuadratureSpec::default()), 2.5);
    }

    #[test]
    fn overflow_away_from_singular_points_is_an_error() {
        let f = Field::scalar_fn(unit(), |p| if p[0] > 0.5 { f64::INFINITY } else { 1.0 });
        assert!(integrate(&f, &QuadratureSpec::uniform(8)).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let q: QuadratureSpec<f64> = serde_json::from_str(r#"{"resolution": 32}"#).unwrap();
        assert_eq!(q.grading_depth, 40);
        assert!(serde_json::from_str::<QuadratureSpec<f64>>(r#"{"resolutoin": 32}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn additive_over_split(a in 0.1f64..3.0, c in 0.05f64..0.95) {
            let f = move |p: &[f64]| (a * p[0]).sin() + p[1] * p[1];
            let q = QuadratureSpec::uniform(64);
            let whole = Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap();
            let left = Domain::<f64>::space_time((0.0, c), (0.0, 1.0)).unwrap();
            let right = Domain::<f64>::space_time((c, 1.0), (0.0, 1.0)).unwrap();
            let h = Hints::default();
            let q2 = q.clone().with_breakpoint(0, c);
            let full = integrate_fn(&whole, &h, &q2, |p| Ok(f(p))).unwrap().value().unwrap();
            let l = integrate_fn(&left, &h, &q, |p| Ok(f(p))).unwrap().value().unwrap();
            let r = integrate_fn(&right, &h, &q, |p| Ok(f(p))).unwrap().value().unwrap();
            prop_assert!(((l + r) - full).abs() <= 1e-10 * full.abs().max(1.0));
        }

        #[test]
        fn nonnegative_integrand(k in 0.0f64..10.0) {
            let f = Field::scalar_fn(unit(), move |p| (k * p[0]).cos().powi(2));
            prop_assert!(value(&f, &QuadratureSpec::default()) >= 0.0);
        }
    }
}

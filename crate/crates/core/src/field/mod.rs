//! Scalar, vector and matrix fields over intervals and space-time boxes.
//!
//! A [`Field`] is either analytic (a pointwise evaluator) or sampled on a
//! uniform cell-centred grid. Sampled fields interpolate multilinearly between
//! cell centres. Fields carry optional hints (singular points, kinks) used by
//! the graded quadrature in [`quadrature`], and may carry a registered spatial
//! gradient.

mod io;
mod ops;
pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::nfunc::NFuncError;
use crate::scalar::Scalar;

pub use io::FieldDescriptor;
pub use quadrature::{integrate, integrate_fn, integrate_with, Integral, QuadratureSpec};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("containment: {0}")]
    Containment(String),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("evaluation at {point:?} failed: {detail}")]
    Evaluation { point: Vec<f64>, detail: String },
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    NFunc(#[from] NFuncError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FieldError {
    pub(crate) fn eval<T: Scalar>(p: &[T], detail: impl Into<String>) -> Self {
        FieldError::Evaluation {
            point: p.iter().map(|v| v.as_f64()).collect(),
            detail: detail.into(),
        }
    }
}

/// One coordinate axis `(lo, hi)` with endpoint openness flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    #[serde(default = "yes")]
    pub open_lo: bool,
    #[serde(default = "yes")]
    pub open_hi: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> Axis<T> {
    pub fn open(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            open_lo: true,
            open_hi: true,
        }
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }

    fn contains(&self, v: T) -> bool {
        let above = if self.open_lo { v > self.lo } else { v >= self.lo };
        let below = if self.open_hi { v < self.hi } else { v <= self.hi };
        above && below
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// A single spatial axis.
    #[serde(rename = "interval")]
    Interval1D,
    /// Time axis followed by one or two spatial axes.
    #[serde(rename = "space_time")]
    SpaceTimeBox,
}

/// Axis-aligned box: an interval, or `I × Ω` with `Ω` of dimension 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Domain<T> {
    kind: DomainKind,
    axes: Vec<Axis<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct RawDomain<T> {
    kind: DomainKind,
    axes: Vec<Axis<T>>,
}

impl<'de, T: Scalar> Deserialize<'de> for Domain<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawDomain::<T>::deserialize(d)?;
        Domain::new(raw.kind, raw.axes).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> Domain<T> {
    pub fn new(kind: DomainKind, axes: Vec<Axis<T>>) -> Result<Self, FieldError> {
        let ok_len = match kind {
            DomainKind::Interval1D => axes.len() == 1,
            DomainKind::SpaceTimeBox => axes.len() == 2 || axes.len() == 3,
        };
        if !ok_len {
            return Err(FieldError::Domain(format!(
                "{kind:?} cannot have {} axes",
                axes.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.lo < a.hi) || !a.lo.is_finite() || !a.hi.is_finite() {
                return Err(FieldError::Domain(format!(
                    "axis {i}: bounds ({}, {}) must be finite with lo < hi",
                    a.lo, a.hi
                )));
            }
        }
        Ok(Self { kind, axes })
    }

    /// The open interval `(lo, hi)`.
    pub fn interval(lo: T, hi: T) -> Result<Self, FieldError> {
        Self::new(DomainKind::Interval1D, vec![Axis::open(lo, hi)])
    }

    /// The open box `(t0, t1) × (x0, x1)`.
    pub fn space_time(t: (T, T), x: (T, T)) -> Result<Self, FieldError> {
        Self::new(
            DomainKind::SpaceTimeBox,
            vec![Axis::open(t.0, t.1), Axis::open(x.0, x.1)],
        )
    }

    /// The open box `(t0, t1) × (x0, x1) × (y0, y1)`.
    pub fn space_time_2d(t: (T, T), x: (T, T), y: (T, T)) -> Result<Self, FieldError> {
        Self::new(
            DomainKind::SpaceTimeBox,
            vec![Axis::open(t.0, t.1), Axis::open(x.0, x.1), Axis::open(y.0, y.1)],
        )
    }

    /// Sets the endpoint openness flags of one axis.
    pub fn with_closure(mut self, axis: usize, closed_lo: bool, closed_hi: bool) -> Self {
        self.axes[axis].open_lo = !closed_lo;
        self.axes[axis].open_hi = !closed_hi;
        self
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis<T> {
        &self.axes[i]
    }

    /// Indices of the spatial axes.
    pub fn spatial_axes(&self) -> std::ops::Range<usize> {
        match self.kind {
            DomainKind::Interval1D => 0..1,
            DomainKind::SpaceTimeBox => 1..self.axes.len(),
        }
    }

    pub fn time_axis(&self) -> Option<usize> {
        match self.kind {
            DomainKind::Interval1D => None,
            DomainKind::SpaceTimeBox => Some(0),
        }
    }

    pub fn axis_names(&self) -> Vec<&'static str> {
        match (self.kind, self.axes.len()) {
            (DomainKind::Interval1D, _) => vec!["x"],
            (_, 2) => vec!["t", "x"],
            _ => vec!["t", "x", "y"],
        }
    }

    pub fn measure(&self) -> T {
        self.axes.iter().map(|a| a.len()).fold(T::one(), |a, b| a * b)
    }

    /// Membership respecting the openness flags.
    pub fn contains(&self, p: &[T]) -> bool {
        p.len() == self.dim() && self.axes.iter().zip(p).all(|(a, &v)| a.contains(v))
    }

    pub fn contains_closed(&self, p: &[T]) -> bool {
        p.len() == self.dim()
            && self
                .axes
                .iter()
                .zip(p)
                .all(|(a, &v)| v >= a.lo && v <= a.hi)
    }

    /// Whether `other` is a sub-box of `self` (same kind and dimension).
    pub fn contains_domain(&self, other: &Domain<T>) -> bool {
        let slack = |a: &Axis<T>| a.len() * T::c(1e-12);
        self.kind == other.kind
            && self.dim() == other.dim()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                b.lo >= a.lo - slack(a) && b.hi <= a.hi + slack(a)
            })
    }
}

/// Value arity of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// `rows × cols`, stored row-major.
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(m) => m,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<(), FieldError> {
        if self.is_empty() {
            return Err(FieldError::Shape(format!("{self:?} has no components")));
        }
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        match *self {
            Shape::Scalar => vec!["v".into()],
            Shape::Vector(m) => (0..m).map(|i| format!("v{i}")).collect(),
            Shape::Matrix { rows, cols } => (0..rows)
                .flat_map(|r| (0..cols).map(move |c| format!("v{r}_{c}")))
                .collect(),
        }
    }
}

/// Euclidean norm of a vector, Frobenius norm of a matrix, `|v|` of a scalar.
#[inline]
pub fn frobenius<T: Scalar>(v: &[T]) -> T {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }
}

type EvalFn<T> = dyn Fn(&[T], &mut [T]) + Send + Sync;

/// Uniform cell-centred grid; cells are row-major (axis 0 slowest) with the
/// field components innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub resolution: Vec<usize>,
    pub values: Vec<T>,
}

#[derive(Clone)]
enum Repr<T: Scalar> {
    Analytic(Arc<EvalFn<T>>),
    Sampled(Arc<Grid<T>>),
}

/// Points per axis where the quadrature grades its cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Hints<T> {
    /// Possibly non-integrable points: graded and checked for divergence.
    pub singular: Vec<Vec<T>>,
    /// Points of reduced smoothness: graded only.
    pub kinks: Vec<Vec<T>>,
}

impl<T: Scalar> Hints<T> {
    fn for_dim(dim: usize) -> Self {
        Self {
            singular: vec![Vec::new(); dim],
            kinks: vec![Vec::new(); dim],
        }
    }

    fn push(list: &mut Vec<T>, v: T) {
        if !list.contains(&v) {
            list.push(v);
            list.sort_by(|a, b| a.partial_cmp(b).expect("finite hint"));
        }
    }

    pub(crate) fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (axis, pts) in other.singular.iter().enumerate() {
            for &p in pts {
                Self::push(&mut out.singular[axis], p);
            }
        }
        for (axis, pts) in other.kinks.iter().enumerate() {
            for &p in pts {
                Self::push(&mut out.kinks[axis], p);
            }
        }
        out
    }
}

/// A function over a [`Domain`] with values of a fixed [`Shape`].
#[derive(Clone)]
pub struct Field<T: Scalar> {
    domain: Domain<T>,
    shape: Shape,
    repr: Repr<T>,
    gradient: Option<Arc<Field<T>>>,
    hints: Hints<T>,
}

impl<T: Scalar> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let repr = match &self.repr {
            Repr::Analytic(_) => "analytic".to_string(),
            Repr::Sampled(g) => format!("sampled {:?}", g.resolution),
        };
        f.debug_struct("Field")
            .field("domain", &self.domain)
            .field("shape", &self.shape)
            .field("repr", &repr)
            .field("gradient", &self.gradient.is_some())
            .field("hints", &self.hints)
            .finish()
    }
}

impl<T: Scalar> Field<T> {
    pub fn analytic(
        domain: Domain<T>,
        shape: Shape,
        f: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
    ) -> Result<Self, FieldError> {
        shape.validate()?;
        let dim = domain.dim();
        Ok(Self {
            domain,
            shape,
            repr: Repr::Analytic(Arc::new(f)),
            gradient: None,
            hints: Hints::for_dim(dim),
        })
    }

    /// Analytic scalar field from a pointwise function.
    pub fn scalar_fn(domain: Domain<T>, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self::analytic(domain, Shape::Scalar, move |p, out| out[0] = f(p))
            .expect("scalar shape is valid")
    }

    /// Constant field with the given component values.
    pub fn constant(domain: Domain<T>, values: Vec<T>) -> Result<Self, FieldError> {
        let shape = if values.len() == 1 {
            Shape::Scalar
        } else {
            Shape::Vector(values.len())
        };
        Self::analytic(domain, shape, move |_, out| out.copy_from_slice(&values))
    }

    pub fn zero(domain: Domain<T>, shape: Shape) -> Result<Self, FieldError> {
        Self::analytic(domain, shape, |_, out| out.fill(T::zero()))
    }

    /// Sampled field from cell-centre values (layout as in [`Grid`]).
    pub fn sampled(
        domain: Domain<T>,
        shape: Shape,
        resolution: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, FieldError> {
        shape.validate()?;
        if resolution.len() != domain.dim() || resolution.contains(&0) {
            return Err(FieldError::Resolution(format!(
                "resolution {resolution:?} does not fit a {}-axis domain",
                domain.dim()
            )));
        }
        let cells: usize = resolution.iter().product();
        if values.len() != cells * shape.len() {
            return Err(FieldError::Shape(format!(
                "expected {} values, got {}",
                cells * shape.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::Format(format!("sampled value #{i} is not finite")));
        }
        let dim = domain.dim();
        Ok(Self {
            domain,
            shape,
            repr: Repr::Sampled(Arc::new(Grid { resolution, values })),
            gradient: None,
            hints: Hints::for_dim(dim),
        })
    }

    /// Attaches an exact spatial gradient, shape `m × n` for `m` components
    /// and `n` spatial axes.
    pub fn with_gradient(mut self, gradient: Field<T>) -> Result<Self, FieldError> {
        let want = self.gradient_shape()?;
        if gradient.shape != want {
            return Err(FieldError::Shape(format!(
                "gradient must be {want:?}, got {:?}",
                gradient.shape
            )));
        }
        if gradient.domain != self.domain {
            return Err(FieldError::Domain("gradient lives on a different domain".into()));
        }
        self.gradient = Some(Arc::new(gradient));
        Ok(self)
    }

    pub fn with_singular_point(mut self, axis: usize, at: T) -> Self {
        Hints::push(&mut self.hints.singular[axis], at);
        self
    }

    pub fn with_kink(mut self, axis: usize, at: T) -> Self {
        Hints::push(&mut self.hints.kinks[axis], at);
        self
    }

    pub(crate) fn with_hints(mut self, hints: Hints<T>) -> Self {
        self.hints = hints;
        self
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn hints(&self) -> &Hints<T> {
        &self.hints
    }

    pub fn gradient(&self) -> Option<&Field<T>> {
        self.gradient.as_deref()
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self.repr, Repr::Sampled(_))
    }

    pub fn grid(&self) -> Option<&Grid<T>> {
        match &self.repr {
            Repr::Sampled(g) => Some(g),
            Repr::Analytic(_) => None,
        }
    }

    /// `Matrix { rows: m, cols: n }` for `m` components and `n` spatial axes.
    pub fn gradient_shape(&self) -> Result<Shape, FieldError> {
        let rows = match self.shape {
            Shape::Scalar => 1,
            Shape::Vector(m) => m,
            Shape::Matrix { .. } => {
                return Err(FieldError::Shape("matrix fields have no gradient here".into()))
            }
        };
        Ok(Shape::Matrix {
            rows,
            cols: self.domain.spatial_axes().len(),
        })
    }

    /// Evaluates at `p` in the closed domain.
    pub fn eval(&self, p: &[T], out: &mut [T]) -> Result<(), FieldError> {
        if out.len() != self.shape.len() {
            return Err(FieldError::Shape(format!(
                "output buffer has {} slots for shape {:?}",
                out.len(),
                self.shape
            )));
        }
        if !self.domain.contains_closed(p) {
            return Err(FieldError::Containment(format!(
                "point {:?} lies outside the domain",
                p.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
            )));
        }
        self.eval_unchecked(p, out);
        Ok(())
    }

    /// Evaluates without containment or buffer checks.
    #[inline]
    pub(crate) fn eval_unchecked(&self, p: &[T], out: &mut [T]) {
        match &self.repr {
            Repr::Analytic(f) => f(p, out),
            Repr::Sampled(g) => ops::interpolate(&self.domain, g, self.shape.len(), p, out),
        }
    }

    pub fn eval_scalar(&self, p: &[T]) -> Result<T, FieldError> {
        if self.shape != Shape::Scalar {
            return Err(FieldError::Shape(format!("expected a scalar field, got {:?}", self.shape)));
        }
        let mut out = [T::zero()];
        self.eval(p, &mut out)?;
        Ok(out[0])
    }

    /// `|value|` at `p` (Frobenius for matrices).
    pub fn eval_norm(&self, p: &[T]) -> Result<T, FieldError> {
        let mut out = vec![T::zero(); self.shape.len()];
        self.eval(p, &mut out)?;
        Ok(frobenius(&out))
    }

    /// Cell-centre coordinates of a uniform grid over the domain.
    pub fn cell_centers(domain: &Domain<T>, resolution: &[usize]) -> Vec<Vec<T>> {
        domain
            .axes()
            .iter()
            .zip(resolution)
            .map(|(a, &n)| {
                let h = a.len() / T::from_usize_lossy(n);
                (0..n)
                    .map(|i| a.lo + h * (T::from_usize_lossy(i) + T::c(0.5)))
                    .collect()
            })
            .collect()
    }

    /// Samples the field at the cell centres of a uniform grid.
    pub fn sample(&self, resolution: &[usize]) -> Result<Field<T>, FieldError> {
        if resolution.len() != self.domain.dim() || resolution.contains(&0) {
            return Err(FieldError::Resolution(format!("bad resolution {resolution:?}")));
        }
        let centers = Self::cell_centers(&self.domain, resolution);
        let k = self.shape.len();
        let cells: usize = resolution.iter().product();
        let mut values = vec![T::zero(); cells * k];
        let mut p = vec![T::zero(); self.domain.dim()];
        for (cell, chunk) in values.chunks_mut(k).enumerate() {
            ops::unravel(cell, resolution, &centers, &mut p);
            self.eval_unchecked(&p, chunk);
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(FieldError::eval(&p, "non-finite value while sampling"));
            }
        }
        let mut out = Field::sampled(self.domain.clone(), self.shape, resolution.to_vec(), values)?
            .with_hints(self.hints.clone());
        if let Some(g) = &self.gradient {
            out.gradient = Some(Arc::new(g.sample(resolution)?));
        }
        Ok(out)
    }

    fn check_compatible(&self, other: &Field<T>) -> Result<(), FieldError> {
        if self.domain != other.domain {
            return Err(FieldError::Domain("fields live on different domains".into()));
        }
        if self.shape != other.shape {
            return Err(FieldError::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn same_grid<'a>(&'a self, other: &'a Field<T>) -> Option<(&'a Grid<T>, &'a Grid<T>)> {
        match (self.grid(), other.grid()) {
            (Some(a), Some(b)) if a.resolution == b.resolution => Some((a, b)),
            _ => None,
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: T, other: &Field<T>, b: T) -> Result<Field<T>, FieldError> {
        self.check_compatible(other)?;
        let hints = self.hints.union(&other.hints);
        let mut out = if let Some((ga, gb)) = self.same_grid(other) {
            let values = ga
                .values
                .iter()
                .zip(&gb.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect();
            Field::sampled(self.domain.clone(), self.shape, ga.resolution.clone(), values)?
        } else {
            let (f, g) = (self.clone(), other.clone());
            let k = self.shape.len();
            Field::analytic(self.domain.clone(), self.shape, move |p, out| {
                let mut tmp = vec![T::zero(); k];
                f.eval_unchecked(p, out);
                g.eval_unchecked(p, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o = a * *o + b * *t;
                }
            })?
        };
        out.hints = hints;
        if let (Some(ga), Some(gb)) = (&self.gradient, &other.gradient) {
            out.gradient = Some(Arc::new(ga.combine(a, gb, b)?));
        }
        Ok(out)
    }

    pub fn add(&self, other: &Field<T>) -> Result<Field<T>, FieldError> {
        self.combine(T::one(), other, T::one())
    }

    pub fn sub(&self, other: &Field<T>) -> Result<Field<T>, FieldError> {
        self.combine(T::one(), other, -T::one())
    }

    /// `c·self`.
    pub fn scale(&self, c: T) -> Field<T> {
        let mut out = self.map_components(move |v| c * v);
        if let Some(g) = &self.gradient {
            out.gradient = Some(Arc::new(g.scale(c)));
        }
        out
    }

    /// Applies `f` to every component; the gradient is dropped.
    pub fn map_components(&self, f: impl Fn(T) -> T + Send + Sync + 'static) -> Field<T> {
        let out = match self.grid() {
            Some(g) => Field::sampled(
                self.domain.clone(),
                self.shape,
                g.resolution.clone(),
                g.values.iter().map(|&v| f(v)).collect(),
            )
            .unwrap_or_else(|_| self.lift_map(f)),
            None => self.lift_map(f),
        };
        out.with_hints(self.hints.clone())
    }

    fn lift_map(&self, f: impl Fn(T) -> T + Send + Sync + 'static) -> Field<T> {
        let src = self.clone();
        Field::analytic(self.domain.clone(), self.shape, move |p, out| {
            src.eval_unchecked(p, out);
            for o in out.iter_mut() {
                *o = f(*o);
            }
        })
        .expect("shape already validated")
    }

    /// Pointwise `|self|` as a scalar field (Frobenius for vectors/matrices).
    pub fn norm(&self) -> Field<T> {
        let k = self.shape.len();
        let out = match self.grid() {
            Some(g) => Field::sampled(
                self.domain.clone(),
                Shape::Scalar,
                g.resolution.clone(),
                g.values.chunks(k).map(frobenius).collect(),
            )
            .expect("norm of finite values is finite"),
            None => {
                let src = self.clone();
                Field::analytic(self.domain.clone(), Shape::Scalar, move |p, out| {
                    let mut tmp = vec![T::zero(); k];
                    src.eval_unchecked(p, &mut tmp);
                    out[0] = frobenius(&tmp);
                })
                .expect("scalar shape")
            }
        };
        out.with_hints(self.hints.clone())
    }

    /// Spatial gradient: the registered one, otherwise finite differences.
    pub fn finite_diff_gradient(&self) -> Result<Field<T>, FieldError> {
        ops::finite_diff_gradient(self)
    }

    /// The same field viewed on a sub-box.
    pub fn restrict(&self, sub: &Domain<T>) -> Result<Field<T>, FieldError> {
        ops::restrict(self, sub)
    }
}

/// A strictly positive scalar weight.
#[derive(Clone, Debug)]
pub struct Weight<T: Scalar> {
    field: Field<T>,
    time_dependent: bool,
    bounds: (T, T),
}

/// Resolution of the positivity scan performed when building a weight.
pub const WEIGHT_SCAN: usize = 64;

impl<T: Scalar> Weight<T> {
    pub fn new(field: Field<T>, time_dependent: bool) -> Result<Self, FieldError> {
        if field.shape() != Shape::Scalar {
            return Err(FieldError::Shape("a weight must be scalar".into()));
        }
        let bounds = Self::scan(&field, WEIGHT_SCAN)?;
        Ok(Self {
            field,
            time_dependent,
            bounds,
        })
    }

    /// `w ≡ 1`.
    pub fn unit(domain: Domain<T>) -> Self {
        Self::new(Field::scalar_fn(domain, |_| T::one()), false).expect("unit weight is positive")
    }

    /// Time-independent weight `w(x)` given on the spatial coordinates.
    pub fn spatial(
        domain: Domain<T>,
        w: impl Fn(&[T]) -> T + Send + Sync + 'static,
    ) -> Result<Self, FieldError> {
        let start = domain.spatial_axes().start;
        Self::new(Field::scalar_fn(domain, move |p| w(&p[start..])), false)
    }

    fn scan(field: &Field<T>, n: usize) -> Result<(T, T), FieldError> {
        let res = vec![n; field.domain().dim()];
        let centers = Field::cell_centers(field.domain(), &res);
        let cells: usize = res.iter().product();
        let mut p = vec![T::zero(); res.len()];
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        let mut out = [T::zero()];
        for cell in 0..cells {
            ops::unravel(cell, &res, &centers, &mut p);
            field.eval_unchecked(&p, &mut out);
            let v = out[0];
            if !(v > T::zero()) || !v.is_finite() {
                return Err(FieldError::eval(&p, format!("weight value {v} is not positive")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    pub fn field(&self) -> &Field<T> {
        &self.field
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// `(min, max)` found by the construction-time grid scan.
    pub fn scanned_bounds(&self) -> (T, T) {
        self.bounds
    }

    /// Bounds over a sub-box from a grid scan at `n` cells per axis.
    pub fn bounds_on(&self, sub: &Domain<T>, n: usize) -> Result<(T, T), FieldError> {
        Self::scan(&self.field.restrict(sub)?, n)
    }

    #[inline]
    pub fn eval(&self, p: &[T]) -> T {
        let mut out = [T::zero()];
        self.field.eval_unchecked(p, &mut out);
        out[0]
    }
}

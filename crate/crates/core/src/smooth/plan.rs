//! Per-ring radius search against the four discrete budgets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cover::{mu, ExhaustionCover, PartitionOfUnity};
use super::kernel::{Mollifier, MollifierKind, MIN_KERNEL_CELLS};
use super::SmoothError;
use crate::field::{Domain, Field, Shape, Weight};
use crate::nfunc::{Generator, NFuncError};
use crate::scalar::{CompensatedSum, Scalar};

/// Smoothing parameters. Only `delta` is required in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct SmoothingOptions<T> {
    pub delta: T,
    /// Working grid: `resolution × resolution` cells.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Sup audits use a grid this many times finer.
    #[serde(default = "default_audit_factor")]
    pub audit_factor: usize,
    #[serde(default = "default_kernel_cells")]
    pub kernel_cells: usize,
    /// Partition step width as a fraction of the ring margin, in `(0, 1/4]`.
    #[serde(default = "default_fraction")]
    pub fraction: T,
    /// Rings beyond the working grid's reach are not planned by default.
    #[serde(default)]
    pub j_max: Option<usize>,
}

fn default_resolution() -> usize {
    64
}
fn default_audit_factor() -> usize {
    4
}
fn default_kernel_cells() -> usize {
    MIN_KERNEL_CELLS
}
fn default_fraction<T: Scalar>() -> T {
    T::c(0.25)
}

impl<T: Scalar> SmoothingOptions<T> {
    pub fn new(delta: T) -> Self {
        Self {
            delta,
            resolution: default_resolution(),
            audit_factor: default_audit_factor(),
            kernel_cells: default_kernel_cells(),
            fraction: default_fraction(),
            j_max: None,
        }
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.resolution = n;
        self
    }

    fn validate(&self) -> Result<(), SmoothError> {
        if !(self.delta > T::zero()) || !self.delta.is_finite() {
            return Err(SmoothError::Parameter(format!("δ = {} must be positive", self.delta)));
        }
        if self.resolution < 4 || self.audit_factor == 0 {
            return Err(SmoothError::Parameter("resolution ≥ 4 and audit factor ≥ 1 required".into()));
        }
        Ok(())
    }
}

/// Share of `δ` given to ring `j`: `c_j = 1/(j(j+1))`, so `Σ_j c_j = 1`.
pub fn ring_share<T: Scalar>(j: usize) -> T {
    mu(j)
}

/// Achieved value and cap of one budget; `passed` means `value < cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Budget<T> {
    pub value: T,
    pub cap: T,
    pub passed: bool,
}

impl<T: Scalar> Budget<T> {
    fn new(value: T, cap: T) -> Self {
        Self {
            value,
            cap,
            passed: value < cap,
        }
    }
}

/// Radius and budget ledger of one ring.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RingPlan<T> {
    pub j: usize,
    pub epsilon: T,
    /// Halvings from `δ/2`, including those needed for `ε < μ_{j+1}`.
    pub halvings: usize,
    /// `max(1, sup w)` over the ring on the audit grid.
    pub m_j: T,
    pub working_cells: usize,
    pub audit_points: usize,
    /// `Σ ζ_j |ρ*b_j − b|` (L¹).
    pub value: Budget<T>,
    /// `Σ ζ_j |ρ*Db_j − Db_j|` (L¹).
    pub gradient: Budget<T>,
    /// `Σ |∂x ζ_j| |ρ*b_j − b|` (L¹).
    pub cutoff_l1: Budget<T>,
    /// `sup |∂x ζ_j| |ρ*b_j − b|` on the audit grid.
    pub cutoff_sup: Budget<T>,
    /// `Σ_{supp ζ_j} |ρ*φ(|Db_j|) − φ(|Db_j|)|` (L¹).
    pub energy: Budget<T>,
}

/// Output of [`choose_radii`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct SmoothingPlan<T> {
    pub phi: String,
    pub delta: T,
    pub options: SmoothingOptions<T>,
    pub partition: PartitionOfUnity<T>,
    pub rings: Vec<RingPlan<T>>,
    /// Rings with empty interior (`ζ_j ≡ 0`).
    pub skipped: Vec<usize>,
    pub max_multiplicity: usize,
}

impl<T: Scalar> SmoothingPlan<T> {
    pub fn cover(&self) -> &ExhaustionCover<T> {
        &self.partition.cover
    }

    pub fn j_max(&self) -> usize {
        self.partition.cover.j_max
    }

    /// `ε_j`, zero for rings without a plan (beyond `j_max` or skipped).
    pub fn epsilon(&self, j: usize) -> T {
        self.rings
            .binary_search_by_key(&j, |r| r.j)
            .map_or(T::zero(), |i| self.rings[i].epsilon)
    }

    pub fn all_budgets_met(&self) -> bool {
        self.rings.iter().all(|r| {
            [r.value, r.gradient, r.cutoff_l1, r.cutoff_sup, r.energy]
                .iter()
                .all(|b| b.passed)
        }) && self.rings.iter().all(|r| r.epsilon > T::zero() && r.epsilon < self.delta)
    }
}

/// Convolution results at one point: `b`, `Db` and `φ(|Db|)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Local<T> {
    pub b: [T; 2],
    pub db: [T; 2],
    pub phi: T,
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// `b` and its spatial gradient `Db` (registered or by differences).
#[derive(Clone, Debug)]
pub(crate) struct Source<T: Scalar> {
    pub b: Field<T>,
    pub db: Field<T>,
    pub m: usize,
}

impl<T: Scalar> Source<T> {
    pub fn new(b: &Field<T>) -> Result<Self, SmoothError> {
        let m = match b.shape() {
            Shape::Scalar => 1,
            Shape::Vector(m) if m <= 2 => m,
            s => {
                return Err(SmoothError::Unsupported(format!(
                    "smoothing handles scalar or 2-vector fields, got {s:?}"
                )))
            }
        };
        let db = b.finite_diff_gradient()?;
        Ok(Self { b: b.clone(), db, m })
    }

    pub fn domain(&self) -> &Domain<T> {
        self.b.domain()
    }

    #[inline]
    fn raw(&self, q: &[T]) -> ([T; 2], [T; 2]) {
        let mut b = [T::zero(); 2];
        let mut db = [T::zero(); 2];
        self.b.eval_unchecked(q, &mut b[..self.m]);
        self.db.eval_unchecked(q, &mut db[..self.m]);
        (b, db)
    }

    /// Values at `p` itself.
    pub fn at<G: Generator<T> + ?Sized>(&self, p: &[T], phi: Option<&G>) -> Result<Local<T>, NFuncError> {
        let (b, db) = self.raw(p);
        let phi = match phi {
            Some(g) => g.eval(norm2(&db[..self.m]))?,
            None => T::zero(),
        };
        Ok(Local { b, db, phi })
    }

    /// Discrete convolution with `kernel` at `p`. The caller guarantees the
    /// kernel ball stays inside `{ψ_j = 1}`, where `b_j = b`, `Db_j = Db`.
    pub fn conv<G: Generator<T> + ?Sized>(
        &self,
        kernel: &Mollifier<T>,
        p: &[T],
        phi: Option<&G>,
    ) -> Result<Local<T>, NFuncError> {
        let mut out = Local {
            b: [T::zero(); 2],
            db: [T::zero(); 2],
            phi: T::zero(),
        };
        let mut q = [T::zero(); 2];
        for (z, w) in kernel.nodes() {
            q[0] = p[0] - z[0];
            q[1] = p[1] - z[1];
            let (b, db) = self.raw(&q);
            for c in 0..self.m {
                out.b[c] += w * b[c];
                out.db[c] += w * db[c];
            }
            if let Some(g) = phi {
                out.phi += w * g.eval(norm2(&db[..self.m]))?;
            }
        }
        Ok(out)
    }

    pub fn diff(&self, a: &[T; 2], b: &[T; 2]) -> T {
        let mut d = [T::zero(); 2];
        for c in 0..self.m {
            d[c] = a[c] - b[c];
        }
        norm2(&d[..self.m])
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RingPoint<T> {
    pub p: [T; 2],
    pub zeta: T,
    pub dzeta: T,
}

/// Points of an `n × n` grid grouped by ring `j ≤ j_max` (index `j`).
pub(crate) fn group_by_ring<T: Scalar>(partition: &PartitionOfUnity<T>, n: usize) -> Vec<Vec<RingPoint<T>>> {
    let cover = &partition.cover;
    let centers = Field::cell_centers(&cover.domain(), &[n, n]);
    let per_row: Vec<Vec<(usize, RingPoint<T>)>> = centers[0]
        .par_iter()
        .map(|&t| {
            let mut row = Vec::new();
            for &x in &centers[1] {
                let p = [t, x];
                for w in partition.weights(&p) {
                    if w.zeta > T::zero() && w.j <= cover.j_max {
                        row.push((
                            w.j,
                            RingPoint {
                                p,
                                zeta: w.zeta,
                                dzeta: w.dzeta,
                            },
                        ));
                    }
                }
            }
            row
        })
        .collect();
    let mut out = vec![Vec::new(); cover.j_max + 1];
    for row in per_row {
        for (j, rp) in row {
            out[j].push(rp);
        }
    }
    out
}

struct RingInput<'a, T: Scalar, G: ?Sized> {
    j: usize,
    source: &'a Source<T>,
    phi: &'a G,
    kernel: &'a Mollifier<T>,
    working: &'a [RingPoint<T>],
    audit: &'a [RingPoint<T>],
    cell: T,
    m_j: T,
    delta: T,
}

struct Trial<T> {
    value: Budget<T>,
    gradient: Budget<T>,
    cutoff_l1: Budget<T>,
    cutoff_sup: Budget<T>,
    energy: Budget<T>,
}

impl<T: Scalar> Trial<T> {
    fn first_failure(&self) -> Option<(&'static str, Budget<T>)> {
        [
            ("a: value", self.value),
            ("b: gradient", self.gradient),
            ("c: cutoff L1", self.cutoff_l1),
            ("c: cutoff sup", self.cutoff_sup),
            ("d: energy", self.energy),
        ]
        .into_iter()
        .find(|(_, b)| !b.passed)
    }
}

impl<T: Scalar, G: Generator<T> + ?Sized> RingInput<'_, T, G> {
    fn trial(&self, eps: T) -> Trial<T> {
        let kernel = self.kernel.with_radius(eps);
        let share = self.delta * ring_share::<T>(self.j);
        let half = T::c(0.5);
        let (mut a, mut b, mut c, mut d) = (
            CompensatedSum::new(),
            CompensatedSum::new(),
            CompensatedSum::new(),
            CompensatedSum::new(),
        );
        let mut saturated = false;
        for rp in self.working {
            let here = self.source.at(&rp.p, Some(self.phi));
            let conv = self.source.conv(&kernel, &rp.p, Some(self.phi));
            let (here, conv) = match (here, conv) {
                (Ok(h), Ok(c)) => (h, c),
                _ => {
                    saturated = true;
                    let h = self.source.at::<G>(&rp.p, None).expect("no φ");
                    let c = self.source.conv::<G>(&kernel, &rp.p, None).expect("no φ");
                    (h, c)
                }
            };
            let gap_b = self.source.diff(&conv.b, &here.b);
            a.add(rp.zeta * gap_b);
            b.add(rp.zeta * self.source.diff(&conv.db, &here.db));
            c.add(rp.dzeta.abs() * gap_b);
            d.add((conv.phi - here.phi).abs());
        }
        let energy_value = if saturated { T::infinity() } else { d.value() * self.cell };
        let mut trial = Trial {
            value: Budget::new(a.value() * self.cell, share),
            gradient: Budget::new(b.value() * self.cell, share * half),
            cutoff_l1: Budget::new(c.value() * self.cell, share * half / self.m_j),
            cutoff_sup: Budget::new(T::zero(), share * half / self.m_j),
            energy: Budget::new(energy_value, share / self.m_j),
        };
        if trial.first_failure().is_none() {
            let sup = self
                .audit
                .iter()
                .map(|rp| {
                    let here = self.source.at::<G>(&rp.p, None).expect("no φ");
                    let conv = self.source.conv::<G>(&kernel, &rp.p, None).expect("no φ");
                    rp.dzeta.abs() * self.source.diff(&conv.b, &here.b)
                })
                .fold(T::zero(), T::max);
            trial.cutoff_sup = Budget::new(sup, trial.cutoff_sup.cap);
        }
        trial
    }

    fn search(&self) -> Result<RingPlan<T>, SmoothError> {
        let two = T::c(2.0);
        let floor = T::c(1e-12) * self.delta;
        let mut eps = self.delta / two;
        let mut halvings = 0;
        while eps >= mu::<T>(self.j + 1) {
            eps /= two;
            halvings += 1;
        }
        loop {
            let t = self.trial(eps);
            match t.first_failure() {
                None => {
                    return Ok(RingPlan {
                        j: self.j,
                        epsilon: eps,
                        halvings,
                        m_j: self.m_j,
                        working_cells: self.working.len(),
                        audit_points: self.audit.len(),
                        value: t.value,
                        gradient: t.gradient,
                        cutoff_l1: t.cutoff_l1,
                        cutoff_sup: t.cutoff_sup,
                        energy: t.energy,
                    })
                }
                Some((name, budget)) => {
                    if eps / two < floor {
                        return Err(SmoothError::Plan {
                            j: self.j,
                            budget: name.to_string(),
                            epsilon: eps.as_f64(),
                            achieved: budget.value.as_f64(),
                            cap: budget.cap.as_f64(),
                        });
                    }
                    eps /= two;
                    halvings += 1;
                }
            }
        }
    }
}

/// Finds `ε_j ∈ (0, δ)` for every ring `j ≤ j_max` such that the four
/// budgets hold, halving from `δ/2`. Rings are searched in parallel and
/// reported in increasing `j`.
pub fn choose_radii<T, G>(
    b: &Field<T>,
    phi: &G,
    w: &Weight<T>,
    opts: &SmoothingOptions<T>,
) -> Result<SmoothingPlan<T>, SmoothError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    opts.validate()?;
    let source = Source::new(b)?;
    if w.field().domain() != b.domain() {
        return Err(SmoothError::Parameter("weight and field live on different domains".into()));
    }
    let domain = b.domain();
    let cover = match opts.j_max {
        Some(j) => ExhaustionCover::new(domain, j)?,
        None => ExhaustionCover::for_resolution(domain, opts.resolution)?,
    };
    let partition = PartitionOfUnity::new(cover, opts.fraction)?;
    let kernel = Mollifier::new(MollifierKind::SpaceTime, T::one(), opts.kernel_cells)?;
    let n_audit = opts.resolution * opts.audit_factor;
    let working = group_by_ring(&partition, opts.resolution);
    let audit = group_by_ring(&partition, n_audit);
    let cell = domain.measure() / T::from_usize_lossy(opts.resolution * opts.resolution);
    let w_global = w.scanned_bounds().1;
    let skipped: Vec<usize> = (1..=cover.j_max).filter(|&j| cover.is_degenerate(j)).collect();
    let rings: Vec<RingPlan<T>> = (1..=cover.j_max)
        .into_par_iter()
        .filter(|j| !skipped.contains(j))
        .map(|j| {
            let sup_w = if audit[j].is_empty() && working[j].is_empty() {
                w_global
            } else {
                audit[j]
                    .iter()
                    .chain(&working[j])
                    .map(|rp| w.eval(&rp.p))
                    .fold(T::zero(), T::max)
            };
            RingInput {
                j,
                source: &source,
                phi,
                kernel: &kernel,
                working: &working[j],
                audit: &audit[j],
                cell,
                m_j: sup_w.max(T::one()),
                delta: opts.delta,
            }
            .search()
        })
        .collect::<Result<_, _>>()?;
    let audit_report = cover.audit(&partition, n_audit);
    Ok(SmoothingPlan {
        phi: phi.label(),
        delta: opts.delta,
        options: opts.clone(),
        partition,
        rings,
        skipped,
        max_multiplicity: audit_report.max_multiplicity.max(audit_report.max_active),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nfunc::NFunction;

    fn unit() -> Domain<f64> {
        Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn shares_sum_to_one() {
        let s: f64 = (1..100_000).map(ring_share::<f64>).sum();
        assert!((s - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_field_first_try() {
        let b = Field::zero(unit(), Shape::Scalar).unwrap();
        let opts = SmoothingOptions::new(1e-2).with_resolution(16);
        let plan = choose_radii(&b, &NFunction::exp_star(), &Weight::unit(unit()), &opts).unwrap();
        assert!(plan.all_budgets_met());
        for r in &plan.rings {
            assert_eq!(r.value.value, 0.0);
            assert_eq!(r.energy.value, 0.0);
            // Only the halvings forced by ε < μ_{j+1}.
            assert!(r.epsilon * 2.0 >= mu::<f64>(r.j + 1).min(1e-2));
        }
        assert_eq!(plan.skipped, vec![1]);
        assert!(plan.max_multiplicity <= 4);
    }

    #[test]
    fn linear_field_budgets_strict() {
        let b = Field::scalar_fn(unit(), |p| p[1]);
        let opts = SmoothingOptions::new(1e-2).with_resolution(16);
        let plan = choose_radii(&b, &NFunction::exp_star(), &Weight::unit(unit()), &opts).unwrap();
        assert!(plan.all_budgets_met());
        for r in &plan.rings {
            for budget in [r.value, r.gradient, r.cutoff_l1, r.cutoff_sup, r.energy] {
                assert!(budget.value < budget.cap);
            }
        }
    }

    #[test]
    fn kink_radii_shrink_with_j() {
        let b = Field::scalar_fn(unit(), |p| (p[1] - 0.5).abs()).with_kink(1, 0.5);
        let opts = SmoothingOptions::new(1e-2).with_resolution(16);
        let plan = choose_radii(&b, &NFunction::exp_star(), &Weight::unit(unit()), &opts).unwrap();
        assert!(plan.all_budgets_met());
        assert!(plan.rings.windows(2).all(|w| w[1].epsilon <= w[0].epsilon));
        assert!(plan.rings.iter().all(|r| r.epsilon > 0.0 && r.epsilon < 1e-2));
    }

    #[test]
    fn options_json() {
        let o: SmoothingOptions<f64> = serde_json::from_str(r#"{"delta": 0.01}"#).unwrap();
        assert_eq!(o, SmoothingOptions::new(0.01));
        assert!(serde_json::from_str::<SmoothingOptions<f64>>(r#"{"delta": 0.01, "nope": 1}"#).is_err());
        assert!(choose_radii(
            &Field::zero(unit(), Shape::Scalar).unwrap(),
            &NFunction::exp_star(),
            &Weight::unit(unit()),
            &SmoothingOptions::new(-1.0)
        )
        .is_err());
    }
}

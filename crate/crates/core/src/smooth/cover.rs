//! Exhaustion of `Q = I × Ω` by the sets `U_k = {r < k}`, where
//! `r(p) = max(1/dist(p, ∂Q), |s| + |x|)`, the rings
//! `Q_j = U_{j+1} ∖ closure(U_{j−1})`, and a closed-form partition of unity
//! subordinate to them.

use serde::{Deserialize, Serialize};

use super::SmoothError;
use crate::field::{Domain, DomainKind, Field};
use crate::scalar::Scalar;

/// `f(z)/(f(z) + f(1−z))` with `f(z) = e^{−1/z}`, and its derivative.
/// Equal to 0 for `z ≤ 0` and 1 for `z ≥ 1`, smooth in between.
pub fn smooth_step<T: Scalar>(z: T) -> (T, T) {
    if z <= T::zero() {
        return (T::zero(), T::zero());
    }
    if z >= T::one() {
        return (T::one(), T::zero());
    }
    let y = T::one() - z;
    let a = (-z.recip()).exp();
    let b = (-y.recip()).exp();
    let s = a + b;
    let d = a * b * (z * z).recip() + a * b * (y * y).recip();
    (a / s, d / (s * s))
}

/// Running product with its `x`-derivative.
#[derive(Clone, Copy)]
struct Prod<T> {
    v: T,
    dx: T,
}

impl<T: Scalar> Prod<T> {
    fn one() -> Self {
        Self {
            v: T::one(),
            dx: T::zero(),
        }
    }

    /// Multiplies by `σ(arg)` where `∂x arg = darg`.
    fn step(&mut self, arg: T, darg: T) {
        let (s, ds) = smooth_step(arg);
        self.dx = self.dx * s + self.v * ds * darg;
        self.v *= s;
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `μ_j = 1/j − 1/(j+1)`: the gap between consecutive margins.
pub(crate) fn mu<T: Scalar>(j: usize) -> T {
    let j = T::from_usize_lossy(j);
    (j * (j + T::one())).recip()
}

/// The exhaustion of a space-time box `(t0, t1) × (x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ExhaustionCover<T> {
    pub t: (T, T),
    pub x: (T, T),
    pub j_max: usize,
}

/// Result of a grid audit of an [`ExhaustionCover`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverAudit {
    pub points: usize,
    /// Largest number of rings `Q_j` containing one audit point.
    pub max_multiplicity: usize,
    /// Largest number of nonzero `ζ_j` at one audit point.
    pub max_active: usize,
    /// Audit points that lie in no ring `Q_j` with `j ≤ j_max`.
    pub beyond_j_max: usize,
}

impl<T: Scalar> ExhaustionCover<T> {
    pub fn new(domain: &Domain<T>, j_max: usize) -> Result<Self, SmoothError> {
        if domain.kind() != DomainKind::SpaceTimeBox || domain.dim() != 2 {
            return Err(SmoothError::Unsupported(
                "smoothing is implemented on space-time boxes with one spatial axis".into(),
            ));
        }
        if j_max < 3 {
            return Err(SmoothError::Parameter(format!("j_max = {j_max} must be at least 3")));
        }
        let (t, x) = (domain.axis(0), domain.axis(1));
        Ok(Self {
            t: (t.lo, t.hi),
            x: (x.lo, x.hi),
            j_max,
        })
    }

    /// Smallest cover whose rings reach every cell centre of an `n × n` grid.
    pub fn for_resolution(domain: &Domain<T>, n: usize) -> Result<Self, SmoothError> {
        let probe = Self::new(domain, 3)?;
        let centers = Field::cell_centers(domain, &[n, n]);
        let mut r_max = T::zero();
        for &t in &centers[0] {
            for &x in &centers[1] {
                r_max = r_max.max(probe.radius(&[t, x]));
            }
        }
        let j_max = (r_max.floor().as_f64() as usize + 1).max(3);
        Self::new(domain, j_max)
    }

    pub fn domain(&self) -> Domain<T> {
        Domain::space_time(self.t, self.x).expect("cover built from a valid box")
    }

    /// Distances of `p` to the four faces: `t − t0, t1 − t, x − x0, x1 − x`.
    fn faces(&self, p: &[T]) -> [T; 4] {
        [p[0] - self.t.0, self.t.1 - p[0], p[1] - self.x.0, self.x.1 - p[1]]
    }

    pub fn boundary_distance(&self, p: &[T]) -> T {
        self.faces(p).into_iter().fold(T::infinity(), T::min)
    }

    /// `r(p) = max(1/dist(p, ∂Q), |s| + |x|)`; infinite on and outside `∂Q`.
    pub fn radius(&self, p: &[T]) -> T {
        let d = self.boundary_distance(p);
        if !(d > T::zero()) {
            return T::infinity();
        }
        d.recip().max(p[0].abs() + p[1].abs())
    }

    /// `p ∈ U_k`; `U_0 = ∅`.
    pub fn in_exhaustion(&self, k: usize, p: &[T]) -> bool {
        k > 0 && self.radius(p) < T::from_usize_lossy(k)
    }

    /// `p ∈ Q_j`, i.e. `j − 1 < r(p) < j + 1`.
    pub fn in_ring(&self, j: usize, p: &[T]) -> bool {
        let r = self.radius(p);
        let j = T::from_usize_lossy(j);
        j >= T::one() && r > j - T::one() && r < j + T::one()
    }

    /// Indices of the rings containing `p` (at most two).
    pub fn rings_at(&self, p: &[T]) -> Vec<usize> {
        let r = self.radius(p);
        if !r.is_finite() {
            return Vec::new();
        }
        let base = r.floor().as_f64() as usize;
        [base, base + 1]
            .into_iter()
            .filter(|&j| j >= 1 && self.in_ring(j, p))
            .collect()
    }

    /// Lower bound of `r` over `Q`.
    fn radius_floor(&self) -> T {
        let half = T::c(0.5);
        let d_max = (half * (self.t.1 - self.t.0)).min(half * (self.x.1 - self.x.0));
        let nearest = |(lo, hi): (T, T)| {
            if lo <= T::zero() && hi >= T::zero() {
                T::zero()
            } else {
                lo.abs().min(hi.abs())
            }
        };
        d_max.recip().max(nearest(self.t) + nearest(self.x))
    }

    /// Whether `Q_j` is empty because `r > j + 1` throughout `Q`.
    pub fn is_degenerate(&self, j: usize) -> bool {
        j == 0 || T::from_usize_lossy(j + 1) <= self.radius_floor()
    }

    /// Fails unless every point at distance `≥ margin` from `∂Q` lies in a
    /// ring `Q_j` with `j ≤ j_max`.
    pub fn require_margin(&self, margin: T) -> Result<(), SmoothError> {
        let l1 = self.t.0.abs().max(self.t.1.abs()) + self.x.0.abs().max(self.x.1.abs());
        let needed = margin.recip().max(l1);
        if needed < T::from_usize_lossy(self.j_max + 1) {
            Ok(())
        } else {
            Err(SmoothError::Parameter(format!(
                "j_max = {} does not reach margin {margin}: need r < {}",
                self.j_max,
                self.j_max + 1
            )))
        }
    }

    /// Multiplicity audit on the cell centres of an `n × n` grid.
    pub fn audit(&self, partition: &PartitionOfUnity<T>, n: usize) -> CoverAudit {
        let centers = Field::cell_centers(&self.domain(), &[n, n]);
        let mut out = CoverAudit {
            points: n * n,
            max_multiplicity: 0,
            max_active: 0,
            beyond_j_max: 0,
        };
        for &t in &centers[0] {
            for &x in &centers[1] {
                let p = [t, x];
                let rings = self.rings_at(&p);
                out.max_multiplicity = out.max_multiplicity.max(rings.len());
                if rings.iter().all(|&j| j > self.j_max) {
                    out.beyond_j_max += 1;
                }
                let active = partition.weights(&p).iter().filter(|w| w.zeta > T::zero()).count();
                out.max_active = out.max_active.max(active);
            }
        }
        out
    }
}

/// `ζ_j(p)` and `∂x ζ_j(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingWeight<T> {
    pub j: usize,
    pub zeta: T,
    pub dzeta: T,
}

/// Smooth partition of unity `{ζ_j}` with cutoffs `ψ_j`.
///
/// With `In_k` the product of steps rising from 0 on `dist = 1/k`
/// (and on `|s ± x| = k`) to 1 one width further in, and `Out_k` the same
/// steps shifted outward by one width,
/// `η_j = In_{j+1} (1 − Out_{j−1})` is positive exactly on `Q_j`, and
/// `ζ_j = η_j / Σ_k η_k`. Face widths are `fraction · μ_j`, diamond widths
/// `fraction`. The cutoff `ψ_j = In_{j+3}` (face width `μ_{j+2}`) equals 1
/// wherever `dist ≥ 1/(j+2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PartitionOfUnity<T> {
    pub cover: ExhaustionCover<T>,
    pub fraction: T,
}

impl<T: Scalar> PartitionOfUnity<T> {
    pub fn new(cover: ExhaustionCover<T>, fraction: T) -> Result<Self, SmoothError> {
        if !(fraction > T::zero() && fraction <= T::c(0.25)) {
            return Err(SmoothError::Parameter(format!(
                "partition width fraction {fraction} must lie in (0, 1/4]"
            )));
        }
        Ok(Self { cover, fraction })
    }

    /// `In_k` (`outward = false`) or `Out_k` (`outward = true`) at `p`.
    fn level(&self, k: usize, width: T, outward: bool, p: &[T]) -> Prod<T> {
        let kk = T::from_usize_lossy(k);
        let shift = if outward { width } else { T::zero() };
        let wd = self.fraction;
        let dshift = if outward { wd } else { T::zero() };
        let faces = self.cover.faces(p);
        let dfaces = [T::zero(), T::zero(), T::one(), -T::one()];
        let mut out = Prod::one();
        for (f, df) in faces.into_iter().zip(dfaces) {
            out.step((f - kk.recip() + shift) / width, df / width);
        }
        let (plus, minus) = (p[0] + p[1], p[0] - p[1]);
        out.step((kk + dshift - plus.abs()) / wd, -sign(plus) / wd);
        out.step((kk + dshift - minus.abs()) / wd, sign(minus) / wd);
        out
    }

    fn eta(&self, j: usize, p: &[T]) -> (T, T) {
        let w = self.fraction * mu::<T>(j);
        let inner = self.level(j + 1, w, false, p);
        if j == 1 {
            return (inner.v, inner.dx);
        }
        let outer = self.level(j - 1, w, true, p);
        let keep = T::one() - outer.v;
        (inner.v * keep, inner.dx * keep - inner.v * outer.dx)
    }

    /// All `(j, ζ_j, ∂x ζ_j)` that may be nonzero at `p` (at most two).
    pub fn weights(&self, p: &[T]) -> Vec<RingWeight<T>> {
        let rings = self.cover.rings_at(p);
        let etas: Vec<(usize, T, T)> = rings
            .iter()
            .map(|&j| {
                let (e, de) = self.eta(j, p);
                (j, e, de)
            })
            .collect();
        let s = etas.iter().fold(T::zero(), |acc, e| acc + e.1);
        let ds = etas.iter().fold(T::zero(), |acc, e| acc + e.2);
        if !(s > T::zero()) {
            return Vec::new();
        }
        etas.into_iter()
            .map(|(j, e, de)| RingWeight {
                j,
                zeta: e / s,
                dzeta: (de * s - e * ds) / (s * s),
            })
            .collect()
    }

    pub fn zeta(&self, j: usize, p: &[T]) -> T {
        self.weights(p)
            .into_iter()
            .find(|w| w.j == j)
            .map_or(T::zero(), |w| w.zeta)
    }

    /// `ψ_j(p)` and `∂x ψ_j(p)`.
    pub fn psi(&self, j: usize, p: &[T]) -> (T, T) {
        if !(self.cover.boundary_distance(p) > T::zero()) {
            return (T::zero(), T::zero());
        }
        let c = self.level(j + 3, mu::<T>(j + 2), false, p);
        (c.v, c.dx)
    }
}

/// Builds the exhaustion of `domain` with rings up to `j_max`.
pub fn build_cover<T: Scalar>(domain: &Domain<T>, j_max: usize) -> Result<ExhaustionCover<T>, SmoothError> {
    ExhaustionCover::new(domain, j_max)
}

pub fn build_partition<T: Scalar>(cover: ExhaustionCover<T>, fraction: T) -> Result<PartitionOfUnity<T>, SmoothError> {
    PartitionOfUnity::new(cover, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cover(j_max: usize) -> ExhaustionCover<f64> {
        build_cover(&Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap(), j_max).unwrap()
    }

    #[test]
    fn step_limits_and_derivative() {
        assert_eq!(smooth_step(-1.0f64), (0.0, 0.0));
        assert_eq!(smooth_step(1.5), (1.0, 0.0));
        assert!((smooth_step(0.5).0 - 0.5f64).abs() < 1e-15);
        for z in [0.1f64, 0.3, 0.7, 0.95] {
            let h = 1e-6;
            let fd = (smooth_step(z + h).0 - smooth_step(z - h).0) / (2.0 * h);
            assert!((fd - smooth_step(z).1).abs() < 1e-7);
        }
    }

    #[test]
    fn margin_requirement() {
        let c = unit_cover(12);
        c.require_margin(0.1).unwrap();
        assert!(unit_cover(5).require_margin(0.1).is_err());
        let audit = c.audit(&build_partition(c, 0.25).unwrap(), 64);
        assert!(audit.max_multiplicity <= 4 && audit.max_active <= 4);
    }

    #[test]
    fn u0_is_empty_and_rings_unfold() {
        let c = unit_cover(12);
        let p = [0.2, 0.5];
        assert!(!c.in_exhaustion(0, &p));
        assert!(!c.in_exhaustion(5, &p));
        for k in 6..12 {
            assert!(c.in_exhaustion(k, &p));
        }
        assert_eq!(c.rings_at(&p), vec![5]);
        assert!(c.is_degenerate(1));
        assert!(!c.is_degenerate(2));
    }

    #[test]
    fn partition_sums_to_one() {
        let c = unit_cover(200);
        let part = build_partition(c, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = [rng.gen_range(1e-4..1.0 - 1e-4), rng.gen_range(1e-4..1.0 - 1e-4)];
            let ws = part.weights(&p);
            let s: f64 = ws.iter().map(|w| w.zeta).sum();
            let ds: f64 = ws.iter().map(|w| w.dzeta).sum();
            assert!((s - 1.0).abs() < 1e-10, "{p:?}");
            assert!(ds.abs() < 1e-6 * (1.0 + ws.iter().map(|w| w.dzeta.abs()).sum::<f64>()));
            for w in &ws {
                assert!(c.in_ring(w.j, &p) || w.zeta == 0.0);
                assert!(w.zeta >= 0.0);
            }
        }
    }

    #[test]
    fn zeta_vanishes_off_ring() {
        let part = build_partition(unit_cover(50), 0.25).unwrap();
        let p = [0.5, 0.051];
        assert_eq!(part.cover.rings_at(&p), vec![19, 20]);
        assert_eq!(part.zeta(3, &p), 0.0);
        assert_eq!(part.zeta(25, &p), 0.0);
    }

    #[test]
    fn zeta_derivative_matches_differences() {
        let part = build_partition(unit_cover(50), 0.25).unwrap();
        for &(t, x) in &[(0.5, 0.0835), (0.3, 0.9), (0.6, 0.21)] {
            for w in part.weights(&[t, x]) {
                let h = 1e-7;
                let fd = (part.zeta(w.j, &[t, x + h]) - part.zeta(w.j, &[t, x - h])) / (2.0 * h);
                assert!((fd - w.dzeta).abs() < 1e-4 * (1.0 + fd.abs()), "{t} {x} j={}", w.j);
            }
        }
    }

    #[test]
    fn psi_is_one_on_ring() {
        let c = unit_cover(60);
        let part = build_partition(c, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for j in [2usize, 5, 17, 40] {
            let mut hits = 0;
            while hits < 100 {
                let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                if c.in_ring(j, &p) {
                    hits += 1;
                    let (v, dv) = part.psi(j, &p);
                    assert!((v - 1.0).abs() < 1e-12 && dv == 0.0);
                }
            }
        }
    }

    #[test]
    fn diamond_rings_off_origin() {
        // Far from the origin the |s| + |x| term dominates r.
        let d = Domain::<f64>::space_time((0.0, 1.0), (6.0, 7.0)).unwrap();
        let c = build_cover(&d, 40).unwrap();
        let part = build_partition(c, 0.25).unwrap();
        assert!(c.is_degenerate(5));
        let p = [0.5, 6.5];
        assert!(c.radius(&p) >= 7.0);
        let s: f64 = part.weights(&p).iter().map(|w| w.zeta).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn multiplicity_at_most_four(t in 1e-6f64..1.0, x in 1e-6f64..1.0) {
            let c = unit_cover(1000);
            prop_assume!(c.boundary_distance(&[t, x]) > 0.0);
            prop_assert!(c.rings_at(&[t, x]).len() <= 4);
            prop_assert!(!c.rings_at(&[t, x]).is_empty());
        }
    }
}

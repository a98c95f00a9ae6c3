//! The bump mollifier `ρ_ε(z) = C ε^{-d} exp(1/(|z|²/ε² − 1))` on `|z| < ε`
//! and its discrete counterpart: cell-centre nodes of a `cells^d` grid on
//! `[−ε, ε]^d`, weights proportional to the bump and summing to one.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::SmoothError;
use crate::scalar::{compensated_sum, Scalar};

/// Minimum cells per axis across the kernel support.
pub const MIN_KERNEL_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    /// Over `(t, x)`.
    SpaceTime,
    /// Over `t` only.
    TimeOnly,
}

impl MollifierKind {
    pub fn dim(self) -> usize {
        match self {
            MollifierKind::SpaceTime => 2,
            MollifierKind::TimeOnly => 1,
        }
    }
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// `∫_{|z|<1} exp(1/(|z|² − 1)) dz` in dimension 1 or 2, by a fine midpoint
/// rule in the radial variable (the integrand is flat at both ends).
fn unit_mass(dim: usize) -> f64 {
    static MASS: OnceLock<[f64; 2]> = OnceLock::new();
    let m = MASS.get_or_init(|| {
        let n = 200_000;
        let h = 1.0 / n as f64;
        let one = 2.0 * compensated_sum((0..n).map(|i| bump(((i as f64 + 0.5) * h).powi(2)) * h));
        let two = 2.0
            * std::f64::consts::PI
            * compensated_sum((0..n).map(|i| {
                let r = (i as f64 + 0.5) * h;
                r * bump(r * r) * h
            }));
        [one, two]
    });
    m[dim - 1]
}

/// A discrete mollifier of radius `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier<T> {
    kind: MollifierKind,
    radius: T,
    cells: usize,
    /// Node offsets on the unit ball; `(s, x)` with `x = 0` for time-only.
    unit_nodes: Vec<[T; 2]>,
    weights: Vec<T>,
}

impl<T: Scalar> Mollifier<T> {
    pub fn new(kind: MollifierKind, radius: T, cells: usize) -> Result<Self, SmoothError> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(SmoothError::Parameter(format!("mollifier radius {radius} must be positive")));
        }
        if cells < MIN_KERNEL_CELLS {
            return Err(SmoothError::Parameter(format!(
                "kernel needs at least {MIN_KERNEL_CELLS} cells per axis, got {cells}"
            )));
        }
        let h = 2.0 / cells as f64;
        let coord = |i: usize| -1.0 + (i as f64 + 0.5) * h;
        let mut raw: Vec<([f64; 2], f64)> = Vec::new();
        match kind {
            MollifierKind::TimeOnly => {
                for i in 0..cells {
                    let s = coord(i);
                    raw.push(([s, 0.0], bump(s * s)));
                }
            }
            MollifierKind::SpaceTime => {
                for i in 0..cells {
                    for k in 0..cells {
                        let (s, x) = (coord(i), coord(k));
                        raw.push(([s, x], bump(s * s + x * x)));
                    }
                }
            }
        }
        raw.retain(|(_, w)| *w > 0.0);
        let total = compensated_sum(raw.iter().map(|(_, w)| *w));
        Ok(Self {
            kind,
            radius,
            cells,
            unit_nodes: raw.iter().map(|(z, _)| [T::c(z[0]), T::c(z[1])]).collect(),
            weights: raw.iter().map(|(_, w)| T::c(w / total)).collect(),
        })
    }

    pub fn kind(&self) -> MollifierKind {
        self.kind
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Same nodes, new radius.
    pub fn with_radius(&self, radius: T) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }

    /// `(offset, weight)` pairs; `ρ * f(p) ≈ Σ weight · f(p − offset)`.
    pub fn nodes(&self) -> impl Iterator<Item = ([T; 2], T)> + '_ {
        let r = self.radius;
        self.unit_nodes
            .iter()
            .zip(&self.weights)
            .map(move |(z, &w)| ([z[0] * r, z[1] * r], w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> T {
        compensated_sum(self.weights.iter().copied())
    }

    /// Continuous density `ρ_ε(z)`.
    pub fn density(&self, z: &[T]) -> T {
        let d = self.kind.dim();
        let r2 = z[..d].iter().fold(T::zero(), |acc, &v| acc + v * v) / (self.radius * self.radius);
        T::c(bump(r2.as_f64()) / unit_mass(d)) / self.radius.powi(d as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_weights_normalised() {
        for kind in [MollifierKind::SpaceTime, MollifierKind::TimeOnly] {
            for cells in [16, 17, 40] {
                let m = Mollifier::new(kind, 0.01f64, cells).unwrap();
                assert!((m.weight_sum() - 1.0).abs() < 1e-10);
                assert!(m.nodes().all(|(z, w)| w > 0.0 && z[0].hypot(z[1]) < 0.01));
            }
        }
        assert!(Mollifier::new(MollifierKind::SpaceTime, 0.1f64, 8).is_err());
        assert!(Mollifier::new(MollifierKind::SpaceTime, 0.0f64, 16).is_err());
    }

    #[test]
    fn density_has_unit_mass_and_support() {
        let m = Mollifier::new(MollifierKind::SpaceTime, 0.3f64, 16).unwrap();
        let n = 600;
        let h = 0.6 / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..n {
                let z = [-0.3 + (i as f64 + 0.5) * h, -0.3 + (k as f64 + 0.5) * h];
                total += m.density(&z) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert_eq!(m.density(&[0.3, 0.0]), 0.0);
        assert!(m.density(&[0.299, 0.0]) >= 0.0);
        let t = Mollifier::new(MollifierKind::TimeOnly, 2.0f64, 16).unwrap();
        let h = 4.0 / 20_000.0;
        let mass: f64 = (0..20_000).map(|i| t.density(&[-2.0 + (i as f64 + 0.5) * h]) * h).sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_nodes_reproduce_linear() {
        let m = Mollifier::new(MollifierKind::SpaceTime, 0.05f64, 16).unwrap();
        let f = |t: f64, x: f64| 2.0 * t - 3.0 * x + 1.0;
        let (t, x) = (0.4, 0.6);
        let conv: f64 = m.nodes().map(|(z, w)| w * f(t - z[0], x - z[1])).sum();
        assert!((conv - f(t, x)).abs() < 1e-14);
    }
}

use std::sync::Arc;

use super::{Domain, Field, FieldError, Grid, Hints, Repr, Shape};
use crate::scalar::Scalar;

/// Writes the cell-centre coordinates of flat cell index `cell` into `p`.
#[inline]
pub(crate) fn unravel<T: Scalar>(cell: usize, res: &[usize], centers: &[Vec<T>], p: &mut [T]) {
    let mut rem = cell;
    for axis in (0..res.len()).rev() {
        p[axis] = centers[axis][rem % res[axis]];
        rem /= res[axis];
    }
}

#[inline]
fn flat(idx: &[usize], res: &[usize]) -> usize {
    idx.iter().zip(res).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Multilinear interpolation between cell centres, constant beyond the
/// outermost centres.
pub(crate) fn interpolate<T: Scalar>(
    domain: &Domain<T>,
    grid: &Grid<T>,
    k: usize,
    p: &[T],
    out: &mut [T],
) {
    let d = grid.resolution.len();
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for axis in 0..d {
        let a = domain.axis(axis);
        let n = grid.resolution[axis];
        if n == 1 {
            continue;
        }
        let h = a.len() / T::from_usize_lossy(n);
        let u = (p[axis] - a.lo) / h - T::c(0.5);
        let max_base = T::from_usize_lossy(n - 2);
        let i0 = u.floor().max(T::zero()).min(max_base);
        base[axis] = i0.to_usize().unwrap_or(0);
        frac[axis] = (u - i0).max(T::zero()).min(T::one());
    }
    out.fill(T::zero());
    let mut idx = [0usize; 3];
    for corner in 0..(1usize << d) {
        let mut wgt = T::one();
        for axis in 0..d {
            let up = (corner >> axis) & 1 == 1;
            let n = grid.resolution[axis];
            idx[axis] = if up && n > 1 { base[axis] + 1 } else { base[axis] };
            wgt *= if up { frac[axis] } else { T::one() - frac[axis] };
        }
        if wgt == T::zero() {
            continue;
        }
        let cell = flat(&idx[..d], &grid.resolution);
        for (o, &v) in out.iter_mut().zip(&grid.values[cell * k..cell * k + k]) {
            *o += wgt * v;
        }
    }
}

pub(crate) fn finite_diff_gradient<T: Scalar>(f: &Field<T>) -> Result<Field<T>, FieldError> {
    if let Some(g) = f.gradient() {
        return Ok(g.clone());
    }
    let shape = f.gradient_shape()?;
    let grad = match &f.repr {
        Repr::Sampled(grid) => sampled_gradient(f, grid, shape)?,
        Repr::Analytic(_) => analytic_gradient(f, shape),
    };
    Ok(grad.with_hints(f.hints().clone()))
}

fn sampled_gradient<T: Scalar>(
    f: &Field<T>,
    grid: &Grid<T>,
    shape: Shape,
) -> Result<Field<T>, FieldError> {
    let domain = f.domain();
    let res = &grid.resolution;
    let spatial = domain.spatial_axes();
    for axis in spatial.clone() {
        if res[axis] < 3 {
            return Err(FieldError::Resolution(format!(
                "finite differences need at least 3 cells along axis {axis}, got {}",
                res[axis]
            )));
        }
    }
    let centers = Field::cell_centers(domain, res);
    let m = f.shape().len();
    let n = spatial.len();
    let cells: usize = res.iter().product();
    let mut values = vec![T::zero(); cells * m * n];
    let mut idx = vec![0usize; res.len()];
    for cell in 0..cells {
        let mut rem = cell;
        for axis in (0..res.len()).rev() {
            idx[axis] = rem % res[axis];
            rem /= res[axis];
        }
        for (c, axis) in spatial.clone().enumerate() {
            let i = idx[axis];
            let len = res[axis];
            let xs = &centers[axis];
            let mut at = idx.clone();
            let mut val = |j: usize, r: usize| {
                at[axis] = j;
                grid.values[flat(&at, res) * m + r]
            };
            for r in 0..m {
                let d = if i == 0 {
                    let h = (xs[2] - xs[0]) / T::c(2.0);
                    (T::c(-3.0) * val(0, r) + T::c(4.0) * val(1, r) - val(2, r)) / (h + h)
                } else if i == len - 1 {
                    let h = (xs[len - 1] - xs[len - 3]) / T::c(2.0);
                    (T::c(3.0) * val(len - 1, r) - T::c(4.0) * val(len - 2, r) + val(len - 3, r))
                        / (h + h)
                } else {
                    (val(i + 1, r) - val(i - 1, r)) / (xs[i + 1] - xs[i - 1])
                };
                values[cell * m * n + r * n + c] = d;
            }
        }
    }
    Field::sampled(domain.clone(), shape, res.clone(), values)
}

fn analytic_gradient<T: Scalar>(f: &Field<T>, shape: Shape) -> Field<T> {
    let src = f.clone();
    let domain = f.domain().clone();
    let spatial = domain.spatial_axes();
    let m = f.shape().len();
    let n = spatial.len();
    let step_rel = T::epsilon().cbrt();
    let dom = domain.clone();
    Field::analytic(domain, shape, move |p, out| {
        let mut q = p.to_vec();
        let mut a = vec![T::zero(); m];
        let mut b = vec![T::zero(); m];
        let mut c = vec![T::zero(); m];
        for (col, axis) in spatial.clone().enumerate() {
            let ax = dom.axis(axis);
            let x = p[axis];
            let h = step_rel * x.abs().max(ax.len());
            let (xp, xm) = (x + h, x - h);
            if xm >= ax.lo && xp <= ax.hi {
                q[axis] = xp;
                src.eval_unchecked(&q, &mut a);
                q[axis] = xm;
                src.eval_unchecked(&q, &mut b);
                for r in 0..m {
                    out[r * n + col] = (a[r] - b[r]) / (xp - xm);
                }
            } else {
                let s = if xm < ax.lo { h } else { -h };
                let (x1, x2) = (x + s, x + s + s);
                q[axis] = x;
                src.eval_unchecked(&q, &mut a);
                q[axis] = x1;
                src.eval_unchecked(&q, &mut b);
                q[axis] = x2;
                src.eval_unchecked(&q, &mut c);
                for r in 0..m {
                    out[r * n + col] =
                        (T::c(-3.0) * a[r] + T::c(4.0) * b[r] - c[r]) / (x2 - x);
                }
            }
            q[axis] = x;
        }
    })
    .expect("gradient shape is valid")
}

fn aligned_range<T: Scalar>(lo: T, h: T, a: T, b: T, n: usize) -> Option<(usize, usize)> {
    let ia = (a - lo) / h;
    let ib = (b - lo) / h;
    let tol = T::c(1e-9);
    let (ra, rb) = (ia.round(), ib.round());
    if (ia - ra).abs() > tol || (ib - rb).abs() > tol {
        return None;
    }
    let (sa, sb) = (ra.to_usize()?, rb.to_usize()?);
    (sa < sb && sb <= n).then_some((sa, sb))
}

pub(crate) fn restrict<T: Scalar>(f: &Field<T>, sub: &Domain<T>) -> Result<Field<T>, FieldError> {
    if !f.domain().contains_domain(sub) {
        return Err(FieldError::Containment(format!(
            "{sub:?} is not contained in {:?}",
            f.domain()
        )));
    }
    if sub == f.domain() {
        return Ok(f.clone());
    }
    let hints = Hints {
        singular: filter_hints(&f.hints().singular, sub),
        kinks: filter_hints(&f.hints().kinks, sub),
    };
    let sliced = match &f.repr {
        Repr::Sampled(grid) => slice_grid(f, grid, sub)?,
        Repr::Analytic(_) => None,
    };
    let mut out = match sliced {
        Some(s) => s,
        None => {
            let src = f.clone();
            Field::analytic(sub.clone(), f.shape(), move |p, out| src.eval_unchecked(p, out))?
        }
    };
    out.hints = hints;
    if let Some(g) = f.gradient() {
        out.gradient = Some(Arc::new(restrict(g, sub)?));
    }
    Ok(out)
}

fn filter_hints<T: Scalar>(lists: &[Vec<T>], sub: &Domain<T>) -> Vec<Vec<T>> {
    lists
        .iter()
        .zip(sub.axes())
        .map(|(pts, a)| pts.iter().copied().filter(|&v| v >= a.lo && v <= a.hi).collect())
        .collect()
}

fn slice_grid<T: Scalar>(
    f: &Field<T>,
    grid: &Grid<T>,
    sub: &Domain<T>,
) -> Result<Option<Field<T>>, FieldError> {
    let res = &grid.resolution;
    let mut ranges = Vec::with_capacity(res.len());
    for (axis, (a, s)) in f.domain().axes().iter().zip(sub.axes()).enumerate() {
        let h = a.len() / T::from_usize_lossy(res[axis]);
        match aligned_range(a.lo, h, s.lo, s.hi, res[axis]) {
            Some(r) => ranges.push(r),
            None => return Ok(None),
        }
    }
    let new_res: Vec<usize> = ranges.iter().map(|(a, b)| b - a).collect();
    let k = f.shape().len();
    let cells: usize = new_res.iter().product();
    let mut values = Vec::with_capacity(cells * k);
    let mut idx = vec![0usize; res.len()];
    for cell in 0..cells {
        let mut rem = cell;
        for axis in (0..res.len()).rev() {
            idx[axis] = ranges[axis].0 + rem % new_res[axis];
            rem /= new_res[axis];
        }
        let src = flat(&idx, res);
        values.extend_from_slice(&grid.values[src * k..src * k + k]);
    }
    Field::sampled(sub.clone(), f.shape(), new_res, values).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{integrate, QuadratureSpec};

    fn st() -> Domain<f64> {
        Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn linear_gradient_exact() {
        let b = Field::scalar_fn(st(), |p| 3.0 * p[1] - 2.0 * p[0]);
        let g = b.finite_diff_gradient().unwrap();
        for x in [1e-3, 0.3, 0.999_999] {
            assert!(g.eval_scalar(&[0.5, x]).is_err());
            let mut out = [0.0];
            g.eval(&[0.5, x], &mut out).unwrap();
            assert!((out[0] - 3.0).abs() < 1e-9, "{}", out[0]);
        }
        let s = b.sample(&[8, 16]).unwrap();
        let gs = s.finite_diff_gradient().unwrap();
        for v in &gs.grid().unwrap().values {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_sine_gradient() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (0.0, 1.0)).unwrap();
        let b = Field::scalar_fn(d.clone(), |p| p[1].sin()).sample(&[2, 1000]).unwrap();
        let g = b.finite_diff_gradient().unwrap();
        let centers = Field::cell_centers(&d, &[2, 1000]);
        let vals = &g.grid().unwrap().values;
        for j in 1..999 {
            assert!((vals[j] - centers[1][j].cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_gradient_is_zero() {
        let b = Field::constant(st(), vec![2.5]).unwrap();
        let g = b.sample(&[4, 4]).unwrap().finite_diff_gradient().unwrap();
        assert!(g.grid().unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn registered_gradient_wins() {
        let d = Domain::<f64>::interval(0.0, 1.0).unwrap();
        let g = Field::analytic(d.clone(), Shape::Matrix { rows: 1, cols: 1 }, |_, o| o[0] = 7.0)
            .unwrap();
        let b = Field::scalar_fn(d, |p| p[0]).with_gradient(g).unwrap();
        let mut out = [0.0];
        b.finite_diff_gradient().unwrap().eval(&[0.5], &mut out).unwrap();
        assert_eq!(out[0], 7.0);
    }

    #[test]
    fn restrict_and_integrate() {
        let f = Field::scalar_fn(Domain::<f64>::interval(-1.0, 2.0).unwrap(), |p| p[0] * p[0]);
        let r = f.restrict(&Domain::<f64>::interval(0.0, 1.0).unwrap()).unwrap();
        let v = integrate(&r, &QuadratureSpec::default()).unwrap().value().unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
        assert!(f.restrict(&Domain::<f64>::interval(0.0, 3.0).unwrap()).is_err());
    }

    #[test]
    fn restrict_nested_equals_single() {
        let d = Domain::<f64>::interval(0.0, 1.0).unwrap();
        let s = Field::scalar_fn(d, |p| p[0].exp()).sample(&[20]).unwrap();
        let a = Domain::<f64>::interval(0.2, 0.8).unwrap();
        let b = Domain::<f64>::interval(0.3, 0.6).unwrap();
        let once = s.restrict(&b).unwrap();
        let twice = s.restrict(&a).unwrap().restrict(&b).unwrap();
        assert!(once.is_sampled() && twice.is_sampled());
        assert_eq!(once.grid(), twice.grid());
        let full = s.restrict(s.domain()).unwrap();
        assert_eq!(full.grid(), s.grid());
        let odd = s.restrict(&Domain::<f64>::interval(0.21, 0.6).unwrap()).unwrap();
        assert!(!odd.is_sampled());
        let p = [0.4];
        assert_eq!(odd.eval_scalar(&p).unwrap(), s.eval_scalar(&p).unwrap());
    }

    #[test]
    fn interpolation_reproduces_linear() {
        let d = st();
        let f = Field::scalar_fn(d, |p| 2.0 * p[0] + p[1]).sample(&[5, 7]).unwrap();
        let v = f.eval_scalar(&[0.37, 0.61]).unwrap();
        assert!((v - (0.74 + 0.61)).abs() < 1e-14);
    }
}

//! Time-only mollification `b^ε(t, x) = ∫ ρ_ε(t − s) b̄(s, x) ds`, with `b̄`
//! the extension of `b` by zero outside `I`.

use super::kernel::{Mollifier, MollifierKind};
use super::SmoothError;
use crate::field::{DomainKind, Field};
use crate::scalar::Scalar;

/// Default kernel resolution along `t`.
pub const TIME_KERNEL_CELLS: usize = 64;

/// Returns `b^ε` with `ρ_ε * Db̄` registered as its gradient.
pub fn time_mollify<T: Scalar>(b: &Field<T>, eps: T, cells: usize) -> Result<Field<T>, SmoothError> {
    if b.domain().kind() != DomainKind::SpaceTimeBox {
        return Err(SmoothError::Unsupported("time mollification needs a space-time domain".into()));
    }
    let kernel = Mollifier::new(MollifierKind::TimeOnly, eps, cells)?;
    let nodes: Vec<(T, T)> = kernel.nodes().map(|(z, w)| (z[0], w)).collect();
    let db = b.finite_diff_gradient()?;
    let time = *b.domain().axis(0);
    let inside = move |t: T| t > time.lo && t < time.hi;

    let mollify = |f: Field<T>| {
        let nodes = nodes.clone();
        let k = f.shape().len();
        Field::analytic(f.domain().clone(), f.shape(), move |p, out| {
            out.fill(T::zero());
            let mut q = p.to_vec();
            let mut tmp = vec![T::zero(); k];
            for &(s, w) in &nodes {
                q[0] = p[0] - s;
                if !inside(q[0]) {
                    continue;
                }
                f.eval_unchecked(&q, &mut tmp);
                for (o, v) in out.iter_mut().zip(&tmp) {
                    *o += w * *v;
                }
            }
        })
    };
    let mut hints = b.hints().clone();
    hints.kinks[0].clear();
    hints.singular[0].clear();
    let value = mollify(b.clone())?;
    let grad = mollify(db)?;
    Ok(value.with_gradient(grad)?.with_hints(hints))
}

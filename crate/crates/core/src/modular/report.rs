//! Convergence-mode classification over a finite ladder `u_h → u`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{luxemburg_norm, scaled_modular, ModularError};
use crate::field::{Field, FieldError, QuadratureSpec, Weight};
use crate::nfunc::Generator;
use crate::scalar::Scalar;

/// Ladder settings for [`classify_sequence`].
#[derive(Debug, Clone)]
pub struct ClassifyOptions<T: Scalar> {
    /// Scales tried for modular convergence, `N_φ((u_h − u)/λ)`.
    pub lambdas: Vec<T>,
    /// Trend threshold applied at the final index.
    pub tol: T,
    /// Relative bracket width of the Luxemburg bisection.
    pub norm_tol: T,
    /// Optional weight: all modulars become `∫ w φ(|·|)`.
    pub weight: Option<Weight<T>>,
}

impl<T: Scalar> ClassifyOptions<T> {
    pub fn new(lambdas: Vec<T>, tol: T) -> Self {
        Self {
            lambdas,
            tol,
            norm_tol: T::c(1e-8),
            weight: None,
        }
    }

    pub fn with_weight(mut self, w: Weight<T>) -> Self {
        self.weight = Some(w);
        self
    }
}

/// One rung of the ladder. `None` marks a diverged modular (or, for the
/// norm, a failed bracket).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct LadderEntry<T> {
    pub h: T,
    /// `N_φ(u_h − u)`.
    pub mean: Option<T>,
    /// `N_φ((u_h − u)/λ)` per ladder `λ`.
    pub scaled: Vec<Option<T>>,
    pub modular_h: Option<T>,
    /// `|N_φ(u_h) − N_φ(u)|`.
    pub energy_gap: Option<T>,
    /// `‖u_h − u‖_φ`.
    pub norm: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ConvergenceFlags<T> {
    /// Luxemburg norms non-increasing and below `tol` at the last index.
    pub norm: bool,
    /// Same trend for `N_φ(u_h − u)`; also set whenever `norm` is.
    pub mean: bool,
    /// Smallest ladder `λ` whose scaled modulars trend to zero.
    pub modular: Option<T>,
    /// `|N_φ(u_h) − N_φ(u)|` trends to zero.
    pub energy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ConvergenceReport<T> {
    pub phi: String,
    pub lambdas: Vec<T>,
    pub tol: T,
    pub weighted: bool,
    /// `N_φ(u)`.
    pub target: Option<T>,
    pub entries: Vec<LadderEntry<T>>,
    pub flags: ConvergenceFlags<T>,
}

/// Finite-data trend: all values finite, non-increasing up to rounding,
/// and at most `tol` at the final index.
pub fn trend_to_zero<T: Scalar>(values: &[Option<T>], tol: T) -> bool {
    let Some(vals) = values.iter().copied().collect::<Option<Vec<T>>>() else {
        return false;
    };
    let Some(&last) = vals.last() else {
        return false;
    };
    let slack = T::c(1e-12);
    vals.windows(2).all(|w| w[1] <= w[0] + slack * (T::one() + w[0].abs())) && last.abs() <= tol
}

fn finite_or_none<T: Scalar>(r: Result<super::ModularValue<T>, ModularError>) -> Result<Option<T>, ModularError> {
    use crate::nfunc::NFuncError;
    match r {
        Ok(m) => Ok(m.value()),
        Err(ModularError::Field(FieldError::NFunc(NFuncError::Saturation { .. }))) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Computes the four convergence modes for `us[i] → u` along `hs`.
pub fn classify_sequence<T, G>(
    phi: &G,
    hs: &[T],
    us: &[Field<T>],
    u: &Field<T>,
    opts: &ClassifyOptions<T>,
    q: &QuadratureSpec<T>,
) -> Result<ConvergenceReport<T>, ModularError>
where
    T: Scalar,
    G: Generator<T> + ?Sized,
{
    if hs.len() != us.len() || hs.is_empty() {
        return Err(ModularError::Input(format!(
            "{} ladder indices for {} fields",
            hs.len(),
            us.len()
        )));
    }
    if hs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ModularError::Input("ladder indices must be strictly increasing".into()));
    }
    if opts.lambdas.is_empty() || opts.lambdas.iter().any(|&l| !(l > T::zero())) {
        return Err(ModularError::Input("λ ladder must be nonempty and positive".into()));
    }
    if !(opts.tol > T::zero()) {
        return Err(ModularError::Input("tolerance must be positive".into()));
    }
    let w = opts.weight.as_ref();
    let target = finite_or_none(scaled_modular(phi, u, T::one(), w, q))?;
    let entries: Vec<LadderEntry<T>> = hs
        .par_iter()
        .zip(us)
        .map(|(&h, uh)| {
            let diff = uh.sub(u)?;
            let mean = finite_or_none(scaled_modular(phi, &diff, T::one(), w, q))?;
            let scaled = opts
                .lambdas
                .iter()
                .map(|&l| finite_or_none(scaled_modular(phi, &diff, l, w, q)))
                .collect::<Result<Vec<_>, _>>()?;
            let modular_h = finite_or_none(scaled_modular(phi, uh, T::one(), w, q))?;
            let energy_gap = match (modular_h, target) {
                (Some(a), Some(b)) => Some((a - b).abs()),
                _ => None,
            };
            let norm = if w.is_some() {
                None
            } else {
                match luxemburg_norm(phi, &diff, q, opts.norm_tol) {
                    Ok(n) => Some(n),
                    Err(ModularError::Bracket(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok(LadderEntry {
                h,
                mean,
                scaled,
                modular_h,
                energy_gap,
                norm,
            })
        })
        .collect::<Result<_, ModularError>>()?;
    let col = |f: &dyn Fn(&LadderEntry<T>) -> Option<T>| entries.iter().map(f).collect::<Vec<_>>();
    let norm = trend_to_zero(&col(&|e| e.norm), opts.tol);
    let mean = norm || trend_to_zero(&col(&|e| e.mean), opts.tol);
    let modular = opts
        .lambdas
        .iter()
        .enumerate()
        .filter(|&(k, _)| trend_to_zero(&col(&|e| e.scaled[k]), opts.tol))
        .map(|(_, &l)| l)
        .fold(None, |acc: Option<T>, l| Some(acc.map_or(l, |a| a.min(l))));
    let energy = trend_to_zero(&col(&|e| e.energy_gap), opts.tol);
    Ok(ConvergenceReport {
        phi: phi.label(),
        lambdas: opts.lambdas.clone(),
        tol: opts.tol,
        weighted: w.is_some(),
        target,
        entries,
        flags: ConvergenceFlags {
            norm,
            mean,
            modular,
            energy,
        },
    })
}

fn cell<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(|| "diverged".to_string(), |x| x.to_string())
}

impl<T: Scalar> ConvergenceReport<T> {
    /// One row per ladder index; diverged entries read `diverged`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FieldError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["h".to_string(), "mean".to_string()];
        header.extend(self.lambdas.iter().map(|l| format!("modular_lambda_{l}")));
        header.extend(["modular_h", "energy_gap", "norm"].map(String::from));
        out.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.h.to_string(), cell(e.mean)];
            row.extend(e.scaled.iter().map(|&v| cell(v)));
            row.extend([cell(e.modular_h), cell(e.energy_gap), cell(e.norm)]);
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

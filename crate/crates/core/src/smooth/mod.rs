//! Constructive Meyers–Serrin smoothing on a space-time box `Q = I × Ω`
//! (`Ω` an interval), the time-only mollification, and the audits of the
//! resulting energy bounds.
//!
//! The pipeline is [`choose_radii`] → [`smooth`] → audits, or
//! [`verify_energy_convergence`] for a whole `δ` ladder.

mod cover;
mod kernel;
mod plan;
mod smoothed;
mod time;

pub use cover::{
    build_cover, build_partition, smooth_step, CoverAudit, ExhaustionCover, PartitionOfUnity,
    RingWeight,
};
pub use kernel::{Mollifier, MollifierKind, MIN_KERNEL_CELLS};
pub use plan::{choose_radii, ring_share, Budget, RingPlan, SmoothingOptions, SmoothingPlan};
pub use smoothed::{
    audit_points, check_domination, check_jensen_step, smooth, verify_energy_convergence,
    DominationReport, EnergyConvergence, EnergyEntry, EnergyReport, JensenReport, LadderSettings,
    Smoothed, SmoothedValue, subadditivity_constant,
};
pub use time::{time_mollify, TIME_KERNEL_CELLS};

use thiserror::Error;

use crate::field::FieldError;
use crate::modular::ModularError;
use crate::nfunc::NFuncError;

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error(transparent)]
    NFunc(#[from] NFuncError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Halving reached `1e-12·δ` with a budget still unmet.
    #[error("ring {j}: budget ({budget}) unmet at radius floor {epsilon:e}: {achieved:e} ≥ cap {cap:e}")]
    Plan {
        j: usize,
        budget: String,
        epsilon: f64,
        achieved: f64,
        cap: f64,
    },
}

//! Equation-free coarse analysis of particles in a shear flow.
//!
//! A stochastic particle model is wrapped in lift / evolve / restrict
//! operators acting on a Legendre-coefficient description of the joint
//! distribution. On top of that sit a detector for the scale invariance of
//! the unknown macroscopic equation and a coarse renormalization loop that
//! finds its self-similar solution.

#![cfg_attr(not(feature = "std"), no_std)]
// Negated comparisons deliberately treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod basis;
pub mod coarse;
pub mod error;
pub mod invariance;
pub mod microsim;
pub mod oracle;
pub mod renorm;
pub mod rng;
pub mod special;

pub use coarse::{lift, restrict, BasisSpec, CoarseState, EmpiricalIcdf};
pub use error::{Error, Result};
pub use invariance::{
    solve_p, BurstEstimator, ClosedFormEstimator, InvarianceProbe, InvarianceReport,
    NewtonSettings, OperatorEstimate, OperatorEstimator, TestDensity,
};
pub use microsim::{ensemble_moments, step_ensemble, EnsembleMoments, ParticleEnsemble, SimConfig};
pub use renorm::{
    estimate_alpha, fixed_point, renorm_step, rescale, AlphaEstimate, MomentSummary, RenormConfig,
    RenormTrace, TemplateAnchor, TemplateCondition,
};

/// Runs `f` for each copy index, in parallel when enabled, returning results
/// in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_copies<T, F>(copies: usize, f: F) -> Result<alloc::vec::Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..copies).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_copies<T, F>(copies: usize, f: F) -> Result<alloc::vec::Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..copies).map(f).collect()
}

//! Coarse renormalization: repeated lift, evolve, restrict, rescale, driven
//! to a fixed point that represents the self-similar solution.

use alloc::vec::Vec;
use libm::pow;

use crate::basis::Projector;
use crate::coarse::{lift, restrict_using, CoarseState};
use crate::error::{positive, Error, Result};
use crate::microsim::{ensemble_moments, step_ensemble, EnsembleMoments, SimConfig};
use crate::rng::{derive_seed, LABEL_ALPHA, LABEL_LIFT, LABEL_MOMENTS};

/// Pins the marginal ICDF: the rescaled state must satisfy `F_x⁻¹(m) = e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateCondition {
    /// Target value, cm. Must be negative.
    pub e: f64,
    /// Marginal quantile in `(0, 0.5)`.
    pub m: f64,
}

impl TemplateCondition {
    pub fn new(e: f64, m: f64) -> Result<Self> {
        if !(e < 0.0 && e.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "template_e",
                reason: "must be negative",
                value: e,
            });
        }
        if !(m > 0.0 && m < 0.5) {
            return Err(Error::InvalidParameter {
                name: "template_m",
                reason: "must lie in (0, 0.5)",
                value: m,
            });
        }
        Ok(Self { e, m })
    }
}

impl Default for TemplateCondition {
    fn default() -> Self {
        Self { e: -2.266, m: 0.4 }
    }
}

/// Which marginal quantile the template pins during a renormalization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TemplateAnchor {
    /// The empirical ICDF of the evolved particles, before projection.
    #[default]
    Empirical,
    /// The reconstructed (projected) marginal ICDF.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenormConfig {
    pub template: TemplateCondition,
    /// Evolution horizon `T'` per step, s.
    pub horizon: f64,
    pub exponent_p: f64,
    pub copies: usize,
    pub particles: usize,
    pub max_iterations: usize,
    /// Threshold on [`CoarseState::relative_change`], met on two consecutive
    /// iterations.
    pub tolerance: f64,
    pub seed: u64,
    /// Particles lifted to report moments of each iterate.
    pub moment_particles: usize,
    pub anchor: TemplateAnchor,
    /// Iterations kept running after convergence, to sample the stationary
    /// spread of the fixed point.
    pub extra_iterations: usize,
}

impl Default for RenormConfig {
    fn default() -> Self {
        Self {
            template: TemplateCondition::default(),
            horizon: 1.5,
            exponent_p: 3.0,
            copies: 200,
            particles: 5000,
            max_iterations: 10,
            tolerance: 0.05,
            seed: 0,
            moment_particles: 1_000_000,
            anchor: TemplateAnchor::Empirical,
            extra_iterations: 0,
        }
    }
}

impl RenormConfig {
    pub fn validate(&self) -> Result<()> {
        TemplateCondition::new(self.template.e, self.template.m)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be finite and non-negative",
                value: self.horizon,
            });
        }
        positive("exponent_p", self.exponent_p)?;
        positive("tolerance", self.tolerance)?;
        if self.copies == 0 || self.particles == 0 || self.moment_particles < 2 {
            return Err(Error::InvalidParameter {
                name: "copies",
                reason: "copies, particles and moment_particles must be positive",
                value: self.copies as f64,
            });
        }
        Ok(())
    }
}

/// Rescales so that the reconstructed marginal ICDF passes through the
/// template. Returns the new state and the factor `A`.
pub fn rescale(
    state: &CoarseState,
    template: &TemplateCondition,
    p: f64,
) -> Result<(CoarseState, f64)> {
    let q = state.marginal_icdf(template.m);
    let a = template_factor(q, template)?;
    Ok((rescale_by(state, a, p), a))
}

/// `x → x / A`, `y → y / A^p`.
pub fn rescale_by(state: &CoarseState, a: f64, p: f64) -> CoarseState {
    state.scaled(1.0 / a, 1.0 / pow(a, p))
}

fn template_factor(quantile: f64, template: &TemplateCondition) -> Result<f64> {
    let a = quantile / template.e;
    if a.is_finite() && a > 0.0 {
        Ok(a)
    } else {
        Err(Error::TemplateIncompatible {
            quantile,
            e: template.e,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: CoarseState,
    /// The factor `A` applied by the rescale.
    pub scale: f64,
}

/// One renormalization step, averaged over `cfg.copies` independent
/// lift-evolve-restrict realizations. `iteration` keys the random streams.
pub fn renorm_step(
    state: &CoarseState,
    cfg: &RenormConfig,
    sim: &SimConfig,
    iteration: u64,
) -> Result<StepOutcome> {
    cfg.validate()?;
    sim.validate()?;
    state.check_monotone()?;
    let basis = state.basis();
    let proj = Projector::new(basis.order);
    let steps = sim.steps_for(cfg.horizon);
    let m = cfg.template.m;

    let per_copy = crate::map_copies(cfg.copies, |r| {
        let labels = [LABEL_LIFT, iteration, r as u64];
        let mut ens = lift(state, cfg.particles, derive_seed(cfg.seed, &labels))?;
        if steps > 0 {
            ens = step_ensemble(&ens, &sim.reseeded(&labels), steps)?;
        }
        let (coarse, marginal) = restrict_using(&proj, &ens, basis)?;
        Ok((coarse.to_flat(), marginal.eval(m)))
    })?;

    let n = cfg.copies as f64;
    let mut flat = alloc::vec![0.0; basis.len()];
    let mut anchor = 0.0;
    for (coeffs, q) in &per_copy {
        for (acc, c) in flat.iter_mut().zip(coeffs) {
            *acc += c;
        }
        anchor += q;
    }
    flat.iter_mut().for_each(|c| *c /= n);
    anchor /= n;
    let averaged = CoarseState::from_flat(basis, &flat)?;

    let quantile = match cfg.anchor {
        TemplateAnchor::Empirical => anchor,
        TemplateAnchor::Projected => averaged.marginal_icdf(m),
    };
    let scale = template_factor(quantile, &cfg.template)?;
    Ok(StepOutcome {
        state: rescale_by(&averaged, scale, cfg.exponent_p),
        scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub state: CoarseState,
    pub scale: f64,
    pub moments: EnsembleMoments,
    /// Relative change from the previous iterate; `None` for the start.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Iteration at which the convergence test first passed.
    pub converged_at: Option<usize>,
    /// Shift applied to `x` before the first step when the starting state
    /// could not be mapped onto the template.
    pub x_shift: f64,
}

impl RenormTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("trace always holds the starting state")
    }

    /// The converged iterate, or the last one if the run did not converge.
    pub fn converged_record(&self) -> &IterationRecord {
        self.converged_at
            .map_or_else(|| self.last(), |k| &self.records[k])
    }

    /// Mean and standard deviation of the moments over the converged
    /// iterate and every iterate after it. `None` if unconverged.
    pub fn stationary_moments(&self) -> Option<MomentSummary> {
        let k = self.converged_at?;
        Some(MomentSummary::of(
            self.records[k..].iter().map(|r| &r.moments),
        ))
    }
}

/// Sample mean and standard deviation of `(σ_x, σ_y, ρ)` across iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub count: usize,
    pub mean: [f64; 3],
    /// Zero when `count` is 1.
    pub std_dev: [f64; 3],
}

impl MomentSummary {
    pub fn of<'a>(moments: impl Iterator<Item = &'a EnsembleMoments>) -> Self {
        let rows: Vec<[f64; 3]> = moments
            .map(|m| [m.sigma_x, m.sigma_y, m.rho.unwrap_or(f64::NAN)])
            .collect();
        let n = rows.len() as f64;
        let mut mean = [0.0; 3];
        let mut std_dev = [0.0; 3];
        for k in 0..3 {
            mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            if rows.len() > 1 {
                let ss: f64 = rows
                    .iter()
                    .map(|r| (r[k] - mean[k]) * (r[k] - mean[k]))
                    .sum();
                std_dev[k] = libm::sqrt(ss / (n - 1.0));
            }
        }
        Self {
            count: rows.len(),
            mean,
            std_dev,
        }
    }
}

fn state_moments(
    state: &CoarseState,
    cfg: &RenormConfig,
    iteration: u64,
) -> Result<EnsembleMoments> {
    let ens = lift(
        state,
        cfg.moment_particles,
        derive_seed(cfg.seed, &[LABEL_MOMENTS, iteration]),
    )?;
    ensemble_moments(&ens)
}

/// Iterates [`renorm_step`] until the relative change stays below
/// `cfg.tolerance` for two consecutive iterations or `cfg.max_iterations` is
/// reached, then runs `cfg.extra_iterations` more. An unconverged run is
/// reported through `converged`, not as an error.
pub fn fixed_point(
    initial: &CoarseState,
    cfg: &RenormConfig,
    sim: &SimConfig,
) -> Result<RenormTrace> {
    cfg.validate()?;
    let mut state = initial.clone();
    let mut x_shift = 0.0;
    if !(state.marginal_icdf(cfg.template.m) < 0.0) {
        // Recentre on the median so the lower quantile is negative.
        x_shift = -state.marginal_icdf(0.5);
        state = state.shifted_x(x_shift);
    }
    let mut records = alloc::vec![IterationRecord {
        iteration: 0,
        moments: state_moments(&state, cfg, 0)?,
        state: state.clone(),
        scale: 1.0,
        change: None,
    }];
    let mut calm = 0;
    let mut converged_at = None;
    let mut k = 0;
    loop {
        let limit = match converged_at {
            Some(c) => c + cfg.extra_iterations,
            None => cfg.max_iterations,
        };
        if k >= limit {
            break;
        }
        k += 1;
        let out = renorm_step(&state, cfg, sim, k as u64)?;
        let change = out.state.relative_change(&state);
        records.push(IterationRecord {
            iteration: k,
            moments: state_moments(&out.state, cfg, k as u64)?,
            state: out.state.clone(),
            scale: out.scale,
            change: Some(change),
        });
        state = out.state;
        calm = if change < cfg.tolerance { calm + 1 } else { 0 };
        if calm >= 2 && converged_at.is_none() {
            converged_at = Some(k);
        }
    }
    Ok(RenormTrace {
        records,
        converged: converged_at.is_some(),
        converged_at,
        x_shift,
    })
}

/// One observation of the template factor and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescalingSample {
    pub t: f64,
    pub a: f64,
    pub a_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub samples: Vec<RescalingSample>,
    pub alpha: f64,
}

/// `α` from `A(0) = 1`, `A(t1)`, `A(t2)` using backward differences for
/// `A_t`, then `α = (t2 − t1) / (A(t2)/A_t(t2) − A(t1)/A_t(t1))`.
pub fn alpha_from_rescaling(t1: f64, a1: f64, t2: f64, a2: f64) -> Result<AlphaEstimate> {
    if !(t1 > 0.0 && t2 > t1 && t2.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "times",
            reason: "need 0 < t1 < t2",
            value: t1,
        });
    }
    let at1 = (a1 - 1.0) / t1;
    let at2 = (a2 - a1) / (t2 - t1);
    const TINY: f64 = 1e-12;
    if !(at1.abs() > TINY && at2.abs() > TINY) {
        return Err(Error::IllConditioned {
            denominator: at1.min(at2),
        });
    }
    let denominator = a2 / at2 - a1 / at1;
    if !(denominator.abs() > TINY) || !denominator.is_finite() {
        return Err(Error::IllConditioned { denominator });
    }
    Ok(AlphaEstimate {
        samples: alloc::vec![
            RescalingSample {
                t: 0.0,
                a: 1.0,
                a_t: f64::NAN
            },
            RescalingSample {
                t: t1,
                a: a1,
                a_t: at1
            },
            RescalingSample {
                t: t2,
                a: a2,
                a_t: at2
            },
        ],
        alpha: (t2 - t1) / denominator,
    })
}

/// Evolves the lifted steady state continuously and tracks the growth of its
/// marginal quantile at the template level, `A(t) = q(t_w + t) / q(t_w)`,
/// with `q` averaged over `cfg.copies` realizations of `cfg.particles`
/// particles. The warm-up `t_w = cfg.horizon` lets the lifted particles
/// relax off the truncated reconstruction before the clock starts, so
/// `A(0) = 1` is measured rather than assumed. For an exact family member
/// with rate `c` the clock then runs against `c / (1 + c t_w)`.
pub fn estimate_alpha(
    steady: &CoarseState,
    cfg: &RenormConfig,
    sim: &SimConfig,
    t1: f64,
    t2: f64,
) -> Result<AlphaEstimate> {
    cfg.validate()?;
    sim.validate()?;
    let nw = sim.steps_for(cfg.horizon);
    let n1 = sim.steps_for(t1);
    let n2 = sim.steps_for(t2);
    if !(n1 > 0 && n2 > n1) {
        return Err(Error::InvalidParameter {
            name: "times",
            reason: "need 0 < t1 < t2 on the step grid",
            value: t1,
        });
    }
    let m = cfg.template.m;
    let per_copy = crate::map_copies(cfg.copies, |r| {
        let labels = [LABEL_ALPHA, r as u64];
        let lifted = lift(steady, cfg.particles, derive_seed(cfg.seed, &labels))?;
        let run = sim.reseeded(&labels);
        let ens0 = step_ensemble(&lifted, &run, nw)?;
        let ens1 = step_ensemble(&ens0, &run, n1)?;
        let ens2 = step_ensemble(&ens1, &run, n2 - n1)?;
        Ok([
            quantile_of(&ens0.xs, m)?,
            quantile_of(&ens1.xs, m)?,
            quantile_of(&ens2.xs, m)?,
        ])
    })?;
    let n = cfg.copies as f64;
    let mut q = [0.0; 3];
    for row in &per_copy {
        for k in 0..3 {
            q[k] += row[k] / n;
        }
    }
    if !(q[0].abs() > 0.0) {
        return Err(Error::IllConditioned { denominator: q[0] });
    }
    let (t1, t2) = (n1 as f64 * sim.dt, n2 as f64 * sim.dt);
    alpha_from_rescaling(t1, q[1] / q[0], t2, q[2] / q[0])
}

fn quantile_of(xs: &[f64], m: f64) -> Result<f64> {
    Ok(crate::coarse::EmpiricalIcdf::from_samples(xs.to_vec())?.eval(m))
}

//! Euler–Maruyama simulator for Brownian particles in a Couette shear flow.
//!
//! Particles diffuse in `x` only and are advected in `y` by the shear:
//!
//! ```text
//! X_{k+1} = X_k + D η_k √Δt,    Y_{k+1} = Y_k + X_k Δt
//! ```
//!
//! The Gaussian increments `η_k` come from the ziggurat sampler of
//! `rand_distr::StandardNormal`, drawn from a per-particle xoshiro256++ stream
//! keyed by `(seed, starting step index, particle index)`. Output is therefore
//! bit-reproducible for a given seed regardless of thread count.

use alloc::vec::Vec;
use libm::{round, sqrt};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{positive, Error, Result};
use crate::rng::{self, LABEL_EVOLVE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Diffusion coefficient `D`, cm·s^{-1/2}.
    pub diffusion: f64,
    /// Time step `Δt`, s.
    pub dt: f64,
    pub n_particles: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            diffusion: 5.0,
            dt: 0.01,
            n_particles: 5000,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion.is_finite() && self.diffusion >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "diffusion",
                reason: "must be finite and non-negative",
                value: self.diffusion,
            });
        }
        positive("dt", self.dt)?;
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter {
                name: "n_particles",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Same configuration with a seed derived from `labels`.
    pub fn reseeded(&self, labels: &[u64]) -> Self {
        Self {
            seed: rng::derive_seed(self.seed, labels),
            ..*self
        }
    }

    /// Number of whole steps covering `seconds`.
    pub fn steps_for(&self, seconds: f64) -> usize {
        round(seconds / self.dt).max(0.0) as usize
    }
}

/// Particle positions (cm) stored as separate coordinate columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleEnsemble {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Simulation time, s.
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "coordinate columns differ in length");
        Self { xs, ys, time: 0.0 }
    }

    pub fn from_points(points: &[(f64, f64)]) -> Self {
        let (xs, ys) = points.iter().copied().unzip();
        Self::new(xs, ys)
    }

    /// `n` particles at a single point.
    pub fn point_mass(n: usize, x: f64, y: f64) -> Self {
        Self::new(alloc::vec![x; n], alloc::vec![y; n])
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Rescales coordinates in place: `x ↦ x·sx`, `y ↦ y·sy`.
    pub fn scale(&mut self, sx: f64, sy: f64) {
        self.xs.iter_mut().for_each(|x| *x *= sx);
        self.ys.iter_mut().for_each(|y| *y *= sy);
    }
}

#[inline]
fn advance(x: &mut f64, y: &mut f64, n_steps: usize, dt: f64, kick: f64, rng: &mut rng::StreamRng) {
    for _ in 0..n_steps {
        *y += *x * dt;
        let eta: f64 = StandardNormal.sample(rng);
        *x += kick * eta;
    }
}

/// Advances every particle by `n_steps` Euler–Maruyama steps.
pub fn step_ensemble(
    ens: &ParticleEnsemble,
    cfg: &SimConfig,
    n_steps: usize,
) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            reason: "must be at least 1",
            value: 0.0,
        });
    }
    if let Some(index) = ens
        .points()
        .position(|(x, y)| !(x.is_finite() && y.is_finite()))
    {
        return Err(Error::NonFinite { index });
    }

    let mut out = ens.clone();
    let start = round(ens.time / cfg.dt) as i64 as u64;
    let dt = cfg.dt;
    let kick = cfg.diffusion * sqrt(dt);
    let seed = rng::derive_seed(cfg.seed, &[LABEL_EVOLVE, start]);
    let particle = |i: usize, x: &mut f64, y: &mut f64| {
        let mut rng = rng::stream(seed, &[i as u64]);
        advance(x, y, n_steps, dt, kick, &mut rng);
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const CHUNK: usize = 4096;
        out.xs
            .par_chunks_mut(CHUNK)
            .zip(out.ys.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (xs, ys))| {
                for (k, (x, y)) in xs.iter_mut().zip(ys.iter_mut()).enumerate() {
                    particle(c * CHUNK + k, x, y);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    for (i, (x, y)) in out.xs.iter_mut().zip(out.ys.iter_mut()).enumerate() {
        particle(i, x, y);
    }

    if let Some(index) = out
        .points()
        .position(|(x, y)| !(x.is_finite() && y.is_finite()))
    {
        return Err(Error::NonFinite { index });
    }
    out.time = ens.time + n_steps as f64 * dt;
    Ok(out)
}

/// Sample standard deviations and Pearson correlation of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMoments {
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// `None` when either coordinate has zero variance.
    pub rho: Option<f64>,
}

pub fn ensemble_moments(ens: &ParticleEnsemble) -> Result<EnsembleMoments> {
    let n = ens.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = ens.xs.iter().sum::<f64>() / nf;
    let my = ens.ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in ens.points() {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let rho = if sxx > 0.0 && syy > 0.0 {
        Some((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
    } else {
        None
    };
    Ok(EnsembleMoments {
        sigma_x: sqrt(sxx / (nf - 1.0)),
        sigma_y: sqrt(syy / (nf - 1.0)),
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: f64) -> SimConfig {
        SimConfig {
            diffusion: d,
            dt: 0.01,
            n_particles: 1,
            seed: 3,
        }
    }

    #[test]
    fn noiseless_shear_advection() {
        let ens = ParticleEnsemble::from_points(&[(1.0, 0.0)]);
        let out = step_ensemble(&ens, &cfg(0.0), 1).unwrap();
        assert_eq!(out.xs[0], 1.0);
        assert!((out.ys[0] - 0.01).abs() < 1e-15);
        assert!((out.time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn origin_is_fixed_without_noise() {
        let ens = ParticleEnsemble::point_mass(3, 0.0, 0.0);
        let out = step_ensemble(&ens, &cfg(0.0), 250).unwrap();
        assert!(out.points().all(|p| p == (0.0, 0.0)));
    }

    #[test]
    fn rejects_zero_steps_and_bad_config() {
        let ens = ParticleEnsemble::point_mass(2, 0.0, 0.0);
        assert!(step_ensemble(&ens, &cfg(1.0), 0).is_err());
        let bad = SimConfig {
            dt: 0.0,
            ..cfg(1.0)
        };
        assert!(step_ensemble(&ens, &bad, 1).is_err());
        let bad = SimConfig {
            diffusion: -1.0,
            ..cfg(1.0)
        };
        assert!(step_ensemble(&ens, &bad, 1).is_err());
    }

    #[test]
    fn overflow_is_reported_with_index() {
        let ens = ParticleEnsemble::from_points(&[(0.0, 0.0), (1e308, 1e308)]);
        let big = SimConfig {
            dt: 10.0,
            ..cfg(0.0)
        };
        assert_eq!(
            step_ensemble(&ens, &big, 1),
            Err(Error::NonFinite { index: 1 })
        );
        let nan = ParticleEnsemble::from_points(&[(0.0, f64::NAN)]);
        assert_eq!(
            step_ensemble(&nan, &cfg(1.0), 1),
            Err(Error::NonFinite { index: 0 })
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let ens = ParticleEnsemble::point_mass(100, 0.5, -0.5);
        let a = step_ensemble(&ens, &cfg(5.0), 20).unwrap();
        let b = step_ensemble(&ens, &cfg(5.0), 20).unwrap();
        assert_eq!(a, b);
        let c = step_ensemble(&ens, &cfg(5.0).reseeded(&[1]), 20).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn moments_of_small_sets() {
        let m =
            ensemble_moments(&ParticleEnsemble::from_points(&[(0.0, 0.0), (1.0, 1.0)])).unwrap();
        assert!((m.sigma_x - sqrt(0.5)).abs() < 1e-15);
        assert!((m.sigma_y - sqrt(0.5)).abs() < 1e-15);
        assert_eq!(m.rho, Some(1.0));
        let m =
            ensemble_moments(&ParticleEnsemble::from_points(&[(-1.0, 1.0), (1.0, -1.0)])).unwrap();
        assert_eq!(m.rho, Some(-1.0));
        let m =
            ensemble_moments(&ParticleEnsemble::from_points(&[(0.0, 1.0), (0.0, 2.0)])).unwrap();
        assert_eq!(m.rho, None);
        assert!(ensemble_moments(&ParticleEnsemble::point_mass(1, 0.0, 0.0)).is_err());
    }
}

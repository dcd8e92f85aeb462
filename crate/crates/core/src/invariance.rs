//! Black-box detection of the scale-invariance exponents `(p, a)` of the
//! hidden macroscopic operator, using short simulation bursts.
//!
//! The operator is probed on a product-Gaussian CDF `f` and on its rescaled
//! copy `f(x/A, y/A^p)`. If the operator satisfies
//! `D(f(x/A, y/A^p))(uA, vA^p) = A^a D(f)(u, v)`, the ratio of the operator
//! at two probe points is the same for both functions; Newton's method on that
//! ratio condition gives `p`, and the log-ratio at one point gives `a`.

use alloc::vec::Vec;
use libm::{floor, log, pow, sqrt};

use crate::error::{positive, Error, Result};
use crate::microsim::{step_ensemble, ParticleEnsemble, SimConfig};
use crate::oracle::couette_operator;
use crate::rng::{self, open01, LABEL_PROBE};
use crate::special::{norm_cdf, norm_quantile};

/// Product-Gaussian test CDF `Φ(x/σ_x) Φ(y/σ_y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDensity {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl TestDensity {
    /// `f(x/A, y/A^p)` for the unscaled density with widths `sigma`.
    pub fn scaled(sigma: (f64, f64), scale_a: f64, p: f64) -> Self {
        Self {
            sigma_x: sigma.0 * scale_a,
            sigma_y: sigma.1 * pow(scale_a, p),
        }
    }

    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        norm_cdf(x / self.sigma_x) * norm_cdf(y / self.sigma_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceProbe {
    /// Test density widths `σ_f` per axis, cm.
    pub test_sigma: (f64, f64),
    pub scale_a: f64,
    pub points: [(f64, f64); 2],
    /// Derivative-estimation horizon, s.
    pub burst_tau: f64,
    pub copies: usize,
    pub particles: usize,
    pub seed: u64,
}

impl Default for InvarianceProbe {
    fn default() -> Self {
        Self {
            test_sigma: (4.5, 4.5),
            scale_a: 2.0,
            points: [(-2.5, -2.5), (3.5, 3.5)],
            burst_tau: 0.05,
            copies: 200,
            particles: 250_000,
            seed: 0,
        }
    }
}

impl InvarianceProbe {
    pub fn validate(&self, dt: f64) -> Result<()> {
        positive("test_sigma_x", self.test_sigma.0)?;
        positive("test_sigma_y", self.test_sigma.1)?;
        positive("scale_a", self.scale_a)?;
        if self.scale_a == 1.0 {
            return Err(Error::InvalidParameter {
                name: "scale_a",
                reason: "scale_A must differ from 1",
                value: 1.0,
            });
        }
        let [a, b] = self.points;
        if a == b || ![a.0, a.1, b.0, b.1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "points",
                reason: "probe points must be finite and distinct",
                value: a.0,
            });
        }
        if !(self.burst_tau >= dt * (1.0 - 1e-9)) {
            return Err(Error::InvalidParameter {
                name: "burst_tau",
                reason: "must cover at least one time step",
                value: self.burst_tau,
            });
        }
        if self.copies < 2 || self.particles == 0 {
            return Err(Error::InvalidParameter {
                name: "copies",
                reason: "need at least 2 copies of at least 1 particle",
                value: self.copies as f64,
            });
        }
        Ok(())
    }

    pub fn unscaled(&self) -> TestDensity {
        TestDensity {
            sigma_x: self.test_sigma.0,
            sigma_y: self.test_sigma.1,
        }
    }

    pub fn scaled(&self, p: f64) -> TestDensity {
        TestDensity::scaled(self.test_sigma, self.scale_a, p)
    }

    /// Probe points mapped to `(uA, vA^p)`.
    pub fn scaled_points(&self, p: f64) -> [(f64, f64); 2] {
        let (a, ap) = (self.scale_a, pow(self.scale_a, p));
        self.points.map(|(u, v)| (u * a, v * ap))
    }

    pub fn burst_estimator(&self, sim: &SimConfig) -> BurstEstimator {
        BurstEstimator {
            sim: *sim,
            burst_steps: sim.steps_for(self.burst_tau).max(1),
            copies: self.copies,
            particles: self.particles,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl OperatorEstimate {
    /// Within three standard errors of zero.
    pub fn is_null(&self) -> bool {
        self.value.abs() <= 3.0 * self.std_error
    }
}

/// Something that can evaluate the macroscopic operator applied to a test
/// CDF.
pub trait OperatorEstimator {
    fn estimate(
        &self,
        density: &TestDensity,
        points: &[(f64, f64)],
    ) -> Result<Vec<OperatorEstimate>>;
}

/// Noise-free operator in closed form, for validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormEstimator {
    pub diffusion: f64,
}

impl OperatorEstimator for ClosedFormEstimator {
    fn estimate(
        &self,
        density: &TestDensity,
        points: &[(f64, f64)],
    ) -> Result<Vec<OperatorEstimate>> {
        Ok(points
            .iter()
            .map(|&(x, y)| OperatorEstimate {
                value: couette_operator(density.sigma_x, density.sigma_y, self.diffusion, x, y),
                std_error: 0.0,
            })
            .collect())
    }
}

/// Monte Carlo estimate `[F(τ) − F(0)] / τ` averaged over independent copies.
///
/// Each copy is initialised by stratified inverse-transform sampling (one
/// jittered draw per cell of a `⌊√N⌋ × ⌊√N⌋` grid in quantile space, the
/// remainder drawn freely), and `F(0)` is the empirical CDF of that same
/// sample, so the estimate only sees particles that crossed a probe boundary.
/// Streams depend only on `(seed, copy, particle)`, so every density shares
/// common random numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstEstimator {
    pub sim: SimConfig,
    pub burst_steps: usize,
    pub copies: usize,
    pub particles: usize,
    pub seed: u64,
}

impl BurstEstimator {
    fn initial_ensemble(&self, density: &TestDensity, copy: usize) -> ParticleEnsemble {
        let n = self.particles;
        let side = isqrt(n);
        let mut rng = rng::stream(self.seed, &[LABEL_PROBE, copy as u64]);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let inv = 1.0 / side as f64;
        for i in 0..side {
            for j in 0..side {
                let qx = (i as f64 + open01(&mut rng)) * inv;
                let qy = (j as f64 + open01(&mut rng)) * inv;
                xs.push(density.sigma_x * norm_quantile(qx));
                ys.push(density.sigma_y * norm_quantile(qy));
            }
        }
        for _ in side * side..n {
            xs.push(density.sigma_x * norm_quantile(open01(&mut rng)));
            ys.push(density.sigma_y * norm_quantile(open01(&mut rng)));
        }
        ParticleEnsemble::new(xs, ys)
    }

    fn copy_estimate(
        &self,
        density: &TestDensity,
        points: &[(f64, f64)],
        copy: usize,
    ) -> Result<Vec<f64>> {
        let start = self.initial_ensemble(density, copy);
        let sim = self.sim.reseeded(&[LABEL_PROBE, copy as u64]);
        let end = step_ensemble(&start, &sim, self.burst_steps)?;
        let tau = self.burst_steps as f64 * self.sim.dt;
        let n = self.particles as f64;
        Ok(points
            .iter()
            .map(|&pt| (count_below(&end, pt) as f64 - count_below(&start, pt) as f64) / (n * tau))
            .collect())
    }
}

fn count_below(ens: &ParticleEnsemble, (px, py): (f64, f64)) -> usize {
    ens.points().filter(|&(x, y)| x <= px && y <= py).count()
}

fn isqrt(n: usize) -> usize {
    let mut r = floor(sqrt(n as f64)) as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

impl OperatorEstimator for BurstEstimator {
    fn estimate(
        &self,
        density: &TestDensity,
        points: &[(f64, f64)],
    ) -> Result<Vec<OperatorEstimate>> {
        self.sim.validate()?;
        if self.copies < 2 {
            return Err(Error::InvalidParameter {
                name: "copies",
                reason: "need at least 2 copies for a standard error",
                value: self.copies as f64,
            });
        }
        let per_copy = crate::map_copies(self.copies, |r| self.copy_estimate(density, points, r))?;
        let r = self.copies as f64;
        Ok((0..points.len())
            .map(|k| {
                let mean = per_copy.iter().map(|c| c[k]).sum::<f64>() / r;
                let var = per_copy
                    .iter()
                    .map(|c| (c[k] - mean) * (c[k] - mean))
                    .sum::<f64>()
                    / (r - 1.0);
                OperatorEstimate {
                    value: mean,
                    std_error: sqrt(var / r),
                }
            })
            .collect())
    }
}

/// Single-point convenience wrapper around [`OperatorEstimator::estimate`].
pub fn estimate_operator_at<E: OperatorEstimator + ?Sized>(
    estimator: &E,
    density: &TestDensity,
    point: (f64, f64),
) -> Result<OperatorEstimate> {
    Ok(estimator.estimate(density, &[point])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub p0: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Central finite-difference step for the residual derivative.
    pub fd_step: f64,
    pub p_max: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            p0: 6.0,
            tol: 1e-3,
            max_iter: 8,
            fd_step: 0.05,
            p_max: 20.0,
        }
    }
}

const MAX_HALVINGS: usize = 4;
const FLAT_DERIVATIVE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub p_iterates: Vec<f64>,
    pub a_iterates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub p_final: f64,
    pub a_final: f64,
    /// Index of the probe point used as the ratio denominator.
    pub reference_point: usize,
}

impl InvarianceReport {
    /// Similarity exponent implied by `α a = −1`.
    pub fn predicted_alpha(&self) -> f64 {
        -1.0 / self.a_final
    }
}

struct Residual {
    p: f64,
    value: f64,
    std_error: f64,
    scaled: Vec<OperatorEstimate>,
}

/// The ratio condition, evaluated against fixed unscaled estimates.
struct RatioCondition<'a, E: ?Sized> {
    probe: &'a InvarianceProbe,
    estimator: &'a E,
    unscaled: Vec<OperatorEstimate>,
    num: usize,
    den: usize,
}

impl<'a, E: OperatorEstimator + ?Sized> RatioCondition<'a, E> {
    fn new(probe: &'a InvarianceProbe, estimator: &'a E) -> Result<Self> {
        let unscaled = estimator.estimate(&probe.unscaled(), &probe.points)?;
        if unscaled.iter().all(OperatorEstimate::is_null) {
            return Err(Error::UninformativeProbe);
        }
        // Larger-magnitude estimate goes in the denominator.
        let den = if unscaled[0].value.abs() >= unscaled[1].value.abs() {
            0
        } else {
            1
        };
        Ok(Self {
            probe,
            estimator,
            unscaled,
            num: 1 - den,
            den,
        })
    }

    fn eval(&self, p: f64) -> Result<Residual> {
        let scaled = self
            .estimator
            .estimate(&self.probe.scaled(p), &self.probe.scaled_points(p))?;
        let (ns, ds) = (scaled[self.num], scaled[self.den]);
        let (nu, du) = (self.unscaled[self.num], self.unscaled[self.den]);
        let value = ns.value / ds.value - nu.value / du.value;
        let rel = |n: OperatorEstimate, d: OperatorEstimate| {
            let a = n.std_error / d.value;
            let b = n.value * d.std_error / (d.value * d.value);
            a * a + b * b
        };
        Ok(Residual {
            p,
            value,
            std_error: sqrt(rel(ns, ds) + rel(nu, du)),
            scaled,
        })
    }

    fn exponent_a(&self, residual: &Residual) -> Result<f64> {
        log_ratio_exponent(
            residual.scaled[0].value,
            self.unscaled[0].value,
            self.probe.scale_a,
        )
    }
}

/// `log_A(scaled / unscaled)`.
pub fn log_ratio_exponent(scaled: f64, unscaled: f64, scale_a: f64) -> Result<f64> {
    let ratio = scaled / unscaled;
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::NonPositiveRatio { ratio });
    }
    Ok(log(ratio) / log(scale_a))
}

/// Newton iteration on the ratio condition for `p`, with `a` recomputed at
/// every iterate.
pub fn solve_p<E: OperatorEstimator + ?Sized>(
    probe: &InvarianceProbe,
    estimator: &E,
    settings: &NewtonSettings,
) -> Result<InvarianceReport> {
    positive("tol", settings.tol)?;
    positive("fd_step", settings.fd_step)?;
    if !settings.p0.is_finite() || settings.p0 <= 0.0 || settings.p0 > settings.p_max {
        return Err(Error::Diverged {
            p: settings.p0,
            p_max: settings.p_max,
        });
    }
    let cond = RatioCondition::new(probe, estimator)?;
    let mut report = InvarianceReport {
        p_iterates: Vec::new(),
        a_iterates: Vec::new(),
        residuals: Vec::new(),
        std_errors: Vec::new(),
        converged: false,
        p_final: settings.p0,
        a_final: f64::NAN,
        reference_point: cond.den,
    };
    let record = |report: &mut InvarianceReport, r: &Residual| -> Result<()> {
        let a = cond.exponent_a(r)?;
        report.p_iterates.push(r.p);
        report.a_iterates.push(a);
        report.residuals.push(r.value);
        report.std_errors.push(r.std_error);
        report.p_final = r.p;
        report.a_final = a;
        Ok(())
    };

    let mut current = cond.eval(settings.p0)?;
    record(&mut report, &current)?;
    let h = settings.fd_step;
    for _ in 0..settings.max_iter {
        let derivative =
            (cond.eval(current.p + h)?.value - cond.eval(current.p - h)?.value) / (2.0 * h);
        if !(derivative.abs() > FLAT_DERIVATIVE) {
            return Err(Error::FlatResidual {
                p: current.p,
                derivative,
            });
        }
        let mut step = -current.value / derivative;
        let mut next;
        let mut halvings = 0;
        loop {
            let p = current.p + step;
            if !(p > 0.0 && p <= settings.p_max) {
                return Err(Error::Diverged {
                    p,
                    p_max: settings.p_max,
                });
            }
            next = cond.eval(p)?;
            if next.value.abs() <= current.value.abs() || halvings == MAX_HALVINGS {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        record(&mut report, &next)?;
        current = next;
        if step.abs() < settings.tol {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}

/// Exponent `a` at a given `p`, from the first probe point.
pub fn compute_a<E: OperatorEstimator + ?Sized>(
    probe: &InvarianceProbe,
    estimator: &E,
    p: f64,
) -> Result<f64> {
    let point = probe.points[0];
    let unscaled = estimate_operator_at(estimator, &probe.unscaled(), point)?;
    let scaled = estimate_operator_at(estimator, &probe.scaled(p), probe.scaled_points(p)[0])?;
    log_ratio_exponent(scaled.value, unscaled.value, probe.scale_a)
}

//! Closed-form self-similar solution of the Couette system, used as ground
//! truth.
//!
//! From a point source, after elapsed time `s` the particle law is the
//! bivariate Gaussian with `σ_X = D√s`, `σ_Y = D s^{3/2}/√3` and
//! correlation `√3/2`; conditionally on `X = x`, `Y` is Gaussian with mean
//! `x s/2` and standard deviation `D s^{3/2}/√12`. The family parameter `c`
//! fixes the renormalized member `s = 1/c`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{exp, pow, sqrt};

use crate::basis::{Projector, Quadrature};
use crate::coarse::{BasisSpec, CoarseState};
use crate::error::{positive, Error, Result};
use crate::microsim::ParticleEnsemble;
use crate::renorm::TemplateCondition;
use crate::rng::{self, open01};
use crate::special::{norm_cdf, norm_pdf, norm_quantile};

/// Standard-normal range treated as the whole line in quadratures.
const Z_CUT: f64 = 9.0;
const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarFamily {
    /// Family parameter, s⁻¹.
    pub c: f64,
    /// Diffusion coefficient, cm·s^{-1/2}.
    pub diffusion: f64,
    /// Reference (blow-up) time, s.
    pub t0: f64,
}

/// `(σ_X, σ_Y, ρ)` of a member of the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyMoments {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl SelfSimilarFamily {
    pub fn new(c: f64, diffusion: f64) -> Result<Self> {
        positive("c", c)?;
        positive("diffusion", diffusion)?;
        Ok(Self {
            c,
            diffusion,
            t0: 0.0,
        })
    }

    /// Elapsed time `s = t − t0` at which the unscaled solution equals the
    /// renormalized member.
    pub fn elapsed(&self) -> f64 {
        1.0 / self.c
    }

    pub fn law(&self) -> GaussianLaw {
        GaussianLaw::at(self.elapsed(), self.diffusion)
    }
}

/// Bivariate Gaussian particle law of the point-source solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw {
    pub sigma_x: f64,
    /// Slope of `E[Y | X = x]`.
    pub slope: f64,
    /// Conditional standard deviation of `Y` given `X`.
    pub sigma_cond: f64,
}

impl GaussianLaw {
    pub fn at(s: f64, diffusion: f64) -> Self {
        Self {
            sigma_x: diffusion * sqrt(s),
            slope: 0.5 * s,
            sigma_cond: diffusion * pow(s, 1.5) / sqrt(12.0),
        }
    }

    pub fn sigma_y(&self) -> f64 {
        sqrt(
            self.slope * self.slope * self.sigma_x * self.sigma_x
                + self.sigma_cond * self.sigma_cond,
        )
    }

    /// Joint CDF by one-dimensional quadrature over the standardized `x`.
    pub fn cdf(&self, x: f64, y: f64) -> f64 {
        let zx = x / self.sigma_x;
        if zx <= -Z_CUT {
            return 0.0;
        }
        let k = self.slope * self.sigma_x / self.sigma_cond;
        let w = y / self.sigma_cond;
        let upper = zx.min(Z_CUT);
        Quadrature::composite(48, -Z_CUT, upper).integrate(|z| norm_pdf(z) * norm_cdf(w - k * z))
    }
}

fn check_elapsed(s: f64, diffusion: f64) -> Result<()> {
    if !(s > 0.0) {
        return Err(Error::Domain {
            value: s,
            domain: "elapsed time s > 0",
        });
    }
    positive("diffusion", diffusion).map(|_| ())
}

/// Density of the point-source solution after elapsed time `s`.
pub fn analytic_pdf(x: f64, y: f64, s: f64, diffusion: f64) -> Result<f64> {
    check_elapsed(s, diffusion)?;
    let d2 = diffusion * diffusion;
    let shear = y - 0.5 * x * s;
    let expo = 6.0 * shear * shear / (d2 * s * s * s) + x * x / (2.0 * d2 * s);
    Ok(SQRT_3 / (PI * d2 * s * s) * exp(-expo))
}

/// Joint CDF of the point-source solution, defined as the integral of
/// [`analytic_pdf`].
pub fn analytic_cdf(x: f64, y: f64, s: f64, diffusion: f64) -> Result<f64> {
    check_elapsed(s, diffusion)?;
    Ok(GaussianLaw::at(s, diffusion).cdf(x, y))
}

pub fn family_moments(fam: &SelfSimilarFamily) -> FamilyMoments {
    let d = fam.diffusion;
    FamilyMoments {
        sigma_x: d / sqrt(fam.c),
        sigma_y: d / (SQRT_3 * pow(fam.c, 1.5)),
        rho: 0.5 * SQRT_3,
    }
}

/// Family member whose `x` marginal satisfies the template: `σ_X Φ⁻¹(m) = e`.
pub fn c_from_template(template: &TemplateCondition, diffusion: f64) -> Result<f64> {
    positive("diffusion", diffusion)?;
    let qm = norm_quantile(template.m);
    let sigma_x = template.e / qm;
    if !(sigma_x.is_finite() && sigma_x > 0.0) {
        return Err(Error::TemplateIncompatible {
            quantile: qm,
            e: template.e,
        });
    }
    let r = diffusion / sigma_x;
    Ok(r * r)
}

/// Coarse state of the family member, built from exact quantiles.
pub fn analytic_coarse_state(fam: &SelfSimilarFamily, basis: BasisSpec) -> Result<CoarseState> {
    let law = fam.law();
    let proj = Projector::new(basis.order);
    let marginal = proj.project_fn(|q| law.sigma_x * norm_quantile(q));

    let m = basis.strata;
    let k = law.slope * law.sigma_x / law.sigma_cond;
    let mut conditional = Vec::with_capacity(basis.len());
    for i in 0..m {
        let z_lo = norm_quantile(i as f64 / m as f64).max(-Z_CUT);
        let z_hi = norm_quantile((i + 1) as f64 / m as f64).min(Z_CUT);
        let quad = Quadrature::composite(8, z_lo, z_hi);
        let band = StratumLaw {
            quad: &quad,
            k,
            mass: 1.0 / m as f64,
        };
        let mut guess = k * 0.5 * (z_lo + z_hi);
        let row = proj.project_fn(|q| {
            let w = band.quantile(q, guess);
            guess = w;
            law.sigma_cond * w
        });
        conditional.extend(row);
    }
    CoarseState::new(basis, marginal, conditional)
}

/// Standardized `y / σ_cond` law within one marginal stratum: the mixture of
/// `N(k z, 1)` over `z` restricted to the stratum.
struct StratumLaw<'a> {
    quad: &'a Quadrature,
    k: f64,
    mass: f64,
}

impl StratumLaw<'_> {
    fn cdf_and_density(&self, w: f64) -> (f64, f64) {
        let (mut f, mut d) = (0.0, 0.0);
        for (&z, &wt) in self.quad.nodes.iter().zip(&self.quad.weights) {
            let pz = wt * norm_pdf(z);
            f += pz * norm_cdf(w - self.k * z);
            d += pz * norm_pdf(w - self.k * z);
        }
        (f / self.mass, d / self.mass)
    }

    /// Safeguarded Newton solve of `F(w) = q`.
    fn quantile(&self, q: f64, guess: f64) -> f64 {
        let (mut lo, mut hi) = (guess - 1.0, guess + 1.0);
        while self.cdf_and_density(lo).0 > q {
            lo -= 2.0 * (hi - lo);
        }
        while self.cdf_and_density(hi).0 < q {
            hi += 2.0 * (hi - lo);
        }
        let mut w = guess.clamp(lo, hi);
        for _ in 0..100 {
            let (f, d) = self.cdf_and_density(w);
            let r = f - q;
            if r > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let newton = w - r / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - w).abs() < 1e-13 * (1.0 + w.abs()) {
                return next;
            }
            w = next;
        }
        w
    }
}

/// Exact draws from the family member (inverse-transform on both axes).
pub fn sample_family(fam: &SelfSimilarFamily, n: usize, seed: u64) -> ParticleEnsemble {
    let law = fam.law();
    let mut rng = rng::stream(seed, &[]);
    let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x = law.sigma_x * norm_quantile(open01(&mut rng));
        let y = law.slope * x + law.sigma_cond * norm_quantile(open01(&mut rng));
        xs.push(x);
        ys.push(y);
    }
    ParticleEnsemble::new(xs, ys)
}

/// Closed-form Couette operator
/// `−x ∂_y F + ∫_{−∞}^x ∂_y F dx' + (D²/2) ∂²_x F`
/// applied to the product-Gaussian CDF `F = Φ(x/σ_x) Φ(y/σ_y)`.
pub fn couette_operator(sigma_x: f64, sigma_y: f64, diffusion: f64, x: f64, y: f64) -> f64 {
    let (zx, zy) = (x / sigma_x, y / sigma_y);
    // the two shear terms combine to (σ_x/σ_y) φ(zx) φ(zy)
    let shear = sigma_x / sigma_y * norm_pdf(zx) * norm_pdf(zy);
    let diffusion_term = -0.5 * diffusion * diffusion * x / (sigma_x * sigma_x * sigma_x)
        * norm_pdf(zx)
        * norm_cdf(zy);
    shear + diffusion_term
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdf_peak_and_domain() {
        let v = analytic_pdf(0.0, 0.0, 2.0, 5.0).unwrap();
        assert!((v - SQRT_3 / (PI * 25.0 * 4.0)).abs() < 1e-16);
        assert!(analytic_pdf(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(analytic_pdf(0.0, 0.0, -1.0, 5.0).is_err());
    }

    #[test]
    fn paper_family_moments() {
        let m = family_moments(&SelfSimilarFamily::new(0.3125, 5.0).unwrap());
        assert!((m.sigma_x - 4.0 * sqrt(5.0)).abs() < 1e-12);
        assert!((m.sigma_y - 12.8 * sqrt(15.0) / 3.0).abs() < 1e-12);
        assert!((m.rho - 0.866_025_403_784_438_6).abs() < 1e-15);
        let unit = family_moments(&SelfSimilarFamily::new(25.0, 5.0).unwrap());
        assert!((unit.sigma_x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn law_matches_family_moments() {
        let fam = SelfSimilarFamily::new(0.3125, 5.0).unwrap();
        let (law, m) = (fam.law(), family_moments(&fam));
        assert!((law.sigma_x - m.sigma_x).abs() < 1e-12);
        assert!((law.sigma_y() - m.sigma_y).abs() < 1e-12);
        assert!((law.slope * law.sigma_x / law.sigma_y() - m.rho).abs() < 1e-12);
    }

    #[test]
    fn template_members() {
        let t = TemplateCondition::new(-2.266, 0.4).unwrap();
        assert!((c_from_template(&t, 5.0).unwrap() - 0.3125).abs() < 2e-4);
        let qm = norm_quantile(0.4);
        let t = TemplateCondition::new(2.0 * qm * 5.0, 0.4).unwrap();
        assert!((c_from_template(&t, 5.0).unwrap() - 0.25).abs() < 1e-12);
        let t = TemplateCondition::new(-0.227, 0.4).unwrap();
        let c = c_from_template(&t, 5.0).unwrap();
        assert!((c - 31.14).abs() < 0.05, "{c}");
    }

    #[test]
    fn cdf_limits() {
        let law = GaussianLaw::at(1.0, 1.0);
        assert!((law.cdf(40.0, 40.0) - 1.0).abs() < 1e-12);
        assert!(law.cdf(-40.0, 3.0) < 1e-15);
        // y → ∞ recovers the x marginal
        assert!((law.cdf(0.3, 1e3) - norm_cdf(0.3)).abs() < 1e-12);
        // centred bivariate normal: P(X ≤ 0, Y ≤ 0) = 1/4 + asin(ρ)/(2π)
        let rho = 0.5 * SQRT_3;
        let expect = 0.25 + libm::asin(rho) / (2.0 * PI);
        assert!((law.cdf(0.0, 0.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn analytic_state_is_centred_and_odd() {
        let fam = SelfSimilarFamily::new(0.3125, 5.0).unwrap();
        let state = analytic_coarse_state(&fam, BasisSpec::default()).unwrap();
        let sx = family_moments(&fam).sigma_x;
        assert!(state.marginal()[0].abs() < 1e-12);
        // √(3/π); the log singularity at the ends costs about 1e-4
        assert!((state.marginal()[1] / sx - 0.977_21).abs() < 3e-4);
        // stratum i mirrors stratum M − 1 − i
        let m = state.basis().strata;
        for i in 0..m {
            let (a, b) = (state.conditional(i), state.conditional(m - 1 - i));
            assert!((a[0] + b[0]).abs() < 1e-8);
            assert!((a[1] - b[1]).abs() < 1e-8);
        }
        state.check_monotone().unwrap();
    }

    #[test]
    fn operator_is_scale_invariant_with_p3_a_minus2() {
        let (sf, d, a) = (4.5, 5.0, 2.0);
        for &(u, v) in &[(-2.5, -2.5), (3.5, 3.5), (1.0, -4.0)] {
            let base = couette_operator(sf, sf, d, u, v);
            let scaled = couette_operator(sf * a, sf * a * a * a, d, u * a, v * a * a * a);
            assert!((scaled - base / (a * a)).abs() < 1e-15);
        }
    }
}

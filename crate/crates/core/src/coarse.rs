//! Restriction and lifting between particle ensembles and the spectral
//! representation of their marginal and conditional quantile functions.
//!
//! The coarse state holds shifted-Legendre coefficients of
//!
//! * the marginal ICDF of `x`, and
//! * `M` conditional ICDFs of `y`, one per equal-probability stratum of the
//!   `x` marginal (stratum `i` holds the particles whose `x`-rank falls in
//!   the `i`-th of `M` contiguous equal-count bands).

use alloc::vec::Vec;
use libm::sqrt;

use crate::basis::{eval_series, Projector};
use crate::error::{Error, Result};
use crate::microsim::ParticleEnsemble;
use crate::rng::{self, open01};

/// Grid size of the monotonicity check on reconstructed ICDFs.
pub const MONOTONE_GRID: usize = 101;
/// Allowed local decrease of a reconstructed ICDF, relative to its spread.
pub const MONOTONE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    /// Number of conditional ICDFs `M`.
    pub strata: usize,
    /// Highest polynomial order `P`.
    pub order: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            strata: 20,
            order: 5,
        }
    }
}

impl BasisSpec {
    pub fn new(strata: usize, order: usize) -> Result<Self> {
        if strata == 0 {
            return Err(Error::InvalidParameter {
                name: "strata",
                reason: "must be at least 1",
                value: 0.0,
            });
        }
        Ok(Self { strata, order })
    }

    pub fn width(&self) -> usize {
        self.order + 1
    }

    /// Total number of coefficients, `(M + 1)(P + 1)`.
    pub fn len(&self) -> usize {
        (self.strata + 1) * self.width()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fewest particles [`restrict`] accepts.
    pub fn min_particles(&self) -> usize {
        self.strata * (self.order + 2)
    }
}

/// Spectral coefficients of the marginal and conditional ICDFs (cm).
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseState {
    basis: BasisSpec,
    marginal: Vec<f64>,
    // M rows of P + 1, row-major
    conditional: Vec<f64>,
}

impl CoarseState {
    pub fn new(basis: BasisSpec, marginal: Vec<f64>, conditional: Vec<f64>) -> Result<Self> {
        if marginal.len() != basis.width() || conditional.len() != basis.strata * basis.width() {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "length does not match (M + 1)(P + 1)",
                value: (marginal.len() + conditional.len()) as f64,
            });
        }
        if let Some(&bad) = marginal.iter().chain(&conditional).find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "must be finite",
                value: bad,
            });
        }
        Ok(Self {
            basis,
            marginal,
            conditional,
        })
    }

    /// Splits a flat vector laid out marginal row first, then the `M`
    /// conditional rows.
    pub fn from_flat(basis: BasisSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != basis.len() {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "length does not match (M + 1)(P + 1)",
                value: flat.len() as f64,
            });
        }
        let (m, c) = flat.split_at(basis.width());
        Self::new(basis, m.to_vec(), c.to_vec())
    }

    /// Both ICDFs separable and identical: the marginal row repeated for
    /// every stratum. Describes independent coordinates with equal laws.
    pub fn independent(basis: BasisSpec, x_row: &[f64], y_row: &[f64]) -> Result<Self> {
        let conditional = (0..basis.strata)
            .flat_map(|_| y_row.iter().copied())
            .collect();
        Self::new(basis, x_row.to_vec(), conditional)
    }

    /// Uniform law on the square `(-h, h)²`.
    pub fn uniform_square(basis: BasisSpec, half_width: f64) -> Result<Self> {
        let mut row = alloc::vec![0.0; basis.width()];
        if basis.order >= 1 {
            // ICDF -h + 2hq  =>  c1 = 2h / (2√3)
            row[1] = half_width / sqrt(3.0);
        }
        Self::independent(basis, &row, &row)
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    pub fn conditional(&self, stratum: usize) -> &[f64] {
        let w = self.basis.width();
        &self.conditional[stratum * w..(stratum + 1) * w]
    }

    pub fn conditional_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.conditional.chunks_exact(self.basis.width())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.marginal.clone();
        v.extend_from_slice(&self.conditional);
        v
    }

    pub fn marginal_icdf(&self, q: f64) -> f64 {
        eval_series(&self.marginal, q)
    }

    pub fn conditional_icdf(&self, stratum: usize, q: f64) -> f64 {
        eval_series(self.conditional(stratum), q)
    }

    /// Stratum of marginal quantile `q`: `ceil(q·M)`, zero-based.
    pub fn stratum_of(&self, q: f64) -> usize {
        let m = self.basis.strata;
        let s = libm::ceil(q * m as f64) as usize;
        s.clamp(1, m) - 1
    }

    /// Standard deviation of the marginal law encoded by the coefficients.
    pub fn marginal_spread(&self) -> f64 {
        row_spread(&self.marginal)
    }

    /// Standard deviation of the `y` law (equal-weight mixture of strata).
    pub fn conditional_spread(&self) -> f64 {
        let m = self.basis.strata as f64;
        let (mut second, mut mean) = (0.0, 0.0);
        for row in self.conditional_rows() {
            second += row.iter().map(|c| c * c).sum::<f64>() / m;
            mean += row[0] / m;
        }
        sqrt((second - mean * mean).max(0.0))
    }

    /// Multiplies the marginal row by `sx` and the conditional rows by `sy`.
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self {
            basis: self.basis,
            marginal: self.marginal.iter().map(|c| c * sx).collect(),
            conditional: self.conditional.iter().map(|c| c * sy).collect(),
        }
    }

    /// Adds `dx` to every reconstructed marginal ICDF value.
    pub fn shifted_x(&self, dx: f64) -> Self {
        let mut out = self.clone();
        out.marginal[0] += dx;
        out
    }

    /// Largest coefficient change relative to the spread of the direction it
    /// belongs to (marginal rows by `x` spread, conditional rows by `y`
    /// spread, both taken from `self`).
    pub fn relative_change(&self, previous: &CoarseState) -> f64 {
        let sx = self.marginal_spread().max(f64::MIN_POSITIVE);
        let sy = self.conditional_spread().max(f64::MIN_POSITIVE);
        let dm = max_abs_diff(&self.marginal, &previous.marginal) / sx;
        let dc = max_abs_diff(&self.conditional, &previous.conditional) / sy;
        dm.max(dc)
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &CoarseState) -> f64 {
        max_abs_diff(&self.marginal, &other.marginal)
            .max(max_abs_diff(&self.conditional, &other.conditional))
    }

    /// Checks every reconstructed ICDF is non-decreasing on a
    /// [`MONOTONE_GRID`]-point grid up to [`MONOTONE_TOLERANCE`] × spread.
    /// Row 0 is the marginal, row `i ≥ 1` the `i`-th conditional.
    pub fn check_monotone(&self) -> Result<()> {
        let rows = core::iter::once(self.marginal.as_slice()).chain(self.conditional_rows());
        for (row, coeffs) in rows.enumerate() {
            let tolerance = MONOTONE_TOLERANCE * row_spread(coeffs);
            let drop = monotone_violation(coeffs);
            if drop > tolerance {
                return Err(Error::NonMonotone {
                    row,
                    drop,
                    tolerance,
                });
            }
        }
        Ok(())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn row_spread(row: &[f64]) -> f64 {
    sqrt(row.iter().skip(1).map(|c| c * c).sum::<f64>())
}

/// Largest decrease between neighbouring grid points.
fn monotone_violation(coeffs: &[f64]) -> f64 {
    let step = 1.0 / (MONOTONE_GRID - 1) as f64;
    let mut prev = eval_series(coeffs, 0.0);
    let mut worst: f64 = 0.0;
    for k in 1..MONOTONE_GRID {
        let v = eval_series(coeffs, k as f64 * step);
        worst = worst.max(prev - v);
        prev = v;
    }
    worst
}

/// Piecewise-linear empirical quantile function through the points
/// `(k / (n + 1), s_(k))`, flat beyond the extreme order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalIcdf {
    sorted: Vec<f64>,
}

impl EmpiricalIcdf {
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if let Some(&bad) = samples.iter().find(|v| v.is_nan()) {
            return Err(Error::Domain {
                value: bad,
                domain: "non-NaN samples",
            });
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, q: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        let u = q * (n + 1) as f64;
        if u <= 1.0 {
            return s[0];
        }
        if u >= n as f64 {
            return s[n - 1];
        }
        let k = u as usize; // 1 ≤ k < n
        let frac = u - k as f64;
        s[k - 1] + frac * (s[k] - s[k - 1])
    }
}

/// Projection coefficients of the interpolated empirical ICDF.
pub fn project_icdf(icdf: &EmpiricalIcdf, order: usize) -> Result<Vec<f64>> {
    project_with(&Projector::new(order), icdf)
}

fn project_with(proj: &Projector, icdf: &EmpiricalIcdf) -> Result<Vec<f64>> {
    let needed = proj.order() + 2;
    if icdf.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            got: icdf.len(),
        });
    }
    Ok(proj.project_fn(|q| icdf.eval(q)))
}

/// Restriction: the coarse state of an ensemble.
pub fn restrict(ens: &ParticleEnsemble, basis: BasisSpec) -> Result<CoarseState> {
    restrict_with_marginal(ens, basis).map(|(state, _)| state)
}

/// [`restrict`], also returning the empirical marginal ICDF it projected.
pub fn restrict_with_marginal(
    ens: &ParticleEnsemble,
    basis: BasisSpec,
) -> Result<(CoarseState, EmpiricalIcdf)> {
    restrict_using(&Projector::new(basis.order), ens, basis)
}

pub(crate) fn restrict_using(
    proj: &Projector,
    ens: &ParticleEnsemble,
    basis: BasisSpec,
) -> Result<(CoarseState, EmpiricalIcdf)> {
    let n = ens.len();
    let m = basis.strata;
    if n < basis.min_particles() {
        return Err(Error::TooFewSamples {
            needed: basis.min_particles(),
            got: n,
        });
    }
    if ens.points().any(|(x, y)| x.is_nan() || y.is_nan()) {
        return Err(Error::Domain {
            value: f64::NAN,
            domain: "non-NaN particle coordinates",
        });
    }
    let mut pairs: Vec<(f64, f64)> = ens.points().collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let marginal = EmpiricalIcdf {
        sorted: pairs.iter().map(|p| p.0).collect(),
    };
    let marginal_coeffs = project_with(proj, &marginal)?;

    let mut conditional = Vec::with_capacity(basis.strata * basis.width());
    for i in 0..m {
        let (lo, hi) = (i * n / m, (i + 1) * n / m);
        let band = EmpiricalIcdf::from_samples(pairs[lo..hi].iter().map(|p| p.1).collect())?;
        conditional.extend(project_with(proj, &band)?);
    }
    Ok((
        CoarseState::new(basis, marginal_coeffs, conditional)?,
        marginal,
    ))
}

/// Lifting: `n` particles drawn from the coarse state by inverse-transform
/// sampling. Returned ensemble time is 0.
pub fn lift(state: &CoarseState, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    state.check_monotone()?;
    let mut rng = rng::stream(seed, &[rng::LABEL_LIFT]);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let qx = open01(&mut rng);
        let qy = open01(&mut rng);
        xs.push(state.marginal_icdf(qx));
        ys.push(state.conditional_icdf(state.stratum_of(qx), qy));
    }
    Ok(ParticleEnsemble::new(xs, ys))
}

//! Orthonormal shifted Legendre polynomials on `[0, 1]` and the quadrature
//! used to project quantile functions onto them.

use alloc::vec::Vec;
use libm::sqrt;

use crate::error::{Error, Result};

/// Orthonormal shifted Legendre polynomial `P̂_n(q)`, with
/// `∫₀¹ P̂_m P̂_n dq = δ_mn`.
pub fn shifted_legendre(order: usize, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain {
            value: q,
            domain: "[0, 1]",
        });
    }
    let mut values = alloc::vec![0.0; order + 1];
    legendre_values(q, &mut values);
    Ok(values[order])
}

/// Fills `out[j] = P̂_j(q)` for `j < out.len()`. No domain check.
pub(crate) fn legendre_values(q: f64, out: &mut [f64]) {
    let t = 2.0 * q - 1.0;
    let (mut prev, mut cur) = (0.0, 1.0);
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = cur * sqrt((2 * n + 1) as f64);
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * t * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
    }
}

/// Evaluates `Σ_j coeffs[j] P̂_j(q)` by the three-term recurrence.
#[inline]
pub fn eval_series(coeffs: &[f64], q: f64) -> f64 {
    let t = 2.0 * q - 1.0;
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut acc = 0.0;
    for (n, &c) in coeffs.iter().enumerate() {
        acc += c * cur * sqrt((2 * n + 1) as f64);
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * t * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
    }
    acc
}

#[allow(clippy::excessive_precision)]
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Composite Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// `panels` equal panels on `[a, b]`, 8 nodes each.
    pub fn composite(panels: usize, a: f64, b: f64) -> Self {
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(8 * panels);
        let mut weights = Vec::with_capacity(8 * panels);
        for k in 0..panels {
            let mid = a + (k as f64 + 0.5) * h;
            for &(x, w) in GL8.iter().rev() {
                nodes.push(mid - 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
            for &(x, w) in GL8.iter() {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        Self { nodes, weights }
    }

    /// The 64-panel × 8-node rule on `[0, 1]` used for all ICDF projections.
    pub fn unit() -> Self {
        Self::composite(64, 0.0, 1.0)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Quadrature nodes with the basis tabulated on them, reused across
/// projections of the same order.
#[derive(Debug, Clone)]
pub struct Projector {
    order: usize,
    quad: Quadrature,
    // node-major: (order + 1) weighted basis values per node
    table: Vec<f64>,
}

impl Projector {
    pub fn new(order: usize) -> Self {
        let quad = Quadrature::unit();
        let width = order + 1;
        let mut table = alloc::vec![0.0; quad.nodes.len() * width];
        for (k, (&q, &w)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
            let row = &mut table[k * width..(k + 1) * width];
            legendre_values(q, row);
            row.iter_mut().for_each(|v| *v *= w);
        }
        Self { order, quad, table }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.quad.nodes
    }

    /// Projects a function given by its values at [`Self::nodes`].
    pub fn project_values(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.quad.nodes.len());
        let width = self.order + 1;
        let mut out = alloc::vec![0.0; width];
        for (row, &v) in self.table.chunks_exact(width).zip(values) {
            for (o, &b) in out.iter_mut().zip(row) {
                *o += v * b;
            }
        }
        out
    }

    /// Coefficients `c_j = ∫₀¹ f(q) P̂_j(q) dq`.
    pub fn project_fn<F: FnMut(f64) -> f64>(&self, mut f: F) -> Vec<f64> {
        let values: Vec<f64> = self.quad.nodes.iter().map(|&q| f(q)).collect();
        self.project_values(&values)
    }
}

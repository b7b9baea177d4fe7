//! Special functions, Gauss–Legendre tensor quadrature on the unit square and
//! Halton low-discrepancy points.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Logistic function whose result is `>= 1/2` exactly when `s >= 0`.
pub fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        let v = e / (1.0 + e);
        // Rounding can push tiny negative log-odds onto exactly 1/2.
        if v >= 0.5 {
            0.5 - f64::EPSILON / 4.0
        } else {
            v
        }
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Settings for the deterministic integrators used by the theory routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Nodes per axis of the first tensor grid.
    pub base_nodes: usize,
    /// Largest grid tried before giving up.
    pub max_nodes: usize,
    /// Absolute tolerance on the Richardson error estimate.
    pub tolerance: f64,
    /// Quasi-Monte Carlo points for Gaussian-pair expectations.
    pub qmc_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            base_nodes: 256,
            max_nodes: 2048,
            tolerance: 1e-7,
            qmc_points: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    /// Nodes per axis (tensor quadrature) or number of points (QMC).
    pub resolution: usize,
}

fn tensor_rule<F: Fn(f64, f64) -> f64>(f: &F, n: usize) -> f64 {
    let (x, w) = gauss_legendre_unit(n);
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let mut row = 0.0;
        for (yj, wj) in x.iter().zip(&w) {
            row += wj * f(*xi, *yj);
        }
        total += wi * row;
    }
    total
}

/// Integrates `f` over `[0,1]^2` on successively doubled Gauss–Legendre grids.
///
/// The error of two consecutive grids is estimated as `|I_2N - I_N| / 3`
/// (second-order convergence, as for integrands with a kink along a curve).
pub fn integrate_unit_square<F: Fn(f64, f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<Integral> {
    if spec.base_nodes < 2 || spec.max_nodes < 2 * spec.base_nodes {
        return Err(Error::InvalidArgument(
            "quadrature needs base_nodes >= 2 and max_nodes >= 2 * base_nodes".into(),
        ));
    }
    let mut n = spec.base_nodes;
    let mut coarse = tensor_rule(&f, n);
    loop {
        let fine = tensor_rule(&f, 2 * n);
        let err = (fine - coarse).abs() / 3.0;
        if err <= spec.tolerance {
            return Ok(Integral {
                value: fine,
                error_estimate: err,
                resolution: 2 * n,
            });
        }
        if 4 * n > spec.max_nodes {
            return Err(Error::QuadratureNotConverged {
                previous: coarse,
                last: fine,
            });
        }
        coarse = fine;
        n *= 2;
    }
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    value
}

/// Halton sequence in `dim` dimensions, starting at index 1 so no coordinate is 0.
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > PRIMES.len() {
            return Err(Error::InvalidArgument(format!(
                "Halton dimension must be in 1..={}",
                PRIMES.len()
            )));
        }
        Ok(Self { dim, index: 1 })
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(&PRIMES[..self.dim]) {
            *o = radical_inverse(self.index, b);
        }
        self.index += 1;
    }
}

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub fn cholesky(sigma: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    sigma.clone().cholesky()
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| {
            (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * (1.0 + m[(i, j)].abs()))
        })
}

/// Affine discriminant `offset + (x - center)^T weights`.
///
/// Both the Gaussian-pair Bayes rule and the LDA classifier evaluate their
/// score through this type so that identical parameters give identical bits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    pub offset: f64,
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LinearScore {
    /// Builds the Gaussian log-odds `log(pi1/pi0) + (x - (mu0+mu1)/2)^T Sigma^{-1} (mu1 - mu0)`.
    ///
    /// Returns the score together with the linear-solve residual
    /// `||Sigma w - (mu1 - mu0)|| / ||mu1 - mu0||`.
    pub fn from_moments(
        pi1: f64,
        mu0: &[f64],
        mu1: &[f64],
        chol: &Cholesky<f64, Dyn>,
        sigma: &DMatrix<f64>,
    ) -> (Self, f64) {
        let diff = DVector::from_iterator(mu0.len(), mu1.iter().zip(mu0).map(|(a, b)| a - b));
        let w = chol.solve(&diff);
        let resid = (sigma * &w - &diff).norm() / diff.norm().max(f64::MIN_POSITIVE);
        let center = mu0.iter().zip(mu1).map(|(a, b)| 0.5 * (a + b)).collect();
        (
            Self {
                offset: (pi1 / (1.0 - pi1)).ln(),
                center,
                weights: w.iter().copied().collect(),
            },
            resid,
        )
    }

    #[inline]
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((xi, ci), wi) in x.iter().zip(&self.center).zip(&self.weights) {
            s += (xi - ci) * wi;
        }
        self.offset + s
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidModel("covariance must be a square matrix".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

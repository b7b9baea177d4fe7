//! Plug-in linear discriminant analysis with pooled covariance.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::generators::{DataSet, LabelSource};
use crate::linalg::{cholesky, is_symmetric, LinearScore};

/// Largest accepted relative residual of the discriminant solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Smallest accepted squared Cholesky pivot relative to the largest variance.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LdaClassifier {
    pi1: f64,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    sigma: DMatrix<f64>,
    score: LinearScore,
    residual: f64,
}

pub fn fit_lda(data: &DataSet, source: LabelSource) -> Result<LdaClassifier> {
    let labels = data.labels(source)?;
    let (n, d) = (data.len(), data.dim());
    if n < d + 2 {
        return invalid(format!("LDA needs n >= d + 2, got n = {n}, d = {d}"));
    }
    let mut counts = [0usize; 2];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (i, &y) in labels.iter().enumerate() {
        counts[y as usize] += 1;
        for (s, v) in sums[y as usize].iter_mut().zip(data.x(i)) {
            *s += v;
        }
    }
    for r in 0..2u8 {
        if counts[r as usize] == 0 {
            return Err(Error::DegenerateClass(r));
        }
    }
    let means: Vec<Vec<f64>> = (0..2)
        .map(|r| sums[r].iter().map(|s| s / counts[r] as f64).collect())
        .collect();
    let mut sigma = DMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for (i, &y) in labels.iter().enumerate() {
        for ((c, v), m) in centered.iter_mut().zip(data.x(i)).zip(&means[y as usize]) {
            *c = v - m;
        }
        for a in 0..d {
            for b in 0..=a {
                sigma[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    let scale = 1.0 / (n - 2) as f64;
    for a in 0..d {
        for b in 0..=a {
            let v = sigma[(a, b)] * scale;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    let pi1 = counts[1] as f64 / n as f64;
    let [mu0, mu1]: [Vec<f64>; 2] = means.try_into().expect("two classes");
    LdaClassifier::from_parameters(pi1, mu0, mu1, sigma)
}

impl LdaClassifier {
    /// Discriminant built directly from class prior, means and common covariance.
    ///
    /// Given a Gaussian pair's true parameters this is bit-for-bit its Bayes rule.
    pub fn from_parameters(pi1: f64, mu0: Vec<f64>, mu1: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu0.len();
        if mu1.len() != d || sigma.nrows() != d || sigma.ncols() != d {
            return invalid("LDA parameters disagree in dimension");
        }
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return invalid(format!("class prior {pi1} must lie in (0, 1)"));
        }
        if !is_symmetric(&sigma, 1e-12) {
            return Err(Error::SingularCovariance("covariance is not symmetric".into()));
        }
        let chol = cholesky(&sigma)
            .ok_or_else(|| Error::SingularCovariance("Cholesky factorization failed".into()))?;
        // a pivot this small relative to the diagonal means rank deficiency up to rounding
        let pivots = chol.l().diagonal().map(|v| v * v);
        let scale = sigma.diagonal().max();
        if !(pivots.min() > PIVOT_TOLERANCE * scale) {
            return Err(Error::SingularCovariance(format!(
                "smallest Cholesky pivot {:e} is negligible against diagonal scale {scale:e}",
                pivots.min()
            )));
        }
        let (score, residual) = LinearScore::from_moments(pi1, &mu0, &mu1, &chol, &sigma);
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::SingularCovariance(format!(
                "discriminant solve residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}"
            )));
        }
        Ok(Self {
            pi1,
            mu0,
            mu1,
            sigma,
            score,
            residual,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
    pub fn pi0(&self) -> f64 {
        1.0 - self.pi1
    }
    pub fn pi1(&self) -> f64 {
        self.pi1
    }
    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }
    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    /// `Sigma^{-1} (mu1 - mu0)`.
    pub fn weights(&self) -> &[f64] {
        &self.score.weights
    }
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.score.score(x)
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.score(x) >= 0.0)
    }
}

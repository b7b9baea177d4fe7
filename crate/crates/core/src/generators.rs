//! Data-generating models with analytic regression functions.
//!
//! Two families are provided: a pair of Gaussians with shared covariance (which
//! also covers the motivating two-dimensional example) and the uniform-cube
//! model whose regression function is a clipped quadratic in the first two
//! coordinates.
//!
//! Gaussian features are drawn as `mu + L z` with `L` the Cholesky factor of the
//! covariance and `z` standard normals from the ziggurat sampler of `rand_distr`.
//! An identity covariance skips the factor.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, is_symmetric, LinearScore};
use crate::numerics::{
    gauss_legendre_unit, integrate_unit_square, logistic, normal_pdf, normal_quantile, Halton, Integral, QuadratureSpec,
};
use crate::rng;
use crate::theory::lda_bayes_risk;

/// Which label column a classifier is trained (or scored) on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    True,
    Observed,
}

#[derive(Debug, Clone)]
pub struct GaussianPairModel {
    d: usize,
    pi1: f64,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    sigma: DMatrix<f64>,
    /// Lower Cholesky factor; `None` for the identity.
    factor: Option<DMatrix<f64>>,
    score: LinearScore,
    delta: f64,
}

impl GaussianPairModel {
    pub fn new(pi1: f64, mu0: Vec<f64>, mu1: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu0.len();
        if d == 0 || mu1.len() != d {
            return Err(Error::InvalidModel("means must be non-empty and of equal length".into()));
        }
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::InvalidModel(format!("prior pi1 = {pi1} must lie in (0, 1)")));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::InvalidModel(format!("covariance must be {d}x{d}")));
        }
        if !is_symmetric(&sigma, 1e-12) {
            return Err(Error::InvalidModel("covariance is not symmetric".into()));
        }
        if mu0.iter().chain(&mu1).chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite model parameter".into()));
        }
        let chol = cholesky(&sigma)
            .ok_or_else(|| Error::InvalidModel("covariance is not positive definite".into()))?;
        let identity = sigma == DMatrix::identity(d, d);
        let (score, _) = LinearScore::from_moments(pi1, &mu0, &mu1, &chol, &sigma);
        let diff: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
        let delta_sq: f64 = diff.iter().zip(&score.weights).map(|(a, b)| a * b).sum();
        if !(delta_sq > 0.0) {
            return Err(Error::InvalidModel("class means coincide (Mahalanobis distance 0)".into()));
        }
        Ok(Self {
            d,
            pi1,
            mu0,
            mu1,
            factor: (!identity).then(|| chol.l()),
            sigma,
            score,
            delta: delta_sq.sqrt(),
        })
    }

    /// Identity covariance with `mu1 = (3/2, 0, ..., 0) = -mu0`.
    pub fn model1(d: usize, pi1: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        let mut mu1 = vec![0.0; d];
        mu1[0] = 1.5;
        let mu0 = mu1.iter().map(|v| -v).collect();
        Self::new(pi1, mu0, mu1, DMatrix::identity(d, d))
    }

    /// Bivariate example with priors (0.9, 0.1), means (-1,0) and (1,0), identity covariance.
    pub fn example1() -> Self {
        Self::new(0.1, vec![-1.0, 0.0], vec![1.0, 0.0], DMatrix::identity(2, 2))
            .expect("example parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.d
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
    /// Mahalanobis distance between the class means.
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn log_odds_score(&self) -> &LinearScore {
        &self.score
    }

    /// `Delta^2` through a Cholesky linear solve.
    pub fn mahalanobis_sq_solve(&self) -> f64 {
        let diff = DVector::from_iterator(self.d, self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b));
        let chol = cholesky(&self.sigma).expect("validated at construction");
        diff.dot(&chol.solve(&diff))
    }

    /// `Delta^2` as `||L^{-1} (mu1 - mu0)||^2` by forward substitution.
    pub fn mahalanobis_sq_forward(&self) -> f64 {
        let l = cholesky(&self.sigma).expect("validated at construction").l();
        let diff: Vec<f64> = self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect();
        let mut z = vec![0.0; self.d];
        for i in 0..self.d {
            let mut acc = diff[i];
            for j in 0..i {
                acc -= l[(i, j)] * z[j];
            }
            z[i] = acc / l[(i, i)];
        }
        z.iter().map(|v| v * v).sum()
    }

    pub fn log_odds(&self, x: &[f64]) -> f64 {
        self.score.score(x)
    }

    fn fill_features(&self, label: u8, z: &[f64], out: &mut [f64]) {
        let mu = if label == 1 { &self.mu1 } else { &self.mu0 };
        match &self.factor {
            None => {
                for ((o, m), zi) in out.iter_mut().zip(mu).zip(z) {
                    *o = m + zi;
                }
            }
            Some(l) => {
                for i in 0..self.d {
                    let mut acc = mu[i];
                    for j in 0..=i {
                        acc += l[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadraticUniformModel {
    d: usize,
}

impl QuadraticUniformModel {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidModel(format!("uniform-quadratic model needs d >= 2, got {d}")));
        }
        Ok(Self { d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        let a = x[0] - 0.5;
        let b = x[1] - 0.5;
        (4.0 * a * a + 4.0 * b * b).min(1.0)
    }
}

#[derive(Debug, Clone)]
pub enum DataModel {
    GaussianPair(GaussianPairModel),
    QuadraticUniform(QuadraticUniformModel),
}

impl From<GaussianPairModel> for DataModel {
    fn from(m: GaussianPairModel) -> Self {
        DataModel::GaussianPair(m)
    }
}

impl From<QuadraticUniformModel> for DataModel {
    fn from(m: QuadraticUniformModel) -> Self {
        DataModel::QuadraticUniform(m)
    }
}

impl DataModel {
    pub fn dim(&self) -> usize {
        match self {
            DataModel::GaussianPair(m) => m.dim(),
            DataModel::QuadraticUniform(m) => m.dim(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataModel::GaussianPair(m) => format!(
                "gaussian-pair(d={},pi1={},delta={:.6})",
                m.d, m.pi1, m.delta
            ),
            DataModel::QuadraticUniform(m) => format!("quadratic-uniform(d={})", m.d),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return invalid(format!(
                "feature vector has dimension {}, model expects {}",
                x.len(),
                self.dim()
            ));
        }
        Ok(())
    }

    /// Regression function without the dimension check, for hot loops.
    #[inline]
    pub fn eta_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            DataModel::GaussianPair(m) => logistic(m.log_odds(x)),
            DataModel::QuadraticUniform(m) => m.eta(x),
        }
    }

    pub fn eta(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eta_unchecked(x))
    }

    pub fn bayes_classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.eta(x)? >= 0.5))
    }

    /// Closed form for Gaussian pairs, the exact law of `eta` otherwise; `quad` is unused by the built-in models.
    pub fn bayes_risk(&self, _quad: &QuadratureSpec) -> Result<f64> {
        match self {
            DataModel::GaussianPair(m) => lda_bayes_risk(m.pi1, m.delta),
            // The law of eta puts the kink at 1/2 on a panel edge, so this is exact
            // to rounding, unlike tensor quadrature across the circular boundary.
            DataModel::QuadraticUniform(_) => Ok(self.eta_expectation(|eta| eta.min(1.0 - eta))),
        }
    }

    /// `E[f(X)]` under the feature marginal.
    ///
    /// The uniform-quadratic model integrates over the first two coordinates by
    /// tensor quadrature with the remaining coordinates held at 1/2, so `f` must
    /// depend on `x1, x2` only. The Gaussian pair uses `quad.qmc_points` Halton
    /// points and reports `3/sqrt(N)` as its error.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F, quad: &QuadratureSpec) -> Result<Integral> {
        match self {
            DataModel::QuadraticUniform(m) => {
                let buf = RefCell::new(vec![0.5; m.d]);
                integrate_unit_square(
                    |a, b| {
                        let mut x = buf.borrow_mut();
                        x[0] = a;
                        x[1] = b;
                        f(&x)
                    },
                    quad,
                )
            }
            DataModel::GaussianPair(m) => {
                let n = quad.qmc_points;
                if n == 0 {
                    return invalid("qmc_points must be positive");
                }
                let mut total = 0.0;
                for_each_qmc_point(m, n, |x| total += f(x))?;
                Ok(Integral {
                    value: total / n as f64,
                    error_estimate: 3.0 / (n as f64).sqrt(),
                    resolution: n,
                })
            }
        }
    }

    /// `E[f(eta(X))]` through the one-dimensional law of `eta(X)`.
    ///
    /// For the Gaussian pair the log-odds is normal with variance `delta^2` within
    /// each class; for the uniform-quadratic model `eta` has density `pi/4` on
    /// `[0, 1)` and an atom of mass `1 - pi/4` at 1. Both are integrated with a
    /// composite 8-point Gauss–Legendre rule on 4096 panels, which keeps the
    /// error far below `1e-9` for integrands with finitely many kinks.
    pub fn eta_expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        const PANELS: usize = 4096;
        let (nodes, weights) = gauss_legendre_unit(8);
        let composite = |lo: f64, hi: f64, g: &dyn Fn(f64) -> f64| {
            let h = (hi - lo) / PANELS as f64;
            let mut total = 0.0;
            for p in 0..PANELS {
                let a = lo + p as f64 * h;
                for (t, w) in nodes.iter().zip(&weights) {
                    total += w * g(a + t * h);
                }
            }
            total * h
        };
        match self {
            DataModel::GaussianPair(m) => {
                let offset = m.score.offset;
                let half = 0.5 * m.delta * m.delta;
                let class = |mean: f64| composite(-10.0, 10.0, &|z| f(logistic(mean + m.delta * z)) * normal_pdf(z));
                m.pi1 * class(offset + half) + (1.0 - m.pi1) * class(offset - half)
            }
            DataModel::QuadraticUniform(_) => {
                let disk = std::f64::consts::PI / 4.0;
                disk * composite(0.0, 1.0, &f) + (1.0 - disk) * f(1.0)
            }
        }
    }

    /// Draws `n` i.i.d. records. Identical `(model, n, seed)` reproduce the same bits.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DataSet> {
        if n == 0 {
            return invalid("sample size must be at least 1");
        }
        let d = self.dim();
        let mut rng = rng::stream(seed);
        let mut features = vec![0.0; n * d];
        let mut labels = vec![0u8; n];
        match self {
            DataModel::GaussianPair(m) => {
                let mut z = vec![0.0; d];
                for (i, row) in features.chunks_exact_mut(d).enumerate() {
                    let y = u8::from(rng.random::<f64>() < m.pi1);
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    m.fill_features(y, &z, row);
                    labels[i] = y;
                }
            }
            DataModel::QuadraticUniform(m) => {
                for (i, row) in features.chunks_exact_mut(d).enumerate() {
                    for v in row.iter_mut() {
                        *v = rng.random::<f64>();
                    }
                    labels[i] = u8::from(rng.random::<f64>() < m.eta(row));
                }
            }
        }
        Ok(DataSet {
            d,
            features,
            labels,
            observed: None,
            seed,
        })
    }
}

/// Visits `n` quasi-random draws from the Gaussian-pair feature marginal.
fn for_each_qmc_point<F: FnMut(&[f64])>(m: &GaussianPairModel, n: usize, mut f: F) -> Result<()> {
    let d = m.d;
    let mut halton = Halton::new(d + 1)?;
    let mut u = vec![0.0; d + 1];
    let mut z = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..n {
        halton.next_into(&mut u);
        let y = u8::from(u[0] < m.pi1);
        for (zi, ui) in z.iter_mut().zip(&u[1..]) {
            *zi = normal_quantile(*ui);
        }
        m.fill_features(y, &z, &mut x);
        f(&x);
    }
    Ok(())
}

/// Quasi-random feature points covering the model's support.
pub fn support_points(model: &DataModel, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut pts = Vec::with_capacity(n);
    match model {
        DataModel::GaussianPair(m) => for_each_qmc_point(m, n, |x| pts.push(x.to_vec()))?,
        DataModel::QuadraticUniform(m) => {
            let mut h = Halton::new(m.d)?;
            for _ in 0..n {
                let mut x = vec![0.0; m.d];
                h.next_into(&mut x);
                pts.push(x);
            }
        }
    }
    Ok(pts)
}

/// Ordered sample of `(x, y, y_observed)` records stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    d: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    observed: Option<Vec<u8>>,
    seed: u64,
}

impl DataSet {
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<u8>, observed: Option<Vec<u8>>, seed: u64) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if features.len() != d * labels.len() {
            return invalid("feature buffer length does not match d * n");
        }
        if labels.iter().chain(observed.iter().flatten()).any(|&l| l > 1) {
            return invalid("labels must be 0 or 1");
        }
        if observed.as_ref().is_some_and(|o| o.len() != labels.len()) {
            return invalid("observed labels must be present for every record or none");
        }
        Ok(Self {
            d,
            features,
            labels,
            observed,
            seed,
        })
    }

    /// Builds a data set from row vectors, mainly for tests and bindings.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return invalid("all rows must share one dimension");
        }
        Self::new(d, rows.concat(), labels, None, 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }
    pub fn features(&self) -> &[f64] {
        &self.features
    }
    pub fn true_labels(&self) -> &[u8] {
        &self.labels
    }
    pub fn observed_labels(&self) -> Option<&[u8]> {
        self.observed.as_deref()
    }
    pub fn is_corrupted(&self) -> bool {
        self.observed.is_some()
    }

    pub fn labels(&self, source: LabelSource) -> Result<&[u8]> {
        match source {
            LabelSource::True => Ok(&self.labels),
            LabelSource::Observed => self
                .observed
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("data set carries no observed labels".into())),
        }
    }

    /// Same records with the given observed labels attached.
    pub fn with_observed(&self, observed: Vec<u8>) -> Result<Self> {
        Self::new(self.d, self.features.clone(), self.labels.clone(), Some(observed), self.seed)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.x(i));
        }
        Self {
            d: self.d,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            observed: self.observed.as_ref().map(|o| indices.iter().map(|&i| o[i]).collect()),
            seed: self.seed,
        }
    }
}

pub fn sample(model: &DataModel, n: usize, seed: u64) -> Result<DataSet> {
    model.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model1(d: usize, pi1: f64) -> DataModel {
        GaussianPairModel::model1(d, pi1).unwrap().into()
    }

    #[test]
    fn rejects_bad_models() {
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianPairModel::new(0.5, vec![0.0, 0.0], vec![1.0, 0.0], not_pd),
            Err(Error::InvalidModel(_))
        ));
        assert!(GaussianPairModel::model1(2, 1.0).is_err());
        assert!(GaussianPairModel::new(0.5, vec![1.0], vec![1.0], DMatrix::identity(1, 1)).is_err());
        assert!(QuadraticUniformModel::new(1).is_err());
        assert!(model1(2, 0.5).sample(0, 1).is_err());
    }

    #[test]
    fn eta_expectation_reproduces_bayes_risks() {
        let bayes = |s: f64| s.min(1.0 - s);
        let quad: DataModel = QuadraticUniformModel::new(3).unwrap().into();
        assert!((quad.eta_expectation(bayes) - std::f64::consts::PI / 16.0).abs() < 1e-12);
        for pi1 in [0.1, 0.5, 0.9] {
            let m: DataModel = GaussianPairModel::model1(2, pi1).unwrap().into();
            let exact = lda_bayes_risk(pi1, 3.0).unwrap();
            assert!((m.eta_expectation(bayes) - exact).abs() < 1e-9, "pi1 = {pi1}");
            // total probability
            assert!((m.eta_expectation(|_| 1.0) - 1.0).abs() < 1e-12);
            // E[eta] = pi1
            assert!((m.eta_expectation(|s| s) - pi1).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_examples() {
        let m = model1(2, 0.5);
        assert_eq!(m.eta(&[0.0, 0.3]).unwrap(), 0.5);
        // density ratio at mu1: exp(Delta^2 / 2) with Delta = 3
        let expected = 1.0 / (1.0 + (-4.5f64).exp());
        assert!((m.eta(&[1.5, 0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.98901).abs() < 1e-5);
        let q: DataModel = QuadraticUniformModel::new(3).unwrap().into();
        assert_eq!(q.eta(&[0.5, 0.5, 0.2]).unwrap(), 0.0);
        assert!(m.eta(&[0.0]).is_err());
    }

    #[test]
    fn bayes_classify_examples() {
        let q: DataModel = QuadraticUniformModel::new(3).unwrap().into();
        assert!((q.eta(&[0.8, 0.5, 0.1]).unwrap() - 0.36).abs() < 1e-12);
        assert_eq!(q.bayes_classify(&[0.8, 0.5, 0.1]).unwrap(), 0);
        assert_eq!(q.bayes_classify(&[1.0, 1.0, 1.0]).unwrap(), 1);
        let m = model1(2, 0.5);
        assert_eq!(m.bayes_classify(&[0.0, -2.0]).unwrap(), 1);
    }

    #[test]
    fn gaussian_sampling_with_general_covariance_matches_moments() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let m: DataModel = GaussianPairModel::new(0.5, vec![0.0, 0.0], vec![1.0, 1.0], sigma).unwrap().into();
        let data = m.sample(200_000, 3).unwrap();
        let (mut s00, mut s01, mut s11, mut c) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..data.len() {
            if data.true_labels()[i] == 0 {
                let x = data.x(i);
                s00 += x[0] * x[0];
                s01 += x[0] * x[1];
                s11 += x[1] * x[1];
                c += 1.0;
            }
        }
        assert!((s00 / c - 2.0).abs() < 0.03);
        assert!((s01 / c - 0.6).abs() < 0.02);
        assert!((s11 / c - 1.0).abs() < 0.02);
    }

    #[test]
    fn subset_and_observed_labels() {
        let data = DataSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0, 1, 1]).unwrap();
        assert!(data.labels(LabelSource::Observed).is_err());
        let noisy = data.with_observed(vec![1, 1, 0]).unwrap();
        let sub = noisy.subset(&[2, 0]);
        assert_eq!(sub.x(0), &[2.0]);
        assert_eq!(sub.true_labels(), &[1, 0]);
        assert_eq!(sub.observed_labels().unwrap(), &[0, 1]);
        assert!(data.with_observed(vec![1]).is_err());
    }
}

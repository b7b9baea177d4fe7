//! Hinge-loss SVM without intercept and with a Gaussian RBF kernel.
//!
//! The penalized problem `(1/n) sum max{0, 1 - y_i f(x_i)} + lambda ||f||_H^2`
//! is solved through its dual
//! `max sum a_i - 1/2 a^T Q a` over `0 <= a_i <= C = 1/(2 n lambda)` with
//! `Q_ij = y_i y_j K(x_i, x_j)` and `K(x, x') = exp(-sigma^2 ||x - x'||^2)`.
//! Since `K_ii = 1` the exact coordinate maximizer is `clip(a_i + g_i, 0, C)`
//! where `g = 1 - Q a` is the dual gradient.

use lru::LruCache;
use nalgebra::{DMatrix, DVector};
use std::num::NonZeroUsize;

use crate::error::{invalid, Result};
use crate::generators::{DataSet, LabelSource};

/// Termination threshold on the largest projected-gradient violation.
pub const KKT_TOLERANCE: f64 = 1e-6;
/// Relative duality gap required on top of the KKT threshold.
pub const GAP_TOLERANCE: f64 = 1e-5;
/// Largest training size for which the full Gram matrix is held in memory.
pub const DENSE_GRAM_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub kkt_tolerance: f64,
    pub gap_tolerance: f64,
    /// Coordinate updates allowed; `None` means `max(10^6, 500 n)`.
    pub max_iterations: Option<usize>,
    /// Kernel rows kept when the Gram matrix is too large to store.
    pub cache_rows: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            kkt_tolerance: KKT_TOLERANCE,
            gap_tolerance: GAP_TOLERANCE,
            max_iterations: None,
            cache_rows: 2048,
        }
    }
}

impl SvmOptions {
    fn budget(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| (500 * n).max(1_000_000))
    }
}

/// `sigma = sqrt(1/d)`, i.e. `sigma^2 = 1/d`.
pub fn default_sigma(d: usize) -> f64 {
    (1.0 / d as f64).sqrt()
}

#[inline]
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    (-sigma * sigma * s).exp()
}

/// Kernel matrix between two row-major point sets, stored row by row.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn gram(features: &[f64], d: usize, sigma: f64) -> Self {
        let n = features.len() / d;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
            let xi = &features[i * d..(i + 1) * d];
            for j in 0..i {
                let v = rbf_kernel(xi, &features[j * d..(j + 1) * d], sigma);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn cross(queries: &[f64], train: &[f64], d: usize, sigma: f64) -> Self {
        let (rows, cols) = (queries.len() / d, train.len() / d);
        let mut data = Vec::with_capacity(rows * cols);
        for q in queries.chunks_exact(d) {
            data.extend(train.chunks_exact(d).map(|t| rbf_kernel(q, t, sigma)));
        }
        Self {
            rows,
            cols,
            data,
        }
    }

    /// The square block of a Gram matrix on the records `idx`.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Self {
            rows: idx.len(),
            cols: idx.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Source of kernel rows for the solver.
pub(crate) trait KernelRows {
    fn len(&self) -> usize;
    fn row(&mut self, i: usize) -> &[f64];
}

pub(crate) struct DenseRows<'a>(pub(crate) &'a KernelMatrix);

impl KernelRows for DenseRows<'_> {
    fn len(&self) -> usize {
        self.0.rows
    }
    fn row(&mut self, i: usize) -> &[f64] {
        self.0.row(i)
    }
}

struct CachedRows<'a> {
    features: &'a [f64],
    d: usize,
    sigma: f64,
    cache: LruCache<usize, Vec<f64>>,
}

impl KernelRows for CachedRows<'_> {
    fn len(&self) -> usize {
        self.features.len() / self.d
    }
    fn row(&mut self, i: usize) -> &[f64] {
        let (features, d, sigma) = (self.features, self.d, self.sigma);
        self.cache.get_or_insert(i, || {
            let xi = &features[i * d..(i + 1) * d];
            features.chunks_exact(d).map(|xj| rbf_kernel(xi, xj, sigma)).collect()
        })
    }
}

/// Dual iterate together with its diagnostics.
#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub kkt_violation: f64,
    pub dual: f64,
    pub primal: f64,
    pub converged: bool,
}

fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual) / primal.abs().max(f64::MIN_POSITIVE)
}

#[inline]
fn violation(a: f64, g: f64, c: f64) -> f64 {
    if a <= 0.0 {
        g.max(0.0)
    } else if a >= c {
        (-g).max(0.0)
    } else {
        g.abs()
    }
}

fn max_violation(alpha: &[f64], grad: &[f64], c: f64) -> (usize, f64) {
    let mut best = (0, -1.0);
    for (i, (&a, &g)) in alpha.iter().zip(grad).enumerate() {
        let v = violation(a, g, c);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `g = 1 - Q a`, accumulated over the non-zero coordinates only.
fn exact_gradient<K: KernelRows>(rows: &mut K, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut grad = vec![1.0; y.len()];
    for i in 0..y.len() {
        if alpha[i] != 0.0 {
            let s = alpha[i] * y[i];
            for ((g, &k), &yj) in grad.iter_mut().zip(rows.row(i)).zip(y) {
                *g -= s * yj * k;
            }
        }
    }
    grad
}

/// Scaled dual `sum a - 1/2 a^T Q a` and primal `1/2 a^T Q a + C sum max(0, g)`.
fn objectives(alpha: &[f64], grad: &[f64], c: f64) -> (f64, f64) {
    let (mut dual, mut quad, mut hinge) = (0.0, 0.0, 0.0);
    for (&a, &g) in alpha.iter().zip(grad) {
        dual += 0.5 * a * (1.0 + g);
        quad += 0.5 * a * (1.0 - g);
        hinge += g.max(0.0);
    }
    (dual, quad + c * hinge)
}

/// Largest free set handled by a Newton step.
const NEWTON_MAX_SET: usize = 800;
/// Newton steps per phase; each either reaches the subspace optimum or pins a coordinate.
const NEWTON_ROUNDS: usize = 10;
/// Greedy updates between Newton phases of the exact solver.
const NEWTON_PERIOD: usize = 200;

/// Cholesky factor of `q`, adding the smallest workable ridge when `q` is
/// numerically singular (as Gram blocks of wide kernels are).
fn ridged_cholesky(q: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = q.clone().cholesky() {
        return Some(ch);
    }
    let mut ridge = 1e-12;
    while ridge <= 1e-2 {
        let mut shifted = q.clone();
        for a in 0..q.nrows() {
            shifted[(a, a)] += ridge;
        }
        if let Some(ch) = shifted.cholesky() {
            return Some(ch);
        }
        ridge *= 100.0;
    }
    None
}

/// Step length along `step` on the free set: the exact maximizer of the dual
/// on that line, cut back to the first bound hit. Returns `(t, blocked)`.
fn free_step_length(alpha: &[f64], free: &[usize], step: &DVector<f64>, slope: f64, curvature: f64, c: f64) -> (f64, bool) {
    let mut t = if curvature > 0.0 { slope / curvature } else { 1.0 };
    t = t.min(1.0);
    let mut blocked = false;
    for (a, &i) in free.iter().enumerate() {
        let s = step[a];
        let room = if s > 0.0 { (c - alpha[i]) / s } else if s < 0.0 { -alpha[i] / s } else { f64::INFINITY };
        if room < t {
            t = room;
            blocked = true;
        }
    }
    (t.max(0.0), blocked)
}

fn snap(a: &mut f64, c: f64) {
    if *a < 1e-14 * c {
        *a = 0.0;
    } else if *a > c * (1.0 - 1e-14) {
        *a = c;
    }
}

/// Newton steps on the free coordinates with the bound ones held fixed.
///
/// On the free set the dual is an unconstrained quadratic, so a full step solves
/// it; a step that would leave the box stops at the boundary and pins the
/// blocking coordinate before the next round. Returns the steps taken and the
/// size of the largest free set factored.
fn newton_phase<K: KernelRows>(rows: &mut K, y: &[f64], c: f64, alpha: &mut [f64], grad: &mut [f64]) -> (usize, usize) {
    let n = y.len();
    let mut steps = 0;
    let mut largest = 0;
    for _ in 0..NEWTON_ROUNDS {
        let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0 && alpha[i] < c).collect();
        let m = free.len();
        if m < 2 || m > NEWTON_MAX_SET || free.iter().all(|&i| grad[i].abs() <= 1e-15) {
            break;
        }
        largest = largest.max(m);
        let mut block = DMatrix::zeros(m, m);
        for (a, &i) in free.iter().enumerate() {
            let row = rows.row(i);
            for (b, &j) in free.iter().enumerate() {
                block[(a, b)] = y[i] * y[j] * row[j];
            }
        }
        let g = DVector::from_fn(m, |a, _| grad[free[a]]);
        let Some(chol) = ridged_cholesky(block.clone()) else { break };
        let step = chol.solve(&g);
        let slope = step.dot(&g);
        let curvature = step.dot(&(&block * &step));
        if !(slope > 0.0) {
            break;
        }
        let (t, blocked) = free_step_length(alpha, &free, &step, slope, curvature, c);
        if t <= 0.0 {
            break;
        }
        for (a, &i) in free.iter().enumerate() {
            let delta = t * step[a];
            alpha[i] += delta;
            snap(&mut alpha[i], c);
            let s = delta * y[i];
            for ((gj, &k), &yj) in grad.iter_mut().zip(rows.row(i)).zip(y) {
                *gj -= s * yj * k;
            }
        }
        steps += 1;
        if !blocked {
            break;
        }
    }
    (steps, largest)
}

/// Box-constrained dual ascent from `a = 0`: greedy single-coordinate updates
/// interleaved with Newton phases on the free set. Stops once the largest violation is below
/// the KKT tolerance and the relative duality gap is below the gap tolerance,
/// or when the update budget runs out.
pub(crate) fn solve_dual<K: KernelRows>(
    rows: &mut K,
    y: &[f64],
    c: f64,
    opts: &SvmOptions,
) -> DualSolution {
    let n = rows.len();
    let mut alpha = vec![0.0; n];
    let budget = opts.budget(n);
    let mut iterations = 0;
    let mut grad = exact_gradient(rows, y, &alpha);
    let mut tol = opts.kkt_tolerance;
    let (mut i, mut viol) = max_violation(&alpha, &grad, c);
    let mut since_newton = 0;
    let mut period = NEWTON_PERIOD;
    loop {
        if viol <= tol {
            // incremental updates drift, so confirm on a fresh gradient
            grad = exact_gradient(rows, y, &alpha);
            (i, viol) = max_violation(&alpha, &grad, c);
            if viol <= tol {
                let (dual, primal) = objectives(&alpha, &grad, c);
                if relative_gap(primal, dual) <= opts.gap_tolerance || tol < 1e-13 {
                    let converged = viol <= opts.kkt_tolerance && relative_gap(primal, dual) <= opts.gap_tolerance;
                    return DualSolution {
                        alpha,
                        iterations,
                        kkt_violation: viol,
                        dual,
                        primal,
                        converged,
                    };
                }
                tol *= 0.1;
                continue;
            }
        }
        if iterations >= budget {
            grad = exact_gradient(rows, y, &alpha);
            let (_, viol) = max_violation(&alpha, &grad, c);
            let (dual, primal) = objectives(&alpha, &grad, c);
            return DualSolution {
                alpha,
                iterations,
                kkt_violation: viol,
                dual,
                primal,
                converged: false,
            };
        }
        if since_newton >= period {
            since_newton = 0;
            let (steps, m) = newton_phase(rows, y, c, &mut alpha, &mut grad);
            // keep the cubic cost of a phase in proportion to the updates between phases
            period = NEWTON_PERIOD.max(m.pow(3) / (6 * n));
            if steps > 0 {
                iterations += steps;
                (i, viol) = max_violation(&alpha, &grad, c);
                continue;
            }
        }
        iterations += 1;
        since_newton += 1;
        let new = (alpha[i] + grad[i]).clamp(0.0, c);
        let delta = new - alpha[i];
        alpha[i] = new;
        let s = delta * y[i];
        let mut best = (0, -1.0);
        for (j, ((g, &k), &yj)) in grad.iter_mut().zip(rows.row(i)).zip(y).enumerate() {
            *g -= s * yj * k;
            let v = violation(alpha[j], *g, c);
            if v > best.1 {
                best = (j, v);
            }
        }
        (i, viol) = best;
    }
}

/// Fitted kernel machine `f(x) = sum a_i y_i K(x_i, x)`, predicting 1 iff `f(x) >= 0`.
#[derive(Debug, Clone)]
pub struct SvmClassifier {
    d: usize,
    lambda: f64,
    sigma: f64,
    c: f64,
    alpha: Vec<f64>,
    signed_labels: Vec<f64>,
    support: Vec<usize>,
    sv_features: Vec<f64>,
    sv_coef: Vec<f64>,
    dual_objective: f64,
    primal_objective: f64,
    kkt_violation: f64,
    iterations: usize,
    converged: bool,
}

fn check_params(lambda: f64, sigma: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda = {lambda} must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma = {sigma} must be positive"));
    }
    Ok(())
}

pub(crate) fn signed(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&y| 2.0 * f64::from(y) - 1.0).collect()
}

impl SvmClassifier {
    pub(crate) fn from_solution(
        features: &[f64],
        d: usize,
        y: Vec<f64>,
        lambda: f64,
        sigma: f64,
        sol: DualSolution,
    ) -> Self {
        let c = 1.0 / (2.0 * y.len() as f64 * lambda);
        let support: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        let sv_features = support.iter().flat_map(|&i| features[i * d..(i + 1) * d].iter().copied()).collect();
        let sv_coef = support.iter().map(|&i| sol.alpha[i] * y[i]).collect();
        // report objectives on the scale of the penalized problem
        let scale = 2.0 * lambda;
        Self {
            d,
            lambda,
            sigma,
            c,
            alpha: sol.alpha,
            signed_labels: y,
            support,
            sv_features,
            sv_coef,
            dual_objective: scale * sol.dual,
            primal_objective: scale * sol.primal,
            kkt_violation: sol.kkt_violation,
            iterations: sol.iterations,
            converged: sol.converged,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    /// Box bound `C = 1/(2 n lambda)`.
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn signed_labels(&self) -> &[f64] {
        &self.signed_labels
    }
    pub fn support(&self) -> &[usize] {
        &self.support
    }
    /// Dual objective, on the scale of the penalized hinge-loss problem.
    pub fn dual_objective(&self) -> f64 {
        self.dual_objective
    }
    /// Penalized hinge-loss objective at the fitted function.
    pub fn primal_objective(&self) -> f64 {
        self.primal_objective
    }
    pub fn duality_gap(&self) -> f64 {
        relative_gap(self.primal_objective, self.dual_objective)
    }
    pub fn kkt_violation(&self) -> f64 {
        self.kkt_violation
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.sv_features
            .chunks_exact(self.d)
            .zip(&self.sv_coef)
            .map(|(s, c)| c * rbf_kernel(s, x, self.sigma))
            .sum()
    }

    /// Decision value from precomputed kernel values against the training records.
    pub fn decision_from_kernel(&self, k_row: &[f64]) -> f64 {
        self.support.iter().zip(&self.sv_coef).map(|(&i, c)| c * k_row[i]).sum()
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) >= 0.0)
    }
}

pub fn fit_svm(data: &DataSet, lambda: f64, sigma: f64, source: LabelSource) -> Result<SvmClassifier> {
    fit_svm_with(data, lambda, sigma, source, &SvmOptions::default())
}

pub fn fit_svm_with(
    data: &DataSet,
    lambda: f64,
    sigma: f64,
    source: LabelSource,
    opts: &SvmOptions,
) -> Result<SvmClassifier> {
    check_params(lambda, sigma)?;
    let y = signed(data.labels(source)?);
    let (n, d) = (data.len(), data.dim());
    let c = 1.0 / (2.0 * n as f64 * lambda);
    let sol = if n <= DENSE_GRAM_LIMIT {
        let gram = KernelMatrix::gram(data.features(), d, sigma);
        solve_dual(&mut DenseRows(&gram), &y, c, opts)
    } else {
        let cap = NonZeroUsize::new(opts.cache_rows.max(1)).expect("positive");
        let mut rows = CachedRows {
            features: data.features(),
            d,
            sigma,
            cache: LruCache::new(cap),
        };
        solve_dual(&mut rows, &y, c, opts)
    };
    Ok(SvmClassifier::from_solution(data.features(), d, y, lambda, sigma, sol))
}

/// Fits on a precomputed Gram matrix of `features`.
pub fn fit_svm_on_gram(
    gram: &KernelMatrix,
    features: &[f64],
    d: usize,
    labels: &[u8],
    lambda: f64,
    sigma: f64,
    opts: &SvmOptions,
) -> Result<SvmClassifier> {
    check_params(lambda, sigma)?;
    if gram.rows() != labels.len() || features.len() != labels.len() * d {
        return invalid("Gram matrix, features and labels disagree in size");
    }
    let y = signed(labels);
    let c = 1.0 / (2.0 * labels.len() as f64 * lambda);
    let sol = solve_dual(&mut DenseRows(gram), &y, c, opts);
    Ok(SvmClassifier::from_solution(features, d, y, lambda, sigma, sol))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    /// Exact dual optimum by enumerating which coordinates sit at 0, at C or in between.
    pub(crate) fn brute_force_dual(q: &DMatrix<f64>, c: f64) -> f64 {
        let n = q.nrows();
        let objective = |a: &DVector<f64>| a.sum() - 0.5 * a.dot(&(q * a));
        let mut best = f64::NEG_INFINITY;
        for code in 0..3usize.pow(n as u32) {
            let mut state = vec![0u8; n];
            let mut rest = code;
            for s in state.iter_mut() {
                *s = (rest % 3) as u8;
                rest /= 3;
            }
            let mut a = DVector::zeros(n);
            for i in 0..n {
                if state[i] == 1 {
                    a[i] = c;
                }
            }
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            if !free.is_empty() {
                let qff = DMatrix::from_fn(free.len(), free.len(), |r, s| q[(free[r], free[s])]);
                let rhs = DVector::from_fn(free.len(), |r, _| 1.0 - (0..n).map(|j| q[(free[r], j)] * a[j]).sum::<f64>());
                let Some(sol) = qff.lu().solve(&rhs) else { continue };
                if sol.iter().any(|&v| v < -1e-12 || v > c + 1e-12) {
                    continue;
                }
                for (r, &i) in free.iter().enumerate() {
                    a[i] = sol[r].clamp(0.0, c);
                }
            }
            best = best.max(objective(&a));
        }
        best
    }

    pub(crate) fn q_matrix(features: &[f64], d: usize, labels: &[u8], sigma: f64) -> DMatrix<f64> {
        let y = signed(labels);
        let n = labels.len();
        DMatrix::from_fn(n, n, |i, j| {
            y[i] * y[j] * rbf_kernel(&features[i * d..(i + 1) * d], &features[j * d..(j + 1) * d], sigma)
        })
    }

    fn scaled_dual(c: &SvmClassifier) -> f64 {
        c.dual_objective() / (2.0 * c.lambda())
    }

    #[test]
    fn two_point_problem_matches_grid_search() {
        let data = DataSet::new(1, vec![-1.0, 1.0], vec![0, 1], None, 0).unwrap();
        let svm = fit_svm(&data, 1.0, 1.0, LabelSource::True).unwrap();
        assert!(svm.converged());
        let c = svm.c();
        assert_eq!(c, 0.25);
        // grid search over [0, C]^2 in steps of 1e-4
        let k12 = (-4.0f64).exp();
        let steps = (c / 1e-4).round() as usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let (a, b) = (i as f64 * 1e-4, j as f64 * 1e-4);
                // Q_12 = y_1 y_2 K_12 = -K_12
                best = best.max(a + b - 0.5 * (a * a + b * b - 2.0 * a * b * k12));
            }
        }
        assert!((scaled_dual(&svm) - best).abs() < 1e-6);
        assert!(svm.decision(&[0.0]).abs() < 1e-12);
        assert_eq!(svm.predict(&[0.0]), 1);
        assert_eq!(svm.predict(&[-1.0]), 0);
    }

    #[test]
    fn identical_labels_predict_that_class_on_training_points() {
        let data = DataSet::new(1, vec![0.0, 0.3, 1.0, 2.5], vec![1; 4], None, 0).unwrap();
        let svm = fit_svm(&data, 0.05, 1.0, LabelSource::True).unwrap();
        let q = q_matrix(data.features(), 1, data.true_labels(), 1.0);
        assert!((scaled_dual(&svm) - brute_force_dual(&q, svm.c())).abs() < 1e-9);
        for i in 0..4 {
            assert!(svm.decision(data.x(i)) > 0.0);
        }
    }

    #[test]
    fn random_small_problems_match_enumeration() {
        let mut rng = crate::rng::stream(5);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let d = rng.random_range(1..=3);
            let features: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let lambda = 10f64.powf(rng.random::<f64>() * 4.0 - 3.0);
            let sigma = 0.3 + rng.random::<f64>() * 1.5;
            let data = DataSet::new(d, features.clone(), labels.clone(), None, 0).unwrap();
            let svm = fit_svm(&data, lambda, sigma, LabelSource::True).unwrap();
            assert!(svm.converged());
            assert!(svm.alpha().iter().all(|&a| (0.0..=svm.c()).contains(&a)));
            let exact = brute_force_dual(&q_matrix(&features, d, &labels, sigma), svm.c());
            assert!((scaled_dual(&svm) - exact).abs() < 1e-3 * exact.abs().max(1.0));
            assert!(svm.dual_objective() <= svm.primal_objective() + 1e-12);
        }
    }

    #[test]
    fn margins_are_complementary() {
        let model: crate::generators::DataModel = crate::generators::GaussianPairModel::model1(2, 0.5).unwrap().into();
        let data = model.sample(300, 8).unwrap();
        for lambda in [1e-3, 1e-1, 1.0] {
            let svm = fit_svm(&data, lambda, default_sigma(2), LabelSource::True).unwrap();
            assert!(svm.converged());
            assert!(svm.kkt_violation() <= KKT_TOLERANCE);
            assert!(svm.duality_gap() <= GAP_TOLERANCE);
            for i in 0..data.len() {
                let margin = svm.signed_labels()[i] * svm.decision(data.x(i));
                let a = svm.alpha()[i];
                if a == 0.0 {
                    assert!(margin >= 1.0 - 1e-5);
                }
                if a == svm.c() {
                    assert!(margin <= 1.0 + 1e-5);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_cached_path_agrees() {
        let model: crate::generators::DataModel = crate::generators::QuadraticUniformModel::new(2).unwrap().into();
        let data = model.sample(200, 1).unwrap();
        let a = fit_svm(&data, 0.01, 1.0, LabelSource::True).unwrap();
        let b = fit_svm(&data, 0.01, 1.0, LabelSource::True).unwrap();
        assert_eq!(a.alpha(), b.alpha());
        let y = signed(data.true_labels());
        let c = 1.0 / (2.0 * 200.0 * 0.01);
        let mut rows = CachedRows {
            features: data.features(),
            d: 2,
            sigma: 1.0,
            cache: LruCache::new(NonZeroUsize::new(7).unwrap()),
        };
        let sol = solve_dual(&mut rows, &y, c, &SvmOptions::default());
        assert!(sol.converged);
        assert!((2.0 * 0.01 * sol.dual - a.dual_objective()).abs() < 1e-9);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let model: crate::generators::DataModel = crate::generators::GaussianPairModel::model1(2, 0.5).unwrap().into();
        let data = model.sample(100, 2).unwrap();
        let opts = SvmOptions {
            max_iterations: Some(3),
            ..SvmOptions::default()
        };
        let svm = fit_svm_with(&data, 1e-3, 1.0, LabelSource::True, &opts).unwrap();
        assert!(!svm.converged());
        assert_eq!(svm.iterations(), 3);
        assert!(fit_svm(&data, 0.0, 1.0, LabelSource::True).is_err());
        assert!(fit_svm(&data, 1.0, -1.0, LabelSource::True).is_err());
    }

    #[test]
    fn gram_fit_matches_direct_fit() {
        let model: crate::generators::DataModel = crate::generators::GaussianPairModel::model1(2, 0.5).unwrap().into();
        let data = model.sample(150, 3).unwrap();
        let gram = KernelMatrix::gram(data.features(), 2, 0.7);
        let on_gram =
            fit_svm_on_gram(&gram, data.features(), 2, data.true_labels(), 0.01, 0.7, &SvmOptions::default()).unwrap();
        let direct = fit_svm(&data, 0.01, 0.7, LabelSource::True).unwrap();
        assert_eq!(on_gram.alpha(), direct.alpha());
        let cross = KernelMatrix::cross(data.features(), data.features(), 2, 0.7);
        for i in 0..data.len() {
            assert!((direct.decision_from_kernel(cross.row(i)) - direct.decision(data.x(i))).abs() < 1e-12);
        }
        let block = gram.subset(&[4, 0, 9]);
        assert_eq!(block.row(1)[2], gram.row(0)[9]);
        assert_eq!(block.row(0)[0], 1.0);
    }
}

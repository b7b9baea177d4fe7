//! Leave-one-out selection of `k` and stratified k-fold selection of `lambda`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::knn::NeighborTable;
use super::svm::{signed, solve_dual, DenseRows, KernelMatrix, SvmOptions};
use crate::error::{invalid, Result};
use crate::generators::{DataSet, LabelSource};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TunedParameter {
    K,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    SmallerK,
    LargerLambda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub parameter: TunedParameter,
    pub grid: Vec<f64>,
    /// Cross-validated misclassification rate per grid value.
    pub errors: Vec<f64>,
    pub selected: f64,
    pub tie_rule: TieRule,
}

impl CvReport {
    fn select(parameter: TunedParameter, grid: Vec<f64>, errors: Vec<f64>) -> Self {
        let tie_rule = match parameter {
            TunedParameter::K => TieRule::SmallerK,
            TunedParameter::Lambda => TieRule::LargerLambda,
        };
        let prefer = |cand: f64, cur: f64| match tie_rule {
            TieRule::SmallerK => cand < cur,
            TieRule::LargerLambda => cand > cur,
        };
        let mut best = 0;
        for i in 1..grid.len() {
            if errors[i] < errors[best] || (errors[i] == errors[best] && prefer(grid[i], grid[best])) {
                best = i;
            }
        }
        Self {
            parameter,
            selected: grid[best],
            grid,
            errors,
            tie_rule,
        }
    }

    pub fn selected_k(&self) -> Option<usize> {
        (self.parameter == TunedParameter::K).then_some(self.selected as usize)
    }

    pub fn min_error(&self) -> f64 {
        self.errors.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Odd `k` from 1 up to `min(n - 1, 3 n^{3/4})`.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let cap = ((3.0 * (n as f64).powf(0.75)).floor() as usize).min(n.saturating_sub(1));
    (1..=cap).step_by(2).collect()
}

/// 20 log-spaced values from `1e-4` to `1e2`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-4.0 + 6.0 * i as f64 / 19.0)).collect()
}

fn check_k_grid(k_grid: &[usize], limit: usize) -> Result<()> {
    if k_grid.is_empty() {
        return invalid("k grid is empty");
    }
    if let Some(&k) = k_grid.iter().find(|&&k| k == 0 || k > limit) {
        return invalid(format!("k = {k} outside 1..={limit}"));
    }
    Ok(())
}

/// Leave-one-out errors for every `k` in the grid from a precomputed table.
pub fn loo_cv_from_table(table: &NeighborTable, labels: &[u8], k_grid: &[usize]) -> Result<CvReport> {
    check_k_grid(k_grid, table.width())?;
    if table.rows() != labels.len() {
        return invalid("neighbour table and labels disagree in size");
    }
    let kmax = *k_grid.iter().max().expect("non-empty");
    let mut wrong = vec![0usize; kmax + 1];
    for (i, &yi) in labels.iter().enumerate() {
        let mut ones = 0;
        for (k, &j) in table.row(i)[..kmax].iter().enumerate() {
            ones += usize::from(labels[j as usize] == 1);
            if super::knn::majority(ones, k + 1) != yi {
                wrong[k + 1] += 1;
            }
        }
    }
    let n = labels.len() as f64;
    let errors = k_grid.iter().map(|&k| wrong[k] as f64 / n).collect();
    Ok(CvReport::select(
        TunedParameter::K,
        k_grid.iter().map(|&k| k as f64).collect(),
        errors,
    ))
}

pub fn loo_cv_knn(data: &DataSet, k_grid: &[usize], source: LabelSource) -> Result<CvReport> {
    let labels = data.labels(source)?;
    check_k_grid(k_grid, data.len().saturating_sub(1))?;
    let kmax = *k_grid.iter().max().expect("non-empty");
    let table = NeighborTable::build_loo(data.features(), data.dim(), kmax);
    loo_cv_from_table(&table, labels, k_grid)
}

/// Fold index of every record; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return invalid(format!("need at least 2 folds, got {folds}"));
    }
    if folds > labels.len() {
        return invalid(format!("{folds} folds exceed {} records", labels.len()));
    }
    let mut rng = rng::stream(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..2u8 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

fn check_lambda_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("lambda grid is empty");
    }
    if grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return invalid("lambda grid values must be positive");
    }
    Ok(())
}

/// Outcome of [`kfold_cv_svm_on_gram`].
#[derive(Debug, Clone)]
pub struct SvmCvOutcome {
    pub report: CvReport,
    /// Whether every fold fit met the solver tolerances.
    pub all_converged: bool,
}

/// k-fold CV of `lambda` on a precomputed Gram matrix of the records.
///
/// Every fit starts cold: a solution for a smaller box clamped into a larger one
/// leaves most coordinates interior, which slows the solver down rather than up.
pub fn kfold_cv_svm_on_gram(
    gram: &KernelMatrix,
    labels: &[u8],
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &SvmOptions,
) -> Result<SvmCvOutcome> {
    check_lambda_grid(lambda_grid)?;
    if gram.rows() != labels.len() {
        return invalid("Gram matrix and labels disagree in size");
    }
    let assignment = stratified_folds(labels, folds, seed)?;
    let y_all = signed(labels);
    let mut wrong = vec![0usize; lambda_grid.len()];
    let mut all_converged = true;
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let valid: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let y: Vec<f64> = train.iter().map(|&i| y_all[i]).collect();
        let block = gram.subset(&train);
        let mut rows = DenseRows(&block);
        for (g, &lambda) in lambda_grid.iter().enumerate() {
            let c = 1.0 / (2.0 * train.len() as f64 * lambda);
            let sol = solve_dual(&mut rows, &y, c, opts);
            all_converged &= sol.converged;
            let coef: Vec<(usize, f64)> = train
                .iter()
                .zip(&sol.alpha)
                .zip(&y)
                .filter(|((_, &a), _)| a > 0.0)
                .map(|((&i, &a), &yi)| (i, a * yi))
                .collect();
            for &v in &valid {
                let k = gram.row(v);
                let f: f64 = coef.iter().map(|&(i, c)| c * k[i]).sum();
                if u8::from(f >= 0.0) != labels[v] {
                    wrong[g] += 1;
                }
            }
        }
    }
    let n = labels.len() as f64;
    Ok(SvmCvOutcome {
        report: CvReport::select(
            TunedParameter::Lambda,
            lambda_grid.to_vec(),
            wrong.iter().map(|&w| w as f64 / n).collect(),
        ),
        all_converged,
    })
}

pub fn kfold_cv_svm(
    data: &DataSet,
    lambda_grid: &[f64],
    folds: usize,
    sigma: f64,
    seed: u64,
    source: LabelSource,
) -> Result<CvReport> {
    let labels = data.labels(source)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("sigma = {sigma} must be positive"));
    }
    check_lambda_grid(lambda_grid)?;
    stratified_folds(labels, folds, seed)?;
    let gram = KernelMatrix::gram(data.features(), data.dim(), sigma);
    Ok(kfold_cv_svm_on_gram(&gram, labels, lambda_grid, folds, seed, &SvmOptions::default())?.report)
}

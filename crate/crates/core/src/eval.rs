//! Monte Carlo risk estimation and replicated experiments.
//!
//! A replication draws one training sample and one test sample and reuses them
//! for every noise setting of the plan. The training labels of all settings are
//! corrupted from the same uniform draws, and so are the test labels. Settings
//! are therefore compared on paired data, which removes most of the sampling
//! noise from differences and ratios between settings.

use rayon::prelude::*;

use crate::classifiers::cv::{kfold_cv_svm_on_gram, loo_cv_from_table};
use crate::classifiers::svm::fit_svm_on_gram;
use crate::classifiers::{fit_lda, BayesRule, Classifier, FittedClassifier, KernelMatrix, NeighborTable, SvmOptions};
use crate::error::{invalid, Error, Result};
use crate::generators::{DataModel, DataSet, LabelSource};
use crate::noise::{corrupt_labels, noise_bounds, noisy_bayes_risk, NoiseBounds, NoiseSpec, BOUNDS_GRID};
use crate::numerics::QuadratureSpec;
use crate::plan::{ClassifierConfig, ExperimentKind, ExperimentPlan, KCoupling, KnnTuning, SvmTuning};
use crate::rng::{derive_seed, purpose};
use crate::theory::{coupled_k, knn_regret_ratio_limit, lda_limit_risk};

/// Share of replications a cell needs before it reports an estimate.
pub const MIN_SUCCESS_FRACTION: f64 = 0.9;
/// Checks fail only beyond this many standard errors.
pub const CHECK_SE_MULTIPLE: f64 = 3.0;
/// Absolute slack for the deterministic integration error in `R*` and `R~*`.
///
/// Far below one misclassified test point, so it only matters when every
/// replication agrees and the standard error is zero.
pub const NUMERIC_SLACK: f64 = 1e-9;
/// A regret ratio is unstable when its denominator is below this many standard errors.
pub const UNSTABLE_SE_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    TrueLabel,
    NoisyLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub risk_estimate: f64,
    pub standard_error: f64,
    pub n_test: usize,
    pub replications: usize,
    pub target: Target,
    pub seed: u64,
    pub classifier: String,
    pub noise: String,
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    /// Sample mean with `sqrt(v / m)` for the sample variance `v`; `None` for no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        let m = values.len();
        if m == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / m as f64;
        let se = if m > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se, count: m })
    }
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

impl RiskReport {
    /// Aggregates per-replication error rates, each measured on `n_test` points.
    ///
    /// A single replication carries the binomial standard error of its test set.
    pub fn from_replicates(
        values: &[f64],
        n_test: usize,
        target: Target,
        seed: u64,
        classifier: impl Into<String>,
        noise: impl Into<String>,
    ) -> Result<Self> {
        let Some(stats) = MeanSe::of(values) else {
            return invalid("no replicate risks to aggregate");
        };
        let standard_error = if values.len() == 1 {
            binomial_se(stats.mean, n_test)
        } else {
            stats.se
        };
        Ok(Self {
            risk_estimate: stats.mean,
            standard_error,
            n_test,
            replications: values.len(),
            target,
            seed,
            classifier: classifier.into(),
            noise: noise.into(),
        })
    }

    /// Excess over a Bayes risk known in closed form, so with the same standard error.
    pub fn excess(&self, bayes_risk: f64) -> ExcessReport {
        ExcessReport {
            excess: self.risk_estimate - bayes_risk,
            standard_error: self.standard_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessReport {
    pub excess: f64,
    pub standard_error: f64,
}

fn error_rate(pred: &[u8], labels: &[u8]) -> f64 {
    let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
    wrong as f64 / labels.len() as f64
}

/// Error rate of `classifier` on a fresh test sample of size `n_test`.
///
/// The sample depends only on `seed`, so calls that differ only in `target`
/// score the same points. Noisy test labels are drawn from `spec`.
pub fn estimate_risk(
    classifier: &dyn Classifier,
    model: &DataModel,
    spec: Option<&NoiseSpec>,
    n_test: usize,
    seed: u64,
    target: Target,
) -> Result<RiskReport> {
    if classifier.dim() != model.dim() {
        return invalid(format!(
            "classifier expects dimension {}, model has {}",
            classifier.dim(),
            model.dim()
        ));
    }
    if n_test == 0 {
        return invalid("n_test must be positive");
    }
    let test = model.sample(n_test, derive_seed(seed, &[purpose::TEST]))?;
    let noise = spec.map_or_else(|| "none".to_string(), NoiseSpec::describe);
    let labels = match target {
        Target::TrueLabel => test.true_labels().to_vec(),
        Target::NoisyLabel => {
            let Some(spec) = spec else {
                return invalid("a noisy-label target needs a noise specification");
            };
            let noisy = corrupt_labels(&test, spec, model, derive_seed(seed, &[purpose::TEST_NOISE]))?;
            noisy.observed_labels().expect("just corrupted").to_vec()
        }
    };
    let pred = classifier.predict_rows(test.features())?;
    let risk = error_rate(&pred, &labels);
    RiskReport::from_replicates(&[risk], n_test, target, seed, classifier.describe(), noise)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Holds,
    Violated,
    Skipped(String),
}

/// Outcome of an inequality or identity checked by simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    /// Signed slack; negative values count against the claim.
    pub margin: f64,
    pub standard_error: f64,
    pub status: CheckStatus,
}

impl CheckRecord {
    fn one_sided(margin: f64, standard_error: f64) -> Self {
        let status = if margin < -CHECK_SE_MULTIPLE * standard_error - NUMERIC_SLACK {
            CheckStatus::Violated
        } else {
            CheckStatus::Holds
        };
        Self {
            margin,
            standard_error,
            status,
        }
    }

    fn two_sided(margin: f64, standard_error: f64) -> Self {
        let status = if margin.abs() > CHECK_SE_MULTIPLE * standard_error + NUMERIC_SLACK {
            CheckStatus::Violated
        } else {
            CheckStatus::Holds
        };
        Self {
            margin,
            standard_error,
            status,
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Self {
            margin: f64::NAN,
            standard_error: f64::NAN,
            status: CheckStatus::Skipped(reason.into()),
        }
    }

    pub fn violated(&self) -> bool {
        self.status == CheckStatus::Violated
    }
}

/// Compares the true-label excess risk with the bound implied by the noisy-label one.
///
/// The margin is `bound - true excess`, with the two reports treated as
/// independent. For reports on the same test points the two estimates are
/// positively correlated, so this standard error errs on the large side.
pub fn check_theorem1(true_excess: &ExcessReport, noisy_excess: &ExcessReport, bounds: &NoiseBounds) -> CheckRecord {
    match bounds.inflation() {
        None => CheckRecord::skipped(format!(
            "noise bounds rho* = {}, a* = {} violate the hypotheses",
            bounds.rho_star, bounds.a_star
        )),
        Some(inflation) => {
            let margin = inflation * noisy_excess.excess - true_excess.excess;
            let se = (inflation.powi(2) * noisy_excess.standard_error.powi(2) + true_excess.standard_error.powi(2)).sqrt();
            CheckRecord::one_sided(margin, se)
        }
    }
}

/// Noisy-to-clean excess-risk ratio of one classifier family.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRatio {
    pub numerator: ExcessReport,
    pub denominator: ExcessReport,
    pub ratio: f64,
    /// First-order delta-method standard error, using the pairing of replications.
    pub standard_error: f64,
    pub unstable: bool,
}

/// Ratio of mean excess risks from paired replications.
///
/// With `a`, `b` the per-replication excess risks of the noisy- and
/// clean-trained rules, the ratio `r = mean(a) / mean(b)` has variance about
/// `(var a - 2 r cov(a, b) + r^2 var b) / (m mean(b)^2)` over `m` replications.
pub fn regret_ratio(noisy_risks: &[f64], clean_risks: &[f64], bayes_risk: f64) -> Result<RegretRatio> {
    let m = noisy_risks.len();
    if m != clean_risks.len() || m < 2 {
        return invalid("regret ratio needs at least two paired replications");
    }
    let a: Vec<f64> = noisy_risks.iter().map(|r| r - bayes_risk).collect();
    let b: Vec<f64> = clean_risks.iter().map(|r| r - bayes_risk).collect();
    let sa = MeanSe::of(&a).expect("non-empty");
    let sb = MeanSe::of(&b).expect("non-empty");
    let ratio = sa.mean / sb.mean;
    let mf = m as f64;
    let cov = a.iter().zip(&b).map(|(x, y)| (x - sa.mean) * (y - sb.mean)).sum::<f64>() / (mf - 1.0);
    let (var_a, var_b) = (sa.se.powi(2) * mf, sb.se.powi(2) * mf);
    let var_ratio = (var_a - 2.0 * ratio * cov + ratio * ratio * var_b) / (mf * sb.mean * sb.mean);
    Ok(RegretRatio {
        numerator: ExcessReport {
            excess: sa.mean,
            standard_error: sa.se,
        },
        denominator: ExcessReport {
            excess: sb.mean,
            standard_error: sb.se,
        },
        ratio,
        standard_error: var_ratio.max(0.0).sqrt(),
        unstable: !(sb.mean >= UNSTABLE_SE_MULTIPLE * sb.se),
    })
}

/// What one fit produced on its replication's test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Error rate against the true test labels.
    pub risk: f64,
    /// Error rate against the test labels corrupted by the same mechanism.
    pub noisy_risk: f64,
    /// Selected or fixed `k` or `lambda`.
    pub tuned: Option<f64>,
    pub converged: bool,
    /// Largest KKT violation and relative duality gap of an SVM fit.
    pub svm_diagnostics: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub n: usize,
    pub replication: usize,
    pub classifier: usize,
    pub noise: usize,
    /// Seed every stream of this replication is derived from.
    pub seed: u64,
    pub outcome: std::result::Result<FitOutcome, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Insufficient,
}

/// Aggregate of one (n, classifier, noise) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub classifier: usize,
    pub noise: usize,
    pub successes: usize,
    pub failures: usize,
    pub status: CellStatus,
    pub risk: Option<MeanSe>,
    pub noisy_risk: Option<MeanSe>,
    /// First failure message, if any replication failed.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCheck {
    pub n: usize,
    pub classifier: usize,
    pub noise: usize,
    pub record: CheckRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRatioReport {
    pub n: usize,
    pub classifier: usize,
    pub noise: usize,
    pub k_coupling: KCoupling,
    pub ratio: RegretRatio,
    /// Limiting kNN ratio for the noise profile, when it has one.
    pub limit: Option<f64>,
}

/// Everything a replicated run produced, plus the closed-form references.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub plan: ExperimentPlan,
    pub model: DataModel,
    pub bayes_risk: f64,
    /// Bayes risk against noisy labels, per noise setting.
    pub noisy_bayes_risk: Vec<f64>,
    pub bounds: Vec<std::result::Result<NoiseBounds, String>>,
    /// In order of n, replication, classifier and noise setting.
    pub records: Vec<ReplicationRecord>,
}

struct Context<'a> {
    plan: &'a ExperimentPlan,
    model: &'a DataModel,
    specs: Vec<NoiseSpec>,
    opts: SvmOptions,
}

/// Runs every (n, replication) of the plan, in parallel over replications.
///
/// Seeds are derived from `(seed, n, replication)` and results are collected in
/// order, so the table does not depend on the number of threads.
pub fn run_replicated(plan: &ExperimentPlan) -> Result<ExperimentTable> {
    plan.validate()?;
    let model = plan.model.build()?;
    let quad = QuadratureSpec::default();
    let bayes_risk = model.bayes_risk(&quad)?;
    let specs: Vec<NoiseSpec> = plan.noises.iter().map(|n| n.spec()).collect();
    let noisy_bayes = specs
        .iter()
        .map(|s| noisy_bayes_risk(s, &model, &quad))
        .collect::<Result<Vec<_>>>()?;
    let bounds = specs
        .iter()
        .map(|s| noise_bounds(s, &model, BOUNDS_GRID).map_err(|e| e.to_string()))
        .collect();
    let ctx = Context {
        plan,
        model: &model,
        specs,
        opts: SvmOptions::default(),
    };
    let jobs: Vec<(usize, usize)> = plan
        .experiment
        .n_grid
        .iter()
        .flat_map(|&n| (0..plan.experiment.replications).map(move |r| (n, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.experiment.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    log::info!(
        "{}: {} replications over n = {:?}",
        plan.experiment.id,
        plan.experiment.replications,
        plan.experiment.n_grid
    );
    let records: Vec<ReplicationRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, r)| run_one(&ctx, n, r))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    Ok(ExperimentTable {
        plan: plan.clone(),
        model,
        bayes_risk,
        noisy_bayes_risk: noisy_bayes,
        bounds,
        records,
    })
}

/// Runs the plan and reports the regret ratio of every noisy setting against the clean one.
pub fn regret_ratio_experiment(plan: &ExperimentPlan) -> Result<Vec<RegretRatioReport>> {
    if plan.experiment.kind != ExperimentKind::RegretRatio {
        return Err(Error::Config("plan is not a regret-ratio experiment".into()));
    }
    run_replicated(plan)?.regret_ratios()
}

/// Per-noise outcomes of one classifier on one replication.
type Outcomes = Vec<std::result::Result<FitOutcome, String>>;

struct Replication<'a> {
    ctx: &'a Context<'a>,
    n: usize,
    seed: u64,
    train: DataSet,
    test: DataSet,
    /// Training labels per noise setting.
    train_labels: Vec<Vec<u8>>,
    /// Test labels per noise setting.
    test_labels: Vec<Vec<u8>>,
}

fn run_one(ctx: &Context, n: usize, replication: usize) -> Vec<ReplicationRecord> {
    let seed = derive_seed(ctx.plan.experiment.seed, &[n as u64, replication as u64]);
    let n_noise = ctx.specs.len();
    let per_classifier: Vec<Outcomes> = match Replication::draw(ctx, n, seed) {
        Ok(rep) => ctx
            .plan
            .classifiers
            .iter()
            .map(|c| rep.fit(c).unwrap_or_else(|e| vec![Err(e.to_string()); n_noise]))
            .collect(),
        Err(e) => vec![vec![Err(e.to_string()); n_noise]; ctx.plan.classifiers.len()],
    };
    let mut out = Vec::with_capacity(per_classifier.len() * n_noise);
    for (c, outcomes) in per_classifier.into_iter().enumerate() {
        for (s, outcome) in outcomes.into_iter().enumerate() {
            out.push(ReplicationRecord {
                n,
                replication,
                classifier: c,
                noise: s,
                seed,
                outcome,
            });
        }
    }
    out
}

impl<'a> Replication<'a> {
    fn draw(ctx: &'a Context<'a>, n: usize, seed: u64) -> Result<Self> {
        let train = ctx.model.sample(n, derive_seed(seed, &[purpose::TRAIN]))?;
        let test = ctx.model.sample(ctx.plan.experiment.n_test, derive_seed(seed, &[purpose::TEST]))?;
        let train_noise = derive_seed(seed, &[purpose::TRAIN_NOISE]);
        let test_noise = derive_seed(seed, &[purpose::TEST_NOISE]);
        let mut train_labels = Vec::new();
        let mut test_labels = Vec::new();
        for spec in &ctx.specs {
            let noisy = corrupt_labels(&train, spec, ctx.model, train_noise)?;
            train_labels.push(noisy.observed_labels().expect("corrupted").to_vec());
            let noisy = corrupt_labels(&test, spec, ctx.model, test_noise)?;
            test_labels.push(noisy.observed_labels().expect("corrupted").to_vec());
        }
        Ok(Self {
            ctx,
            n,
            seed,
            train,
            test,
            train_labels,
            test_labels,
        })
    }

    fn score(&self, s: usize, pred: &[u8], tuned: Option<f64>, converged: bool, diag: Option<(f64, f64)>) -> FitOutcome {
        FitOutcome {
            risk: error_rate(pred, self.test.true_labels()),
            noisy_risk: error_rate(pred, &self.test_labels[s]),
            tuned,
            converged,
            svm_diagnostics: diag,
        }
    }

    fn fit(&self, config: &ClassifierConfig) -> Result<Outcomes> {
        match config {
            ClassifierConfig::Knn { tuning } => self.fit_knn(tuning),
            ClassifierConfig::Svm { tuning, .. } => {
                let sigma = config.svm_sigma(self.train.dim()).expect("svm config");
                self.fit_svm(tuning, sigma)
            }
            ClassifierConfig::Lda => Ok((0..self.ctx.specs.len())
                .map(|s| {
                    let data = self.train.with_observed(self.train_labels[s].clone())?;
                    let lda = fit_lda(&data, LabelSource::Observed)?;
                    let pred = FittedClassifier::from(lda).predict_rows(self.test.features())?;
                    Ok(self.score(s, &pred, None, true, None))
                })
                .map(|r: Result<FitOutcome>| r.map_err(|e| e.to_string()))
                .collect()),
            ClassifierConfig::Bayes => {
                let pred = BayesRule(self.ctx.model.clone()).predict_rows(self.test.features())?;
                Ok((0..self.ctx.specs.len()).map(|s| Ok(self.score(s, &pred, None, true, None))).collect())
            }
        }
    }

    fn fit_knn(&self, tuning: &KnnTuning) -> Result<Outcomes> {
        let (n, d) = (self.n, self.train.dim());
        let n_noise = self.ctx.specs.len();
        let ks: Vec<Result<usize>> = match tuning.fixed_k(n) {
            Some(k) if k > n => return invalid(format!("k = {k} exceeds the training size {n}")),
            Some(k) => vec![Ok(k); n_noise],
            None => {
                let grid = tuning.grid(n);
                let kmax = *grid.iter().max().ok_or_else(|| Error::InvalidArgument("empty k grid".into()))?;
                let loo = NeighborTable::build_loo(self.train.features(), d, kmax);
                let select = |labels: &[u8]| -> Result<usize> {
                    Ok(loo_cv_from_table(&loo, labels, &grid)?.selected_k().expect("k grid"))
                };
                match self.ctx.plan.experiment.k_coupling {
                    KCoupling::CvSeparate => self.train_labels.iter().map(|l| select(l)).collect(),
                    KCoupling::Eq5Coupled => {
                        let clean = select(self.train.true_labels())?;
                        self.ctx
                            .specs
                            .iter()
                            .enumerate()
                            .map(|(s, spec)| {
                                if self.ctx.plan.noises[s].is_none() {
                                    return Ok(clean);
                                }
                                let (g, g_dot) = spec.boundary_profile().ok_or_else(|| {
                                    Error::HypothesisViolated(format!("{} has no boundary profile", spec.describe()))
                                })?;
                                Ok(coupled_k(clean, g, g_dot, d)?.min(n))
                            })
                            .collect()
                    }
                }
            }
        };
        let width = ks.iter().filter_map(|k| k.as_ref().ok()).copied().max().unwrap_or(1);
        let table = NeighborTable::build(self.train.features(), self.test.features(), d, width);
        Ok(ks
            .into_iter()
            .enumerate()
            .map(|(s, k)| {
                let k = k.map_err(|e| e.to_string())?;
                let pred = table.predict_all(&self.train_labels[s], k).map_err(|e| e.to_string())?;
                Ok(self.score(s, &pred, Some(k as f64), true, None))
            })
            .collect())
    }

    fn fit_svm(&self, tuning: &SvmTuning, sigma: f64) -> Result<Outcomes> {
        let d = self.train.dim();
        let gram = KernelMatrix::gram(self.train.features(), d, sigma);
        let cross = KernelMatrix::cross(self.test.features(), self.train.features(), d, sigma);
        let folds_seed = derive_seed(self.seed, &[purpose::FOLDS]);
        Ok((0..self.ctx.specs.len())
            .map(|s| -> Result<FitOutcome> {
                let labels = &self.train_labels[s];
                let (lambda, cv_converged) = match tuning {
                    SvmTuning::Fixed { lambda } => (*lambda, true),
                    SvmTuning::Cv { folds, .. } => {
                        let out = kfold_cv_svm_on_gram(&gram, labels, &tuning.grid(), *folds, folds_seed, &self.ctx.opts)?;
                        (out.report.selected, out.all_converged)
                    }
                };
                let svm = fit_svm_on_gram(&gram, self.train.features(), d, labels, lambda, sigma, &self.ctx.opts)?;
                let pred: Vec<u8> = (0..cross.rows())
                    .map(|i| u8::from(svm.decision_from_kernel(cross.row(i)) >= 0.0))
                    .collect();
                let diag = Some((svm.kkt_violation(), svm.duality_gap()));
                Ok(self.score(s, &pred, Some(lambda), cv_converged && svm.converged(), diag))
            })
            .map(|r| r.map_err(|e| e.to_string()))
            .collect())
    }
}

impl ExperimentTable {
    pub fn classifier_label(&self, c: usize) -> String {
        self.plan.classifiers[c].label()
    }

    pub fn noise_label(&self, s: usize) -> String {
        self.plan.noises[s].label()
    }

    fn cell_records(&self, n: usize, c: usize, s: usize) -> impl Iterator<Item = &ReplicationRecord> {
        self.records
            .iter()
            .filter(move |r| r.n == n && r.classifier == c && r.noise == s)
    }

    fn cell_keys(&self) -> Vec<(usize, usize, usize)> {
        let mut keys = Vec::new();
        for &n in &self.plan.experiment.n_grid {
            for c in 0..self.plan.classifiers.len() {
                for s in 0..self.plan.noises.len() {
                    keys.push((n, c, s));
                }
            }
        }
        keys
    }

    /// Per-cell means; cells below the success threshold report no estimate.
    pub fn cells(&self) -> Vec<CellSummary> {
        let reps = self.plan.experiment.replications;
        self.cell_keys()
            .into_iter()
            .map(|(n, c, s)| {
                let mut risks = Vec::new();
                let mut noisy = Vec::new();
                let mut first_error = None;
                for r in self.cell_records(n, c, s) {
                    match &r.outcome {
                        Ok(o) => {
                            risks.push(o.risk);
                            noisy.push(o.noisy_risk);
                        }
                        Err(e) => {
                            first_error.get_or_insert_with(|| e.clone());
                        }
                    }
                }
                let successes = risks.len();
                let ok = successes as f64 >= MIN_SUCCESS_FRACTION * reps as f64;
                CellSummary {
                    n,
                    classifier: c,
                    noise: s,
                    successes,
                    failures: reps - successes,
                    status: if ok { CellStatus::Ok } else { CellStatus::Insufficient },
                    risk: ok.then(|| MeanSe::of(&risks)).flatten(),
                    noisy_risk: ok.then(|| MeanSe::of(&noisy)).flatten(),
                    first_error,
                }
            })
            .collect()
    }

    /// Aggregated risk report of a cell, if it has enough successful replications.
    pub fn risk_report(&self, n: usize, c: usize, s: usize, target: Target) -> Option<RiskReport> {
        let cell = self.cells().into_iter().find(|x| x.n == n && x.classifier == c && x.noise == s)?;
        let stats = match target {
            Target::TrueLabel => cell.risk?,
            Target::NoisyLabel => cell.noisy_risk?,
        };
        Some(RiskReport {
            risk_estimate: stats.mean,
            standard_error: stats.se,
            n_test: self.plan.experiment.n_test,
            replications: stats.count,
            target,
            seed: self.plan.experiment.seed,
            classifier: self.classifier_label(c),
            noise: self.noise_label(s),
        })
    }

    fn successes(&self, n: usize, c: usize, s: usize) -> Vec<(usize, FitOutcome)> {
        self.cell_records(n, c, s)
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| (r.replication, o.clone())))
            .collect()
    }

    fn enough(&self, count: usize) -> bool {
        count as f64 >= MIN_SUCCESS_FRACTION * self.plan.experiment.replications as f64 && count >= 2
    }

    /// Paired check of `R = (R~ - rho)/(1 - 2 rho)` on every homogeneous-noise cell.
    ///
    /// Per replication `R_r - (R~_r - rho)/(1 - 2 rho)` has mean zero because the
    /// test labels are corrupted independently of the fitted rule; the check
    /// is two-sided at three standard errors of the mean difference.
    pub fn identity_checks(&self) -> Vec<CellCheck> {
        let mut out = Vec::new();
        for (n, c, s) in self.cell_keys() {
            let Some(rho) = self.plan.noises[s].spec().homogeneous_rate() else { continue };
            let ok = self.successes(n, c, s);
            let record = if !self.enough(ok.len()) {
                CheckRecord::skipped("insufficient replications")
            } else {
                let diffs: Vec<f64> = ok
                    .iter()
                    .map(|(_, o)| o.risk - (o.noisy_risk - rho) / (1.0 - 2.0 * rho))
                    .collect();
                let stats = MeanSe::of(&diffs).expect("non-empty");
                CheckRecord::two_sided(stats.mean, stats.se)
            };
            out.push(CellCheck {
                n,
                classifier: c,
                noise: s,
                record,
            });
        }
        out
    }

    /// Paired check of the excess-risk transfer bound on every cell.
    ///
    /// Per replication the margin is `(R~_r - R~*) / {(1 - 2 rho*)(1 - a*)} - (R_r - R*)`;
    /// the cell is violated when the mean margin is below minus three standard errors.
    pub fn transfer_bound_checks(&self) -> Vec<CellCheck> {
        let mut out = Vec::new();
        for (n, c, s) in self.cell_keys() {
            let record = match &self.bounds[s] {
                Err(e) => CheckRecord::skipped(e.clone()),
                Ok(b) => match b.inflation() {
                    None => CheckRecord::skipped(format!("rho* = {}, a* = {} violate the hypotheses", b.rho_star, b.a_star)),
                    Some(inflation) => {
                        let ok = self.successes(n, c, s);
                        if !self.enough(ok.len()) {
                            CheckRecord::skipped("insufficient replications")
                        } else {
                            let margins: Vec<f64> = ok
                                .iter()
                                .map(|(_, o)| {
                                    inflation * (o.noisy_risk - self.noisy_bayes_risk[s]) - (o.risk - self.bayes_risk)
                                })
                                .collect();
                            let stats = MeanSe::of(&margins).expect("non-empty");
                            CheckRecord::one_sided(stats.mean, stats.se)
                        }
                    }
                },
            };
            out.push(CellCheck {
                n,
                classifier: c,
                noise: s,
                record,
            });
        }
        out
    }

    /// Cells whose mean risk falls more than three standard errors below the Bayes risk.
    pub fn excess_risk_violations(&self) -> Vec<CellSummary> {
        self.cells()
            .into_iter()
            .filter(|cell| {
                cell.risk
                    .is_some_and(|r| r.mean - self.bayes_risk < -CHECK_SE_MULTIPLE * r.se)
            })
            .collect()
    }

    /// Limiting LDA risk under the homogeneous noise of setting `s`, for Gaussian pairs.
    ///
    /// `None` for the clean setting, where the limit is the Bayes risk.
    pub fn lda_limit(&self, s: usize) -> Option<f64> {
        let DataModel::GaussianPair(m) = &self.model else { return None };
        if self.plan.noises[s].is_none() {
            return None;
        }
        let rho = self.plan.noises[s].spec().homogeneous_rate()?;
        lda_limit_risk(m.pi1(), m.delta(), rho).ok()
    }

    /// Ratio of every noisy setting to the clean setting, per classifier and n.
    pub fn regret_ratios(&self) -> Result<Vec<RegretRatioReport>> {
        let Some(clean) = self.plan.noises.iter().position(|x| x.is_none()) else {
            return Err(Error::Config("regret ratios need a `none` noise setting".into()));
        };
        let d = self.model.dim();
        let mut out = Vec::new();
        for &n in &self.plan.experiment.n_grid {
            for (c, config) in self.plan.classifiers.iter().enumerate() {
                if !matches!(config, ClassifierConfig::Knn { .. } | ClassifierConfig::Svm { .. }) {
                    continue;
                }
                let base: std::collections::BTreeMap<usize, f64> =
                    self.successes(n, c, clean).into_iter().map(|(r, o)| (r, o.risk)).collect();
                for s in (0..self.plan.noises.len()).filter(|&s| s != clean) {
                    let (mut noisy, mut paired) = (Vec::new(), Vec::new());
                    for (r, o) in self.successes(n, c, s) {
                        if let Some(&b) = base.get(&r) {
                            noisy.push(o.risk);
                            paired.push(b);
                        }
                    }
                    if !self.enough(noisy.len()) {
                        continue;
                    }
                    let ratio = regret_ratio(&noisy, &paired, self.bayes_risk)?;
                    let limit = match config {
                        ClassifierConfig::Knn { .. } => self.plan.noises[s]
                            .spec()
                            .boundary_profile()
                            .and_then(|(g, g_dot)| knn_regret_ratio_limit(g, g_dot, d).ok()),
                        _ => None,
                    };
                    out.push(RegretRatioReport {
                        n,
                        classifier: c,
                        noise: s,
                        k_coupling: self.plan.experiment.k_coupling,
                        ratio,
                        limit,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Every SVM fit that claims convergence, with its KKT violation and duality gap.
    pub fn converged_svm_diagnostics(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok())
            .filter(|o| o.converged)
            .filter_map(|o| o.svm_diagnostics)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit_knn, ConstantClassifier};
    use crate::generators::GaussianPairModel;
    use crate::plan::{ModelConfig, NoiseConfig, RunSettings};

    fn model1() -> DataModel {
        GaussianPairModel::model1(2, 0.5).unwrap().into()
    }

    #[test]
    fn constant_rule_errs_on_the_other_class() {
        let model: DataModel = GaussianPairModel::model1(2, 0.3).unwrap().into();
        let one = ConstantClassifier { d: 2, label: 1 };
        let r = estimate_risk(&one, &model, None, 20_000, 1, Target::TrueLabel).unwrap();
        assert!((r.risk_estimate - 0.7).abs() <= 3.0 * r.standard_error);
        assert_eq!(r.classifier, "constant(1)");
        assert!(estimate_risk(&one, &model, None, 10, 1, Target::NoisyLabel).is_err());
        let wrong_dim = ConstantClassifier { d: 3, label: 1 };
        assert!(estimate_risk(&wrong_dim, &model, None, 10, 1, Target::TrueLabel).is_err());
    }

    #[test]
    fn bayes_rule_attains_bayes_risk() {
        let bayes = BayesRule(model1());
        let r = estimate_risk(&bayes, &model1(), None, 1_000_000, 2, Target::TrueLabel).unwrap();
        assert!((r.risk_estimate - 0.0668).abs() <= 3.0 * r.standard_error, "{r:?}");
    }

    #[test]
    fn noisy_target_shifts_risk_linearly() {
        let model = model1();
        let train = model.sample(300, 3).unwrap();
        let knn = FittedClassifier::from(fit_knn(&train, 15, LabelSource::True).unwrap());
        let spec = NoiseSpec::Homogeneous { rho: 0.2 };
        let clean = estimate_risk(&knn, &model, Some(&spec), 200_000, 4, Target::TrueLabel).unwrap();
        let noisy = estimate_risk(&knn, &model, Some(&spec), 200_000, 4, Target::NoisyLabel).unwrap();
        let expected = 0.2 + 0.6 * clean.risk_estimate;
        let se = (noisy.standard_error.powi(2) + (0.6 * clean.standard_error).powi(2)).sqrt();
        assert!((noisy.risk_estimate - expected).abs() <= 3.0 * se);
    }

    #[test]
    fn replicate_aggregation() {
        let r = RiskReport::from_replicates(&[0.1, 0.2, 0.3], 100, Target::TrueLabel, 0, "c", "none").unwrap();
        assert!((r.risk_estimate - 0.2).abs() < 1e-15);
        assert!((r.standard_error - (0.01f64 / 3.0).sqrt()).abs() < 1e-15);
        let one = RiskReport::from_replicates(&[0.2], 100, Target::TrueLabel, 0, "c", "none").unwrap();
        assert!((one.standard_error - 0.04).abs() < 1e-15);
        assert!(RiskReport::from_replicates(&[], 100, Target::TrueLabel, 0, "c", "none").is_err());
    }

    #[test]
    fn regret_ratio_delta_method() {
        // identical noisy and clean risks give ratio one with zero variance
        let risks = [0.08, 0.09, 0.07, 0.1];
        let r = regret_ratio(&risks, &risks, 0.05).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert!(r.standard_error < 1e-9);
        // a scaled copy: a = 2 b exactly, so the ratio is 2 with no uncertainty
        let clean = [0.1, 0.102, 0.098, 0.101];
        let noisy: Vec<f64> = clean.iter().map(|c| 0.05 + 2.0 * (c - 0.05)).collect();
        let r = regret_ratio(&noisy, &clean, 0.05).unwrap();
        assert!((r.ratio - 2.0).abs() < 1e-12);
        assert!(r.standard_error < 1e-9);
        assert!(!r.unstable);
        // independent noise: compare against a direct evaluation of the formula
        let a = [0.1, 0.14, 0.12, 0.09, 0.15];
        let b = [0.07, 0.08, 0.09, 0.06, 0.1];
        let r = regret_ratio(&a, &b, 0.05).unwrap();
        let ea: Vec<f64> = a.iter().map(|x| x - 0.05).collect();
        let eb: Vec<f64> = b.iter().map(|x| x - 0.05).collect();
        let (ma, mb) = (ea.iter().sum::<f64>() / 5.0, eb.iter().sum::<f64>() / 5.0);
        let va = ea.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 4.0;
        let vb = eb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / 4.0;
        let cab = ea.iter().zip(&eb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 4.0;
        let q = ma / mb;
        let se = ((va / (mb * mb) - 2.0 * q * cab / (mb * mb) + q * q * vb / (mb * mb)) / 5.0).sqrt();
        assert!((r.ratio - q).abs() < 1e-12);
        assert!((r.standard_error - se).abs() < 1e-12);
        // a denominator indistinguishable from zero is flagged
        let r = regret_ratio(&a, &[0.04, 0.06, 0.05, 0.07, 0.03], 0.05).unwrap();
        assert!(r.unstable);
    }

    #[test]
    fn check_theorem1_with_reports() {
        let bounds = NoiseBounds {
            rho_star: 0.2,
            a_star: 0.0,
            method: crate::noise::BoundsMethod::Analytic,
        };
        let t = ExcessReport {
            excess: 0.01,
            standard_error: 0.001,
        };
        let noisy = ExcessReport {
            excess: 0.006,
            standard_error: 0.001,
        };
        let rec = check_theorem1(&t, &noisy, &bounds);
        assert!((rec.margin - 0.0).abs() < 1e-15);
        assert_eq!(rec.status, CheckStatus::Holds);
        let low = ExcessReport {
            excess: 0.0,
            standard_error: 0.0005,
        };
        assert!(check_theorem1(&t, &low, &bounds).violated());
        let bad = NoiseBounds { rho_star: 0.5, ..bounds };
        assert!(matches!(check_theorem1(&t, &noisy, &bad).status, CheckStatus::Skipped(_)));
    }

    fn small_plan(threads: usize) -> ExperimentPlan {
        ExperimentPlan {
            experiment: RunSettings {
                id: "t".into(),
                seed: 11,
                replications: 6,
                n_grid: vec![40, 80],
                n_test: 200,
                threads,
                ..RunSettings::default()
            },
            model: ModelConfig::Model1 { d: 2, pi1: 0.5 },
            noises: vec![NoiseConfig::None, NoiseConfig::Homogeneous { rho: 0.2 }],
            classifiers: vec![
                ClassifierConfig::Knn { tuning: KnnTuning::Cv { grid: None } },
                ClassifierConfig::Svm {
                    tuning: SvmTuning::Cv {
                        grid: Some(vec![0.01, 0.1, 1.0]),
                        folds: 5,
                    },
                    sigma2: None,
                },
                ClassifierConfig::Lda,
                ClassifierConfig::Bayes,
            ],
        }
    }

    #[test]
    fn replicated_runs_ignore_thread_count() {
        let a = run_replicated(&small_plan(1)).unwrap();
        let b = run_replicated(&small_plan(3)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 2 * 6 * 4 * 2);
        assert!(a.records.iter().all(|r| r.outcome.is_ok()));
    }

    #[test]
    fn paired_settings_share_samples() {
        let t = run_replicated(&small_plan(1)).unwrap();
        // the Bayes rule ignores training labels, so both settings score it identically
        for r in t.records.iter().filter(|r| r.classifier == 3) {
            let o = r.outcome.as_ref().unwrap();
            let twin = t
                .records
                .iter()
                .find(|q| q.classifier == 3 && q.n == r.n && q.replication == r.replication && q.noise != r.noise)
                .unwrap();
            assert_eq!(o.risk, twin.outcome.as_ref().unwrap().risk);
        }
        let cells = t.cells();
        assert_eq!(cells.len(), 2 * 4 * 2);
        assert!(cells.iter().all(|c| c.status == CellStatus::Ok));
        assert!(t.identity_checks().iter().all(|c| !c.record.violated()));
        assert!(t.transfer_bound_checks().iter().all(|c| !c.record.violated()));
        assert!(t.converged_svm_diagnostics().iter().all(|&(k, g)| k <= 1e-6 && g <= 1e-5));
        let ratios = t.regret_ratios().unwrap();
        assert_eq!(ratios.len(), 2 * 2);
        let knn_limit = knn_regret_ratio_limit(0.2, 0.0, 2).unwrap();
        for r in &ratios {
            let expected = (r.classifier == 0).then_some(knn_limit);
            assert_eq!(r.limit, expected);
        }
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        // n = 5 leaves LDA in d = 2 with a single class now and then
        let mut plan = small_plan(1);
        plan.experiment.n_grid = vec![4];
        plan.experiment.replications = 40;
        plan.classifiers = vec![ClassifierConfig::Lda];
        plan.noises = vec![NoiseConfig::Homogeneous { rho: 0.3 }];
        let t = run_replicated(&plan).unwrap();
        let cell = &t.cells()[0];
        assert!(cell.failures > 0);
        assert_eq!(cell.successes + cell.failures, 40);
        assert_eq!(cell.status, CellStatus::Insufficient);
        assert!(cell.risk.is_none());
        assert!(cell.first_error.is_some());
    }

    #[test]
    fn bayes_family_is_flat_at_bayes_risk() {
        let mut plan = small_plan(1);
        plan.experiment.n_test = 5000;
        plan.experiment.replications = 20;
        plan.classifiers = vec![ClassifierConfig::Bayes];
        plan.noises = vec![NoiseConfig::None];
        let t = run_replicated(&plan).unwrap();
        for cell in t.cells() {
            let r = cell.risk.unwrap();
            assert!((r.mean - t.bayes_risk).abs() <= 3.0 * r.se);
        }
        assert!(t.excess_risk_violations().is_empty());
    }
}

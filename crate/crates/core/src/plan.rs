//! Experiment plans: what to simulate, how often and with which seeds.
//!
//! Plans are read from and written to TOML. Every field has a default and
//! unknown keys are rejected, so a typo fails loudly instead of being ignored.

use serde::{Deserialize, Serialize};

use crate::classifiers::{default_k_grid, default_lambda_grid, default_sigma};
use crate::error::{Error, Result};
use crate::generators::{DataModel, GaussianPairModel, QuadraticUniformModel};
use crate::noise::NoiseSpec;

/// Replication count used by the presets at desk scale.
pub const PRESET_REPLICATIONS: usize = 200;
/// Replication count restored by [`ExperimentPlan::full_scale`].
pub const FULL_REPLICATIONS: usize = 1000;

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 7] = [
    "example1",
    "figure1",
    "figure2-model1",
    "figure2-model2",
    "figure3",
    "figure4-knn",
    "figure4-svm",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub experiment: RunSettings,
    pub model: ModelConfig,
    #[serde(rename = "noise")]
    pub noises: Vec<NoiseConfig>,
    #[serde(rename = "classifier")]
    pub classifiers: Vec<ClassifierConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub id: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub replications: usize,
    pub n_grid: Vec<usize>,
    pub n_test: usize,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub output_dir: String,
    /// How the noisy-data kNN picks `k` when tuned by cross-validation.
    pub k_coupling: KCoupling,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            id: "experiment".into(),
            kind: ExperimentKind::Risk,
            seed: 2019,
            replications: PRESET_REPLICATIONS,
            n_grid: vec![100, 200, 500, 1000, 2000],
            n_test: 1000,
            threads: 0,
            output_dir: "results".into(),
            k_coupling: KCoupling::CvSeparate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Risk curves per classifier and noise setting.
    #[default]
    Risk,
    /// Risk curves plus the noisy-to-clean excess-risk ratio for every noisy setting.
    RegretRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KCoupling {
    /// Cross-validate `k` separately on clean and on noisy labels.
    #[default]
    CvSeparate,
    /// Cross-validate `k` on clean labels and rescale it for the noise profile.
    Eq5Coupled,
}

impl KCoupling {
    pub fn label(self) -> &'static str {
        match self {
            KCoupling::CvSeparate => "cv-separate",
            KCoupling::Eq5Coupled => "eq5-coupled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Gaussian classes at `(+-3/2, 0, ...)` with identity covariance.
    Model1 { d: usize, pi1: f64 },
    /// Uniform features with a quadratic regression function.
    Model2 { d: usize },
    /// Gaussian classes at `(+-1, 0)` with prior 0.1 on class 1.
    Example1,
    GaussianPair {
        pi1: f64,
        mu0: Vec<f64>,
        mu1: Vec<f64>,
        /// Covariance rows.
        sigma: Vec<Vec<f64>>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Model1 { d: 2, pi1: 0.5 }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<DataModel> {
        Ok(match self {
            ModelConfig::Model1 { d, pi1 } => GaussianPairModel::model1(*d, *pi1)?.into(),
            ModelConfig::Model2 { d } => QuadraticUniformModel::new(*d)?.into(),
            ModelConfig::Example1 => GaussianPairModel::example1().into(),
            ModelConfig::GaussianPair { pi1, mu0, mu1, sigma } => {
                let d = mu0.len();
                if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("sigma must be a {d} x {d} matrix")));
                }
                let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
                let sigma = nalgebra::DMatrix::from_row_slice(d, d, &flat);
                GaussianPairModel::new(*pi1, mu0.clone(), mu1.clone(), sigma)?.into()
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            ModelConfig::Model1 { d, pi1 } => format!("model1(d={d},pi1={pi1})"),
            ModelConfig::Model2 { d } => format!("model2(d={d})"),
            ModelConfig::Example1 => "example1".into(),
            ModelConfig::GaussianPair { pi1, mu0, .. } => format!("gaussian-pair(d={},pi1={pi1})", mu0.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    None,
    Homogeneous { rho: f64 },
    ClassDependent { rho0: f64, rho1: f64 },
    BoundaryConsistent { g0: f64, h0: f64 },
}

impl NoiseConfig {
    pub fn spec(&self) -> NoiseSpec {
        match *self {
            NoiseConfig::None => NoiseSpec::none(),
            NoiseConfig::Homogeneous { rho } => NoiseSpec::Homogeneous { rho },
            NoiseConfig::ClassDependent { rho0, rho1 } => NoiseSpec::ClassDependent { rho0, rho1 },
            NoiseConfig::BoundaryConsistent { g0, h0 } => NoiseSpec::BoundaryConsistent { g0, h0 },
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseConfig::None)
    }

    pub fn label(&self) -> String {
        match self {
            NoiseConfig::None => "none".into(),
            other => other.spec().describe(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierConfig {
    Knn {
        #[serde(default)]
        tuning: KnnTuning,
    },
    Svm {
        #[serde(default)]
        tuning: SvmTuning,
        /// Kernel scale `sigma^2`; defaults to `1/d`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma2: Option<f64>,
    },
    Lda,
    /// The model's own Bayes rule, which ignores the training data.
    Bayes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KnnTuning {
    Fixed {
        k: usize,
    },
    /// `k = max(1, floor(coef * n^exponent))`.
    PowerRule {
        coef: f64,
        exponent: f64,
    },
    /// Leave-one-out over `grid`, or over the default odd grid.
    Cv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<usize>>,
    },
}

impl Default for KnnTuning {
    fn default() -> Self {
        KnnTuning::Cv { grid: None }
    }
}

impl KnnTuning {
    /// The neighbour count for training size `n`, if it does not depend on the data.
    pub fn fixed_k(&self, n: usize) -> Option<usize> {
        match *self {
            KnnTuning::Fixed { k } => Some(k),
            KnnTuning::PowerRule { coef, exponent } => Some(((coef * (n as f64).powf(exponent)).floor() as usize).max(1)),
            KnnTuning::Cv { .. } => None,
        }
    }

    /// Candidate grid for training size `n`.
    pub fn grid(&self, n: usize) -> Vec<usize> {
        match self {
            KnnTuning::Cv { grid: Some(g) } => g.clone(),
            KnnTuning::Cv { grid: None } => default_k_grid(n),
            other => other.fixed_k(n).into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SvmTuning {
    Fixed {
        lambda: f64,
    },
    /// Stratified k-fold CV over `grid`, or over the default log grid.
    Cv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<Vec<f64>>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

fn default_folds() -> usize {
    10
}

impl Default for SvmTuning {
    fn default() -> Self {
        SvmTuning::Cv {
            grid: None,
            folds: default_folds(),
        }
    }
}

impl SvmTuning {
    pub fn grid(&self) -> Vec<f64> {
        match self {
            SvmTuning::Fixed { lambda } => vec![*lambda],
            SvmTuning::Cv { grid: Some(g), .. } => g.clone(),
            SvmTuning::Cv { grid: None, .. } => default_lambda_grid(),
        }
    }
}

impl ClassifierConfig {
    pub fn label(&self) -> String {
        match self {
            ClassifierConfig::Knn { tuning } => match tuning {
                KnnTuning::Fixed { k } => format!("knn(k={k})"),
                KnnTuning::PowerRule { coef, exponent } => format!("knn(k={coef}*n^{exponent})"),
                KnnTuning::Cv { .. } => "knn-cv".into(),
            },
            ClassifierConfig::Svm { tuning, .. } => match tuning {
                SvmTuning::Fixed { lambda } => format!("svm(lambda={lambda})"),
                SvmTuning::Cv { .. } => "svm-cv".into(),
            },
            ClassifierConfig::Lda => "lda".into(),
            ClassifierConfig::Bayes => "bayes".into(),
        }
    }

    /// Kernel parameter `sigma` (the kernel is `exp(-sigma^2 ||x - x'||^2)`).
    pub fn svm_sigma(&self, d: usize) -> Option<f64> {
        match self {
            ClassifierConfig::Svm { sigma2, .. } => Some(sigma2.map_or_else(|| default_sigma(d), f64::sqrt)),
            _ => None,
        }
    }
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            experiment: RunSettings::default(),
            model: ModelConfig::default(),
            noises: vec![NoiseConfig::None],
            classifiers: vec![ClassifierConfig::Knn { tuning: KnnTuning::default() }],
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let run = &self.experiment;
        if run.id.is_empty() || run.id.contains([',', '"', '\n']) {
            return Err(config_err("experiment.id must be non-empty without commas, quotes or newlines"));
        }
        if run.replications == 0 {
            return Err(config_err("experiment.replications must be positive"));
        }
        if run.n_test == 0 {
            return Err(config_err("experiment.n_test must be positive"));
        }
        if run.n_grid.is_empty() || run.n_grid.iter().any(|&n| n < 2) {
            return Err(config_err("experiment.n_grid must be non-empty with every n >= 2"));
        }
        let model = self.model.build().map_err(|e| config_err(format!("model: {e}")))?;
        if self.noises.is_empty() {
            return Err(config_err("at least one [[noise]] entry is required"));
        }
        for (i, noise) in self.noises.iter().enumerate() {
            noise.spec().validate().map_err(|e| config_err(format!("noise[{i}]: {e}")))?;
            if self.noises[..i].contains(noise) {
                return Err(config_err(format!("noise[{i}] repeats an earlier entry")));
            }
        }
        if self.classifiers.is_empty() {
            return Err(config_err("at least one [[classifier]] entry is required"));
        }
        for (i, c) in self.classifiers.iter().enumerate() {
            self.validate_classifier(c, model.dim()).map_err(|e| config_err(format!("classifier[{i}]: {e}")))?;
            if self.classifiers[..i].iter().any(|o| o.label() == c.label()) {
                return Err(config_err(format!("classifier[{i}] repeats an earlier entry")));
            }
        }
        if run.kind == ExperimentKind::RegretRatio {
            if !self.noises.iter().any(NoiseConfig::is_none) {
                return Err(config_err("a regret-ratio experiment needs a `none` noise entry as baseline"));
            }
            if self.classifiers.iter().any(|c| !matches!(c, ClassifierConfig::Knn { .. } | ClassifierConfig::Svm { .. })) {
                return Err(config_err("regret ratios are defined for knn and svm classifiers only"));
            }
        }
        Ok(())
    }

    fn validate_classifier(&self, c: &ClassifierConfig, d: usize) -> std::result::Result<(), String> {
        let min_n = *self.experiment.n_grid.iter().min().expect("non-empty grid");
        match c {
            ClassifierConfig::Knn { tuning } => match tuning {
                KnnTuning::Fixed { k } if *k == 0 || *k > min_n => {
                    Err(format!("k = {k} must lie in 1..={min_n} for every n in the grid"))
                }
                KnnTuning::PowerRule { coef, exponent } if !(*coef > 0.0 && exponent.is_finite() && *exponent < 1.0) => {
                    Err("power rule needs coef > 0 and exponent < 1".into())
                }
                KnnTuning::Cv { grid: Some(g) } if g.is_empty() || g.iter().any(|&k| k == 0 || k >= min_n) => {
                    Err(format!("k grid must be non-empty with 1 <= k < {min_n}"))
                }
                _ => Ok(()),
            },
            ClassifierConfig::Svm { tuning, sigma2 } => {
                if let Some(s) = sigma2 {
                    if !(*s > 0.0 && s.is_finite()) {
                        return Err(format!("sigma2 = {s} must be positive"));
                    }
                }
                if tuning.grid().is_empty() || tuning.grid().iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return Err("lambda values must be positive and finite".into());
                }
                if let SvmTuning::Cv { folds, .. } = tuning {
                    if *folds < 2 || *folds > min_n {
                        return Err(format!("folds = {folds} must lie in 2..={min_n}"));
                    }
                }
                Ok(())
            }
            ClassifierConfig::Lda if min_n < d + 2 => Err(format!("LDA needs n >= d + 2 = {}", d + 2)),
            _ => Ok(()),
        }
    }

    /// Restores the full replication count.
    pub fn full_scale(&mut self) {
        self.experiment.replications = FULL_REPLICATIONS;
    }
}

fn plan(id: &str, kind: ExperimentKind, model: ModelConfig, noises: Vec<NoiseConfig>, classifiers: Vec<ClassifierConfig>, n_grid: Vec<usize>) -> ExperimentPlan {
    ExperimentPlan {
        experiment: RunSettings {
            id: id.into(),
            kind,
            n_grid,
            ..RunSettings::default()
        },
        model,
        noises,
        classifiers,
    }
}

fn homogeneous(rhos: &[f64]) -> Vec<NoiseConfig> {
    std::iter::once(NoiseConfig::None)
        .chain(rhos.iter().map(|&rho| NoiseConfig::Homogeneous { rho }))
        .collect()
}

/// The five boundary-consistent settings `g0 = 0.1`, `h0 in {0, -1, 1, 2, 3}`.
pub fn regret_settings() -> Vec<NoiseConfig> {
    [0.0, -1.0, 1.0, 2.0, 3.0]
        .iter()
        .map(|&h0| NoiseConfig::BoundaryConsistent { g0: 0.1, h0 })
        .collect()
}

/// Plans behind a named preset. The figure 4 presets cover both models.
pub fn preset(name: &str) -> Result<Vec<ExperimentPlan>> {
    let knn_cv = ClassifierConfig::Knn { tuning: KnnTuning::default() };
    let svm_cv = ClassifierConfig::Svm {
        tuning: SvmTuning::default(),
        sigma2: None,
    };
    let figure2_grid = vec![50, 100, 200, 500, 1000, 2000];
    let figure4_grid = vec![100, 200, 500, 1000, 2000];
    let regret = |id: &str, model: ModelConfig, c: &ClassifierConfig| {
        let noises = std::iter::once(NoiseConfig::None).chain(regret_settings()).collect();
        plan(id, ExperimentKind::RegretRatio, model, noises, vec![c.clone()], figure4_grid.clone())
    };
    Ok(match name {
        "example1" | "figure1" => vec![plan(
            "example1",
            ExperimentKind::Risk,
            ModelConfig::Example1,
            homogeneous(&[0.3]),
            vec![
                ClassifierConfig::Knn {
                    tuning: KnnTuning::PowerRule {
                        coef: 0.5,
                        exponent: 2.0 / 3.0,
                    },
                },
                ClassifierConfig::Svm {
                    tuning: SvmTuning::Fixed { lambda: 1.0 },
                    sigma2: None,
                },
                ClassifierConfig::Lda,
            ],
            vec![100, 200, 500, 1000, 2000, 4000],
        )],
        "figure2-model1" => vec![plan(
            "figure2-model1",
            ExperimentKind::Risk,
            ModelConfig::Model1 { d: 2, pi1: 0.5 },
            homogeneous(&[0.1, 0.3]),
            vec![knn_cv, svm_cv, ClassifierConfig::Lda],
            figure2_grid,
        )],
        "figure2-model2" => vec![plan(
            "figure2-model2",
            ExperimentKind::Risk,
            ModelConfig::Model2 { d: 2 },
            homogeneous(&[0.1, 0.3]),
            vec![knn_cv, svm_cv, ClassifierConfig::Lda],
            figure2_grid,
        )],
        "figure3" => vec![plan(
            "figure3",
            ExperimentKind::Risk,
            ModelConfig::Model1 { d: 5, pi1: 0.9 },
            homogeneous(&[0.1, 0.2, 0.3, 0.4]),
            vec![ClassifierConfig::Lda],
            vec![100, 200, 500, 1000, 2000],
        )],
        "figure4-knn" => vec![
            regret("figure4-knn-model1", ModelConfig::Model1 { d: 5, pi1: 0.5 }, &knn_cv),
            regret("figure4-knn-model2", ModelConfig::Model2 { d: 5 }, &knn_cv),
        ],
        "figure4-svm" => vec![
            regret("figure4-svm-model1", ModelConfig::Model1 { d: 5, pi1: 0.5 }, &svm_cv),
            regret("figure4-svm-model2", ModelConfig::Model2 { d: 5 }, &svm_cv),
        ],
        other => {
            return Err(config_err(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}

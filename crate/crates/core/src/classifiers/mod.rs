//! kNN, SVM and LDA classifiers and their tuning protocols.
//!
//! Every rule resolves an exact tie (vote 1/2, decision value 0, score 0) to class 1.

pub mod cv;
pub mod knn;
pub mod lda;
pub mod svm;

pub use cv::{default_k_grid, default_lambda_grid, kfold_cv_svm, loo_cv_knn, CvReport, TieRule, TunedParameter};
pub use knn::{fit_knn, KnnClassifier, NeighborTable};
pub use lda::{fit_lda, LdaClassifier};
pub use svm::{default_sigma, fit_svm, fit_svm_with, KernelMatrix, SvmClassifier, SvmOptions};

use crate::error::{invalid, Result};
use crate::generators::DataModel;
use crate::noise::NoiseSpec;

/// A binary decision rule on `R^d`.
pub trait Classifier: Send + Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> u8;

    fn describe(&self) -> String;

    /// Predictions for row-major `features`.
    fn predict_rows(&self, features: &[f64]) -> Result<Vec<u8>> {
        let d = self.dim();
        if features.len() % d != 0 {
            return invalid(format!("feature buffer of length {} is not a multiple of d = {d}", features.len()));
        }
        Ok(features.chunks_exact(d).map(|x| self.predict(x)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Knn,
    Svm,
    Lda,
}

#[derive(Debug, Clone)]
pub enum FittedClassifier {
    Knn(KnnClassifier),
    Svm(SvmClassifier),
    Lda(LdaClassifier),
}

impl FittedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            FittedClassifier::Knn(_) => ClassifierKind::Knn,
            FittedClassifier::Svm(_) => ClassifierKind::Svm,
            FittedClassifier::Lda(_) => ClassifierKind::Lda,
        }
    }
}

impl From<KnnClassifier> for FittedClassifier {
    fn from(c: KnnClassifier) -> Self {
        FittedClassifier::Knn(c)
    }
}
impl From<SvmClassifier> for FittedClassifier {
    fn from(c: SvmClassifier) -> Self {
        FittedClassifier::Svm(c)
    }
}
impl From<LdaClassifier> for FittedClassifier {
    fn from(c: LdaClassifier) -> Self {
        FittedClassifier::Lda(c)
    }
}

impl Classifier for FittedClassifier {
    fn dim(&self) -> usize {
        match self {
            FittedClassifier::Knn(c) => c.dim(),
            FittedClassifier::Svm(c) => c.dim(),
            FittedClassifier::Lda(c) => c.dim(),
        }
    }
    fn predict(&self, x: &[f64]) -> u8 {
        match self {
            FittedClassifier::Knn(c) => c.predict(x),
            FittedClassifier::Svm(c) => c.predict(x),
            FittedClassifier::Lda(c) => c.predict(x),
        }
    }
    fn describe(&self) -> String {
        match self {
            FittedClassifier::Knn(c) => format!("knn(k={})", c.k()),
            FittedClassifier::Svm(c) => format!("svm(lambda={})", c.lambda()),
            FittedClassifier::Lda(_) => "lda".into(),
        }
    }
}

/// The Bayes rule of a data model.
#[derive(Debug, Clone)]
pub struct BayesRule(pub DataModel);

impl Classifier for BayesRule {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.0.eta_unchecked(x) >= 0.5)
    }
    fn describe(&self) -> String {
        "bayes".into()
    }
}

/// The Bayes rule of the noisy-label problem, `1{eta~ >= 1/2}`.
#[derive(Debug, Clone)]
pub struct CorruptedBayesRule {
    pub model: DataModel,
    pub noise: NoiseSpec,
}

impl Classifier for CorruptedBayesRule {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.noise.eta_tilde_unchecked(&self.model, x) >= 0.5)
    }
    fn describe(&self) -> String {
        format!("corrupted-bayes({})", self.noise.describe())
    }
}

/// Always predicts the same class.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub d: usize,
    pub label: u8,
}

impl Classifier for ConstantClassifier {
    fn dim(&self) -> usize {
        self.d
    }
    fn predict(&self, _: &[f64]) -> u8 {
        self.label
    }
    fn describe(&self) -> String {
        format!("constant({})", self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{GaussianPairModel, LabelSource};

    #[test]
    fn fitted_classifiers_dispatch() {
        let model: DataModel = GaussianPairModel::model1(2, 0.5).unwrap().into();
        let data = model.sample(100, 1).unwrap();
        let fitted: Vec<FittedClassifier> = vec![
            fit_knn(&data, 5, LabelSource::True).unwrap().into(),
            fit_svm(&data, 0.1, 0.7, LabelSource::True).unwrap().into(),
            fit_lda(&data, LabelSource::True).unwrap().into(),
        ];
        for c in &fitted {
            assert_eq!(c.dim(), 2);
            let preds = c.predict_rows(data.features()).unwrap();
            assert_eq!(preds.len(), 100);
            assert!(c.predict_rows(&[0.0; 3]).is_err());
        }
        assert_eq!(fitted[2].kind(), ClassifierKind::Lda);
        assert_eq!(fitted[0].describe(), "knn(k=5)");
        let bayes = BayesRule(model.clone());
        assert_eq!(bayes.predict(&[0.1, 0.0]), 1);
        assert_eq!(bayes.predict(&[-0.1, 0.0]), 0);
    }
}

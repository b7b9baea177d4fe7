//! Python bindings: models, noise mechanisms, classifiers, closed-form theory and experiment runs.
//!
//! Feature matrices cross the boundary as lists of rows.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use labelnoise::classifiers::{fit_knn, fit_lda, fit_svm, Classifier, FittedClassifier};
use labelnoise::eval::{estimate_risk, run_replicated, Target};
use labelnoise::noise::{corrupt_labels, noise_bounds, noisy_bayes_risk, BOUNDS_GRID};
use labelnoise::numerics::QuadratureSpec;
use labelnoise::plan::ExperimentPlan;
use labelnoise::{theory, DataModel, DataSet, GaussianPairModel, LabelSource, NoiseSpec, QuadraticUniformModel};

fn py_err(e: labelnoise::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "DataModel", module = "labelnoise_py")]
pub struct PyModel {
    inner: DataModel,
}

#[pymethods]
impl PyModel {
    /// Gaussian classes at (+-3/2, 0, ...) with identity covariance.
    #[staticmethod]
    fn model1(d: usize, pi1: f64) -> PyResult<Self> {
        Ok(Self {
            inner: GaussianPairModel::model1(d, pi1).map_err(py_err)?.into(),
        })
    }

    /// Uniform features on the unit cube with a quadratic regression function.
    #[staticmethod]
    fn model2(d: usize) -> PyResult<Self> {
        Ok(Self {
            inner: QuadraticUniformModel::new(d).map_err(py_err)?.into(),
        })
    }

    #[staticmethod]
    fn example1() -> Self {
        Self {
            inner: GaussianPairModel::example1().into(),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eta(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eta(&x).map_err(py_err)
    }

    fn bayes_risk(&self) -> PyResult<f64> {
        self.inner.bayes_risk(&QuadratureSpec::default()).map_err(py_err)
    }

    /// `(rows, labels)` of `n` draws.
    fn sample(&self, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<u32>)> {
        let data = self.inner.sample(n, seed).map_err(py_err)?;
        Ok((rows(&data), label_list(data.true_labels())))
    }

    fn __repr__(&self) -> String {
        format!("DataModel({})", self.inner.describe())
    }
}

/// Labels as a Python list of ints rather than `bytes`.
fn label_list(labels: &[u8]) -> Vec<u32> {
    labels.iter().map(|&y| u32::from(y)).collect()
}

fn rows(data: &DataSet) -> Vec<Vec<f64>> {
    data.features().chunks_exact(data.dim()).map(<[f64]>::to_vec).collect()
}

#[pyclass(name = "Noise", module = "labelnoise_py")]
pub struct PyNoise {
    inner: NoiseSpec,
}

#[pymethods]
impl PyNoise {
    #[staticmethod]
    fn homogeneous(rho: f64) -> PyResult<Self> {
        Self::checked(NoiseSpec::Homogeneous { rho })
    }

    #[staticmethod]
    fn class_dependent(rho0: f64, rho1: f64) -> PyResult<Self> {
        Self::checked(NoiseSpec::ClassDependent { rho0, rho1 })
    }

    #[staticmethod]
    fn boundary_consistent(g0: f64, h0: f64) -> PyResult<Self> {
        Self::checked(NoiseSpec::BoundaryConsistent { g0, h0 })
    }

    /// Observed labels for `rows` drawn with true `labels`.
    fn corrupt(&self, model: &PyModel, rows: Vec<Vec<f64>>, labels: Vec<u8>, seed: u64) -> PyResult<Vec<u32>> {
        let data = DataSet::from_rows(&rows, labels).map_err(py_err)?;
        let noisy = corrupt_labels(&data, &self.inner, &model.inner, seed).map_err(py_err)?;
        Ok(label_list(noisy.observed_labels().expect("corrupted")))
    }

    /// `(rho_star, a_star)` over the model's support.
    fn bounds(&self, model: &PyModel) -> PyResult<(f64, f64)> {
        let b = noise_bounds(&self.inner, &model.inner, BOUNDS_GRID).map_err(py_err)?;
        Ok((b.rho_star, b.a_star))
    }

    fn noisy_bayes_risk(&self, model: &PyModel) -> PyResult<f64> {
        noisy_bayes_risk(&self.inner, &model.inner, &QuadratureSpec::default()).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Noise({})", self.inner.describe())
    }
}

impl PyNoise {
    fn checked(inner: NoiseSpec) -> PyResult<Self> {
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }
}

#[pyclass(name = "Classifier", module = "labelnoise_py")]
pub struct PyClassifier {
    inner: FittedClassifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    fn knn(rows: Vec<Vec<f64>>, labels: Vec<u8>, k: usize) -> PyResult<Self> {
        let data = DataSet::from_rows(&rows, labels).map_err(py_err)?;
        Ok(Self {
            inner: fit_knn(&data, k, LabelSource::True).map_err(py_err)?.into(),
        })
    }

    /// Gaussian-kernel SVM; `sigma` defaults to `sqrt(1/d)`.
    #[staticmethod]
    #[pyo3(signature = (rows, labels, lam, sigma=None))]
    fn svm(rows: Vec<Vec<f64>>, labels: Vec<u8>, lam: f64, sigma: Option<f64>) -> PyResult<Self> {
        let data = DataSet::from_rows(&rows, labels).map_err(py_err)?;
        let sigma = sigma.unwrap_or_else(|| labelnoise::classifiers::default_sigma(data.dim()));
        Ok(Self {
            inner: fit_svm(&data, lam, sigma, LabelSource::True).map_err(py_err)?.into(),
        })
    }

    #[staticmethod]
    fn lda(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<Self> {
        let data = DataSet::from_rows(&rows, labels).map_err(py_err)?;
        Ok(Self {
            inner: fit_lda(&data, LabelSource::True).map_err(py_err)?.into(),
        })
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<u32>> {
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        self.inner.predict_rows(&flat).map(|p| label_list(&p)).map_err(py_err)
    }

    /// `(risk, standard_error)` on a fresh test sample, against true or noisy labels.
    #[pyo3(signature = (model, n_test, seed, noise=None))]
    fn risk(&self, model: &PyModel, n_test: usize, seed: u64, noise: Option<&PyNoise>) -> PyResult<(f64, f64)> {
        let target = if noise.is_some() { Target::NoisyLabel } else { Target::TrueLabel };
        let r = estimate_risk(&self.inner, &model.inner, noise.map(|n| &n.inner), n_test, seed, target).map_err(py_err)?;
        Ok((r.risk_estimate, r.standard_error))
    }

    fn __repr__(&self) -> String {
        format!("Classifier({})", self.inner.describe())
    }
}

#[pyfunction]
fn lda_bayes_risk(pi1: f64, delta: f64) -> PyResult<f64> {
    theory::lda_bayes_risk(pi1, delta).map_err(py_err)
}

#[pyfunction]
fn lda_limit_risk(pi1: f64, delta: f64, rho: f64) -> PyResult<f64> {
    theory::lda_limit_risk(pi1, delta, rho).map_err(py_err)
}

#[pyfunction]
fn knn_regret_ratio_limit(g0: f64, h0: f64, d: usize) -> PyResult<f64> {
    theory::knn_regret_ratio_limit(g0, g0 * h0, d).map_err(py_err)
}

#[pyfunction]
fn coupled_k(k: usize, g0: f64, h0: f64, d: usize) -> PyResult<usize> {
    theory::coupled_k(k, g0, g0 * h0, d).map_err(py_err)
}

/// Runs a TOML experiment plan; one `(n, classifier, noise, risk, se)` per cell.
///
/// Cells without enough successful replications report `None` for risk and SE.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn run_plan(py: Python<'_>, config: &str) -> PyResult<Vec<(usize, String, String, Option<f64>, Option<f64>)>> {
    let plan = ExperimentPlan::from_toml_str(config).map_err(py_err)?;
    let table = py.detach(|| run_replicated(&plan)).map_err(py_err)?;
    Ok(table
        .cells()
        .into_iter()
        .map(|c| {
            (
                c.n,
                table.classifier_label(c.classifier),
                table.noise_label(c.noise),
                c.risk.map(|r| r.mean),
                c.risk.map(|r| r.se),
            )
        })
        .collect())
}

#[pymodule]
fn labelnoise_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(lda_bayes_risk, m)?)?;
    m.add_function(wrap_pyfunction!(lda_limit_risk, m)?)?;
    m.add_function(wrap_pyfunction!(knn_regret_ratio_limit, m)?)?;
    m.add_function(wrap_pyfunction!(coupled_k, m)?)?;
    m.add_function(wrap_pyfunction!(run_plan, m)?)?;
    Ok(())
}

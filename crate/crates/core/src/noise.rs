//! Label-corruption mechanisms.
//!
//! A mechanism is described by its two flip probabilities `rho0(x)` and
//! `rho1(x)`: a record with true label `r` at `x` has its observed label flipped
//! with probability `rho_r(x)`. The noisy regression function is then
//! `eta~ = eta (1 - rho1) + (1 - eta) rho0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::generators::{support_points, DataModel, DataSet};
use crate::numerics::{Integral, QuadratureSpec};
use crate::rng;

pub type RateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// User-supplied, feature-dependent flip probabilities.
///
/// Values outside `[0, 1]` are clamped and counted rather than rejected.
#[derive(Clone)]
pub struct GeneralNoise {
    name: String,
    rho0: RateFn,
    rho1: RateFn,
    clamped: Arc<AtomicU64>,
}

impl GeneralNoise {
    pub fn new(name: impl Into<String>, rho0: RateFn, rho1: RateFn) -> Self {
        Self {
            name: name.into(),
            rho0,
            rho1,
            clamped: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Number of rate evaluations that had to be clamped into `[0, 1]`.
    pub fn clamped_count(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn clamp(&self, v: f64) -> f64 {
        if (0.0..=1.0).contains(&v) {
            v
        } else {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Clone)]
pub enum NoiseSpec {
    /// Every label flips with probability `rho`.
    Homogeneous { rho: f64 },
    /// Flip probability depends on the true class only.
    ClassDependent { rho0: f64, rho1: f64 },
    /// `rho0(x) = g(eta(x))`, `rho1(x) = g(1 - eta(x))` with the clipped linear
    /// `g(1/2 + t) = max[0, min{g0 (1 + h0 t), 2 g0}]`.
    BoundaryConsistent { g0: f64, h0: f64 },
    General(GeneralNoise),
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Clipped linear profile without parameter checks.
#[inline]
fn g_clipped(g0: f64, h0: f64, t: f64) -> f64 {
    (g0 * (1.0 + h0 * t)).min(2.0 * g0).max(0.0)
}

fn check_boundary_params(g0: f64, h0: f64) -> Result<()> {
    if !(g0 > 0.0 && g0 < 0.5) {
        return invalid(format!("g0 = {g0} must lie in (0, 1/2)"));
    }
    if !(h0 > 2.0 - 1.0 / g0) || !h0.is_finite() {
        return invalid(format!("h0 = {h0} must be finite and exceed 2 - 1/g0 = {}", 2.0 - 1.0 / g0));
    }
    Ok(())
}

/// Evaluates the clipped linear noise profile at `1/2 + t`.
pub fn g_eval(g0: f64, h0: f64, t: f64) -> Result<f64> {
    check_boundary_params(g0, h0)?;
    if !(-0.5..=0.5).contains(&t) {
        return invalid(format!("t = {t} must lie in [-1/2, 1/2]"));
    }
    Ok(g_clipped(g0, h0, t))
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::Homogeneous { rho: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Homogeneous { rho } => {
                if !(0.0..0.5).contains(&rho) {
                    return invalid(format!("homogeneous rho = {rho} must lie in [0, 1/2)"));
                }
            }
            NoiseSpec::ClassDependent { rho0, rho1 } => {
                if !(0.0..=1.0).contains(&rho0) || !(0.0..=1.0).contains(&rho1) {
                    return invalid("class-dependent rates must lie in [0, 1]");
                }
            }
            NoiseSpec::BoundaryConsistent { g0, h0 } => check_boundary_params(g0, h0)?,
            NoiseSpec::General(_) => {}
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseSpec::Homogeneous { rho } => format!("homogeneous(rho={rho})"),
            NoiseSpec::ClassDependent { rho0, rho1 } => format!("class-dependent(rho0={rho0},rho1={rho1})"),
            NoiseSpec::BoundaryConsistent { g0, h0 } => format!("boundary-consistent(g0={g0},h0={h0})"),
            NoiseSpec::General(g) => format!("general({})", g.name),
        }
    }

    /// `(g(1/2), g'(1/2))` when the rates follow a boundary profile near `eta = 1/2`.
    pub fn boundary_profile(&self) -> Option<(f64, f64)> {
        match *self {
            NoiseSpec::Homogeneous { rho } => Some((rho, 0.0)),
            NoiseSpec::ClassDependent { rho0, rho1 } if rho0 == rho1 => Some((rho0, 0.0)),
            NoiseSpec::BoundaryConsistent { g0, h0 } => Some((g0, g0 * h0)),
            _ => None,
        }
    }

    /// The common flip probability when the mechanism is homogeneous.
    pub fn homogeneous_rate(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Homogeneous { rho } => Some(rho),
            NoiseSpec::ClassDependent { rho0, rho1 } if rho0 == rho1 => Some(rho0),
            NoiseSpec::BoundaryConsistent { g0, h0 } if h0 == 0.0 => Some(g0),
            _ => None,
        }
    }

    /// Rates as a function of `eta` alone, for the mechanisms that have that form.
    fn rates_from_eta(&self, eta: f64) -> Option<(f64, f64)> {
        match *self {
            NoiseSpec::Homogeneous { rho } => Some((rho, rho)),
            NoiseSpec::ClassDependent { rho0, rho1 } => Some((rho0, rho1)),
            NoiseSpec::BoundaryConsistent { g0, h0 } => {
                Some((g_clipped(g0, h0, eta - 0.5), g_clipped(g0, h0, 0.5 - eta)))
            }
            NoiseSpec::General(_) => None,
        }
    }

    /// `(rho0(x), rho1(x))` without validation.
    #[inline]
    pub fn rates_unchecked(&self, model: &DataModel, x: &[f64]) -> (f64, f64) {
        match self {
            NoiseSpec::General(g) => (g.clamp((g.rho0)(x)), g.clamp((g.rho1)(x))),
            other => other
                .rates_from_eta(model.eta_unchecked(x))
                .expect("non-general noise depends on eta only"),
        }
    }

    /// `eta~(x)` without validation, using `eta` already computed at `x`.
    #[inline]
    fn eta_tilde_from(&self, model: &DataModel, x: &[f64], eta: f64) -> f64 {
        let (r0, r1) = match self {
            NoiseSpec::General(_) => self.rates_unchecked(model, x),
            other => other.rates_from_eta(eta).expect("eta-only noise"),
        };
        eta * (1.0 - r1) + (1.0 - eta) * r0
    }

    #[inline]
    pub fn eta_tilde_unchecked(&self, model: &DataModel, x: &[f64]) -> f64 {
        self.eta_tilde_from(model, x, model.eta_unchecked(x))
    }
}

fn check_point(spec: &NoiseSpec, model: &DataModel, x: &[f64]) -> Result<()> {
    spec.validate()?;
    model.eta(x).map(|_| ())
}

pub fn noise_rates(spec: &NoiseSpec, model: &DataModel, x: &[f64]) -> Result<(f64, f64)> {
    check_point(spec, model, x)?;
    Ok(spec.rates_unchecked(model, x))
}

pub fn eta_tilde(spec: &NoiseSpec, model: &DataModel, x: &[f64]) -> Result<f64> {
    check_point(spec, model, x)?;
    Ok(spec.eta_tilde_unchecked(model, x))
}

pub fn corrupted_bayes_classify(spec: &NoiseSpec, model: &DataModel, x: &[f64]) -> Result<u8> {
    Ok(u8::from(eta_tilde(spec, model, x)? >= 0.5))
}

/// Attaches observed labels, flipping each true label `y` at `x` with probability `rho_y(x)`.
///
/// Exactly one uniform is drawn per record, in record order.
pub fn corrupt_labels(data: &DataSet, spec: &NoiseSpec, model: &DataModel, seed: u64) -> Result<DataSet> {
    if data.is_corrupted() {
        return invalid("data set already carries observed labels");
    }
    spec.validate()?;
    if data.dim() != model.dim() {
        return invalid(format!(
            "data dimension {} does not match model dimension {}",
            data.dim(),
            model.dim()
        ));
    }
    let mut rng = rng::stream(seed);
    let observed = data
        .true_labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let (r0, r1) = spec.rates_unchecked(model, data.x(i));
            let flip_prob = if y == 1 { r1 } else { r0 };
            let u: f64 = rng.random();
            if u < flip_prob {
                1 - y
            } else {
                y
            }
        })
        .collect();
    data.with_observed(observed)
}

/// Bayes risk against noisy labels, `E[min(eta~, 1 - eta~)]`.
///
/// Mechanisms that act through `eta` alone reduce to a one-dimensional integral
/// over the law of `eta`; general mechanisms fall back on [`DataModel::expectation`].
pub fn noisy_bayes_risk(spec: &NoiseSpec, model: &DataModel, quad: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let risk = |t: f64| t.min(1.0 - t);
    match spec {
        NoiseSpec::General(_) => model
            .expectation(|x| risk(spec.eta_tilde_unchecked(model, x)), quad)
            .map(|i| i.value),
        other => Ok(model.eta_expectation(|eta| {
            let (r0, r1) = other.rates_from_eta(eta).expect("eta-only noise");
            risk(eta * (1.0 - r1) + (1.0 - eta) * r0)
        })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsMethod {
    Analytic,
    GridMaximized { points: usize },
}

/// Uniform noise-level bound `rho*` and asymmetry bound `a*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBounds {
    pub rho_star: f64,
    pub a_star: f64,
    pub method: BoundsMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundsOutcome {
    Satisfied,
    HypothesesViolated(String),
}

impl NoiseBounds {
    pub fn outcome(&self) -> BoundsOutcome {
        if !(self.rho_star < 0.5) {
            BoundsOutcome::HypothesesViolated(format!("rho* = {} is not below 1/2", self.rho_star))
        } else if !(self.a_star < 1.0) {
            BoundsOutcome::HypothesesViolated(format!("a* = {} is not below 1", self.a_star))
        } else {
            BoundsOutcome::Satisfied
        }
    }

    pub fn satisfied(&self) -> bool {
        self.outcome() == BoundsOutcome::Satisfied
    }

    /// Inflation factor `1 / {(1 - 2 rho*)(1 - a*)}`.
    pub fn inflation(&self) -> Option<f64> {
        self.satisfied()
            .then(|| 1.0 / ((1.0 - 2.0 * self.rho_star) * (1.0 - self.a_star)))
    }
}

/// Ratio whose supremum defines `a*`; `None` outside the set where it is defined.
fn asymmetry_ratio(eta: f64, r0: f64, r1: f64) -> Option<f64> {
    let margin = 2.0 * eta - 1.0;
    let keep = 1.0 - r0 - r1;
    (margin != 0.0 && keep > 0.0).then(|| (r1 - r0) / (margin * keep))
}

/// Default number of grid points for [`noise_bounds`].
pub const BOUNDS_GRID: usize = 100_000;

/// Computes `rho*` and `a*`, analytically where the mechanism allows it and
/// otherwise by maximizing over `grid` evaluation points.
pub fn noise_bounds(spec: &NoiseSpec, model: &DataModel, grid: usize) -> Result<NoiseBounds> {
    spec.validate()?;
    match *spec {
        NoiseSpec::Homogeneous { rho } => Ok(NoiseBounds {
            rho_star: rho,
            a_star: 0.0,
            method: BoundsMethod::Analytic,
        }),
        NoiseSpec::ClassDependent { rho0, rho1 } => {
            // eta crosses 1/2 continuously in both models, so any asymmetry is unbounded.
            let a_star = if rho0 == rho1 {
                0.0
            } else if rho0 + rho1 >= 1.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            Ok(NoiseBounds {
                rho_star: 0.5 * (rho0 + rho1),
                a_star,
                method: BoundsMethod::Analytic,
            })
        }
        NoiseSpec::BoundaryConsistent { g0, h0 } => {
            if grid < 2 {
                return invalid("bounds grid needs at least 2 points");
            }
            let mut rho_star = g0;
            let mut a_star = -g0 * h0 / (1.0 - 2.0 * g0);
            for i in 0..=grid {
                let t = -0.5 + i as f64 / grid as f64;
                if t.abs() < 1e-9 {
                    continue;
                }
                let (r0, r1) = (g_clipped(g0, h0, t), g_clipped(g0, h0, -t));
                rho_star = rho_star.max(0.5 * (r0 + r1));
                if let Some(r) = asymmetry_ratio(0.5 + t, r0, r1) {
                    a_star = a_star.max(r);
                }
            }
            Ok(NoiseBounds {
                rho_star,
                a_star,
                method: BoundsMethod::GridMaximized { points: grid },
            })
        }
        NoiseSpec::General(_) => {
            if grid == 0 {
                return invalid("bounds grid needs at least 1 point");
            }
            let mut rho_star: f64 = 0.0;
            let mut a_star = f64::NEG_INFINITY;
            for x in support_points(model, grid)? {
                let (r0, r1) = spec.rates_unchecked(model, &x);
                rho_star = rho_star.max(0.5 * (r0 + r1));
                if let Some(r) = asymmetry_ratio(model.eta_unchecked(&x), r0, r1) {
                    a_star = a_star.max(r);
                }
            }
            Ok(NoiseBounds {
                rho_star,
                a_star,
                method: BoundsMethod::GridMaximized { points: grid },
            })
        }
    }
}

/// `true` where `|2 eta - 1| > kappa |2 eta~ - 1|`, i.e. outside `A_kappa`.
#[inline]
fn outside_a_kappa(eta: f64, eta_tilde: f64, kappa: f64) -> bool {
    (2.0 * eta - 1.0).abs() > kappa * (2.0 * eta_tilde - 1.0).abs()
}

/// Lebesgue measure of `{s in [0, 1) : pred(s)}` for a piecewise-constant predicate.
///
/// Cells whose endpoints disagree are assumed to hold a single switch, located
/// by bisection.
fn indicator_measure<P: Fn(f64) -> bool>(pred: P, cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for c in 0..cells {
        let (a, b) = (c as f64 * h, (c + 1) as f64 * h);
        let b_eval = if c + 1 == cells { b - 1e-15 } else { b };
        let (pa, pb) = (pred(a), pred(b_eval));
        if pa == pb {
            if pa {
                total += h;
            }
            continue;
        }
        let (mut lo, mut hi) = (a, b_eval);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pred(mid) == pa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let cut = 0.5 * (lo + hi);
        total += if pa { cut - a } else { b - cut };
    }
    total
}

/// `P_X(A_kappa^c)` where `A_kappa = {x : |2 eta - 1| <= kappa |2 eta~ - 1|}`.
///
/// Gaussian pairs use quasi-Monte Carlo with `quad.qmc_points` points (error
/// `3/sqrt(N)`). For the uniform-quadratic model, `eta` is uniform on `[0, 1)`
/// with density `pi/4` plus an atom of mass `1 - pi/4` at 1, so noise that
/// depends on `x` through `eta` reduces to a one-dimensional measure; general
/// noise falls back to tensor quadrature of the indicator.
pub fn a_kappa_complement_mass(
    spec: &NoiseSpec,
    model: &DataModel,
    kappa: f64,
    quad: &QuadratureSpec,
) -> Result<Integral> {
    spec.validate()?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return invalid(format!("kappa = {kappa} must be positive"));
    }
    let indicator = |x: &[f64]| {
        let eta = model.eta_unchecked(x);
        f64::from(u8::from(outside_a_kappa(eta, spec.eta_tilde_from(model, x, eta), kappa)))
    };
    match (model, spec) {
        (DataModel::QuadraticUniform(_), NoiseSpec::General(_)) | (DataModel::GaussianPair(_), _) => {
            model.expectation(indicator, quad)
        }
        (DataModel::QuadraticUniform(_), _) => {
            let pred = |eta: f64| {
                let (r0, r1) = spec.rates_from_eta(eta).expect("eta-only noise");
                outside_a_kappa(eta, eta * (1.0 - r1) + (1.0 - eta) * r0, kappa)
            };
            let disk = PI / 4.0;
            let value = disk * indicator_measure(pred, 1 << 16) + (1.0 - disk) * f64::from(u8::from(pred(1.0)));
            if !value.is_finite() {
                return Err(Error::QuadratureNotConverged {
                    previous: f64::NAN,
                    last: value,
                });
            }
            Ok(Integral {
                value,
                error_estimate: 1e-12,
                resolution: 1 << 16,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{GaussianPairModel, LabelSource, QuadraticUniformModel};

    fn quad_model() -> DataModel {
        QuadraticUniformModel::new(2).unwrap().into()
    }

    #[test]
    fn noisy_bayes_risk_follows_homogeneous_identity() {
        let quad = QuadratureSpec::default();
        for model in [quad_model(), GaussianPairModel::model1(2, 0.5).unwrap().into()] {
            let clean = model.bayes_risk(&quad).unwrap();
            for rho in [0.0, 0.1, 0.3] {
                let noisy = noisy_bayes_risk(&NoiseSpec::Homogeneous { rho }, &model, &quad).unwrap();
                // the clean risk is itself a quadrature value, accurate to 1e-7
                assert!((noisy - (rho + (1.0 - 2.0 * rho) * clean)).abs() < 1e-7, "{rho}: {noisy} vs {clean}");
            }
        }
        let exact = noisy_bayes_risk(&NoiseSpec::none(), &quad_model(), &quad).unwrap();
        assert!((exact - PI / 16.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_bayes_risk_matches_pointwise_quadrature() {
        // the same boundary-consistent rates written as a general mechanism go
        // through two-dimensional quadrature instead of the law of eta
        let model = quad_model();
        let quad = QuadratureSpec::default();
        for h0 in [-1.0, 3.0] {
            let m0 = model.clone();
            let m1 = model.clone();
            let general = NoiseSpec::General(GeneralNoise::new(
                "bc",
                Arc::new(move |x: &[f64]| g_eval(0.1, h0, m0.eta_unchecked(x) - 0.5).unwrap()),
                Arc::new(move |x: &[f64]| g_eval(0.1, h0, 0.5 - m1.eta_unchecked(x)).unwrap()),
            ));
            let a = noisy_bayes_risk(&NoiseSpec::BoundaryConsistent { g0: 0.1, h0 }, &model, &quad).unwrap();
            let b = noisy_bayes_risk(&general, &model, &quad).unwrap();
            assert!((a - b).abs() < 1e-6, "h0 = {h0}: {a} vs {b}");
        }
    }

    /// A point of the uniform-quadratic model with the requested `eta < 1`.
    fn point_with_eta(eta: f64) -> Vec<f64> {
        vec![0.5 + (eta / 4.0).sqrt(), 0.5]
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_eval(0.1, 0.0, 0.3).unwrap(), 0.1);
        assert!((g_eval(0.1, 3.0, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(g_eval(0.1, 3.0, -0.4).unwrap(), 0.0);
        assert!(g_eval(0.6, 0.0, 0.0).is_err());
        assert!(g_eval(0.1, -8.0, 0.0).is_err());
        assert!(g_eval(0.1, 0.0, 0.7).is_err());
    }

    #[test]
    fn rate_examples() {
        let m = quad_model();
        let x = point_with_eta(0.37);
        assert_eq!(noise_rates(&NoiseSpec::Homogeneous { rho: 0.3 }, &m, &x).unwrap(), (0.3, 0.3));
        let bc = NoiseSpec::BoundaryConsistent { g0: 0.1, h0: 2.0 };
        let (r0, r1) = noise_rates(&bc, &m, &point_with_eta(0.5)).unwrap();
        assert!((r0 - 0.1).abs() < 1e-12 && (r1 - 0.1).abs() < 1e-12);
        let (r0, r1) = noise_rates(&bc, &m, &point_with_eta(0.6)).unwrap();
        assert!((r0 - 0.12).abs() < 1e-12 && (r1 - 0.08).abs() < 1e-12);
        assert!(noise_rates(&bc, &m, &[0.1]).is_err());
    }

    #[test]
    fn eta_tilde_examples() {
        let m = quad_model();
        let eta_half = point_with_eta(0.5);
        for spec in [
            NoiseSpec::Homogeneous { rho: 0.2 },
            NoiseSpec::BoundaryConsistent { g0: 0.1, h0: 3.0 },
            NoiseSpec::ClassDependent { rho0: 0.3, rho1: 0.3 },
        ] {
            assert!((eta_tilde(&spec, &m, &eta_half).unwrap() - 0.5).abs() < 1e-12);
        }
        let x = point_with_eta(0.8);
        let eta = m.eta(&x).unwrap();
        let v = eta_tilde(&NoiseSpec::Homogeneous { rho: 0.3 }, &m, &x).unwrap();
        assert!((v - (eta * 0.7 + (1.0 - eta) * 0.3)).abs() < 1e-15);
        assert!((v - 0.62).abs() < 1e-12);
        let x = point_with_eta(0.37);
        assert_eq!(eta_tilde(&NoiseSpec::none(), &m, &x).unwrap(), m.eta(&x).unwrap());
    }

    #[test]
    fn corrupted_bayes_examples() {
        let m = quad_model();
        assert_eq!(corrupted_bayes_classify(&NoiseSpec::Homogeneous { rho: 0.3 }, &m, &point_with_eta(0.8)).unwrap(), 1);
        assert_eq!(corrupted_bayes_classify(&NoiseSpec::Homogeneous { rho: 0.49 }, &m, &point_with_eta(0.4)).unwrap(), 0);
        // eta = 1/2 exactly: (0.5 + sqrt(1/8), 0.5) is not exact in floating point,
        // so use a Gaussian pair midpoint instead.
        let g: DataModel = GaussianPairModel::model1(2, 0.5).unwrap().into();
        let bc = NoiseSpec::BoundaryConsistent { g0: 0.1, h0: 3.0 };
        assert_eq!(g.eta(&[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(corrupted_bayes_classify(&bc, &g, &[0.0, 1.0]).unwrap(), 1);
    }

    #[test]
    fn corrupt_labels_zero_noise_and_double_corruption() {
        let m = quad_model();
        let data = m.sample(500, 4).unwrap();
        let clean = corrupt_labels(&data, &NoiseSpec::none(), &m, 9).unwrap();
        assert_eq!(clean.labels(LabelSource::Observed).unwrap(), data.true_labels());
        assert_eq!(clean.features(), data.features());
        assert!(corrupt_labels(&clean, &NoiseSpec::none(), &m, 9).is_err());
        let again = corrupt_labels(&data, &NoiseSpec::Homogeneous { rho: 0.2 }, &m, 9).unwrap();
        assert_eq!(again, corrupt_labels(&data, &NoiseSpec::Homogeneous { rho: 0.2 }, &m, 9).unwrap());
    }

    #[test]
    fn bounds_examples() {
        let m = quad_model();
        let b = noise_bounds(&NoiseSpec::Homogeneous { rho: 0.3 }, &m, BOUNDS_GRID).unwrap();
        assert_eq!((b.rho_star, b.a_star, b.method), (0.3, 0.0, BoundsMethod::Analytic));
        let b = noise_bounds(&NoiseSpec::BoundaryConsistent { g0: 0.1, h0: -1.0 }, &m, BOUNDS_GRID).unwrap();
        assert!((b.rho_star - 0.1).abs() < 1e-15);
        assert!((b.a_star - 0.125).abs() < 1e-12);
        let b = noise_bounds(&NoiseSpec::BoundaryConsistent { g0: 0.1, h0: 3.0 }, &m, BOUNDS_GRID).unwrap();
        assert!((b.rho_star - 0.1).abs() < 1e-15);
        assert!(b.a_star <= 0.0);
        assert!(b.satisfied());
        let b = noise_bounds(&NoiseSpec::ClassDependent { rho0: 0.1, rho1: 0.2 }, &m, 10).unwrap();
        assert!(matches!(b.outcome(), BoundsOutcome::HypothesesViolated(_)));
    }

    #[test]
    fn general_noise_clamps_and_counts() {
        let m = quad_model();
        let g = GeneralNoise::new("overshoot", Arc::new(|x: &[f64]| x[0] - 0.1), Arc::new(|_: &[f64]| 1.2));
        let spec = NoiseSpec::General(g.clone());
        let (r0, r1) = noise_rates(&spec, &m, &[0.05, 0.5]).unwrap();
        assert_eq!((r0, r1), (0.0, 1.0));
        assert_eq!(g.clamped_count(), 2);
        let b = noise_bounds(&spec, &m, 1000).unwrap();
        assert!(matches!(b.method, BoundsMethod::GridMaximized { points: 1000 }));
        assert!(!b.satisfied());
    }

    #[test]
    fn a_kappa_examples() {
        let quad = QuadratureSpec::default();
        let m = quad_model();
        let h = NoiseSpec::Homogeneous { rho: 0.3 };
        assert!((a_kappa_complement_mass(&h, &m, 2.0, &quad).unwrap().value - 1.0).abs() < 1e-9);
        assert!(a_kappa_complement_mass(&h, &m, 3.0, &quad).unwrap().value.abs() < 1e-12);
        assert_eq!(a_kappa_complement_mass(&NoiseSpec::none(), &m, 1.0, &quad).unwrap().value, 0.0);
        let small = QuadratureSpec {
            qmc_points: 20_000,
            ..quad
        };
        let g: DataModel = GaussianPairModel::model1(2, 0.5).unwrap().into();
        let mass = a_kappa_complement_mass(&h, &g, 2.0, &small).unwrap();
        assert!((mass.value - 1.0).abs() <= mass.error_estimate);
        assert!(a_kappa_complement_mass(&h, &m, 0.0, &quad).is_err());
    }

    #[test]
    fn a_kappa_boundary_noise_matches_direct_integration() {
        // For h0 = 3 and eta = 1/2 + t with |t| < 1/3, |2 eta~ - 1| = 1.1 |2 eta - 1|,
        // so A_kappa^c is empty for kappa >= 1/1.1 inside that band.
        let quad = QuadratureSpec::default();
        let m = quad_model();
        let bc = NoiseSpec::BoundaryConsistent { g0: 0.1, h0: 3.0 };
        let exact = a_kappa_complement_mass(&bc, &m, 0.95, &quad).unwrap().value;
        // brute force over a fine grid of the unit square
        let n = 2000;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let eta = m.eta(&x).unwrap();
                if outside_a_kappa(eta, bc.eta_tilde_unchecked(&m, &x), 0.95) {
                    hits += 1;
                }
            }
        }
        let brute = hits as f64 / (n * n) as f64;
        assert!((exact - brute).abs() < 2e-3, "{exact} vs {brute}");
    }
}

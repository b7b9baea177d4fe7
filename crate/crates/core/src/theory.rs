//! Closed-form risk theory: Gaussian Bayes risk, the large-sample limit of LDA
//! trained under homogeneous label noise, the excess-risk transfer bound, the
//! kNN regret-ratio limit and its neighbour-count coupling, the Gaussian-kernel
//! SVM rate exponent, and the asymptotic quantities of the noisy 1-NN rule.

use crate::error::{invalid, Error, Result};
use crate::generators::DataModel;
use crate::noise::{NoiseBounds, NoiseSpec};
use crate::numerics::{normal_cdf, QuadratureSpec};

fn check_prior(pi1: f64) -> Result<()> {
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return invalid(format!("prior pi1 = {pi1} must lie in (0, 1)"));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return invalid(format!("Mahalanobis distance {delta} must be positive and finite"));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..0.5).contains(&rho) {
        return Err(Error::HypothesisViolated(format!(
            "noise level rho = {rho} must lie in [0, 1/2)"
        )));
    }
    Ok(())
}

/// Risk of a linear rule with offset `c` on a Gaussian pair.
fn offset_rule_risk(pi1: f64, delta: f64, c: f64) -> f64 {
    let pi0 = 1.0 - pi1;
    pi0 * normal_cdf(c / delta - delta / 2.0) + pi1 * normal_cdf(-c / delta - delta / 2.0)
}

/// Bayes risk of two Gaussians with shared covariance.
pub fn lda_bayes_risk(pi1: f64, delta: f64) -> Result<f64> {
    check_prior(pi1)?;
    check_delta(delta)?;
    let pi0 = 1.0 - pi1;
    Ok(pi0 * normal_cdf((pi1 / pi0).ln() / delta - delta / 2.0)
        + pi1 * normal_cdf((pi0 / pi1).ln() / delta - delta / 2.0))
}

/// Offset of the limiting noisy-LDA hyperplane under `rho`-homogeneous noise.
pub fn lda_limit_c0(pi1: f64, delta: f64, rho: f64) -> Result<f64> {
    check_prior(pi1)?;
    check_delta(delta)?;
    check_rho(rho)?;
    let pi0 = 1.0 - pi1;
    let q = 1.0 - 2.0 * rho;
    let v = rho * (1.0 - rho);
    let d2 = delta * delta;
    let log_ratio = ((q * pi1 + rho) / (q * pi0 + rho)).ln();
    let scale = q + v * (1.0 + pi0 * pi1 * d2) / (q * pi1 * pi0);
    let shift = (pi1 - pi0) * v * d2 / (2.0 * (q * q * pi1 * pi0 + v));
    Ok(scale * log_ratio - shift)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaLimit {
    pub c0: f64,
    pub limiting_risk: f64,
    pub delta: f64,
    pub rho: f64,
    pub pi1: f64,
}

pub fn lda_limit(pi1: f64, delta: f64, rho: f64) -> Result<LdaLimit> {
    let c0 = lda_limit_c0(pi1, delta, rho)?;
    let limiting_risk = offset_rule_risk(pi1, delta, c0);
    debug_assert!(limiting_risk >= lda_bayes_risk(pi1, delta)? - 1e-12);
    Ok(LdaLimit {
        c0,
        limiting_risk,
        delta,
        rho,
        pi1,
    })
}

pub fn lda_limit_risk(pi1: f64, delta: f64, rho: f64) -> Result<f64> {
    lda_limit(pi1, delta, rho).map(|l| l.limiting_risk)
}

/// Lower and upper end of the scan for the consistency separation.
pub const CONSISTENCY_SCAN: (f64, f64) = (1e-4, 100.0);
const SCAN_POINTS: usize = 4000;

/// The unique separation at which noisy LDA is consistent for unequal priors.
///
/// A log-spaced scan over [`CONSISTENCY_SCAN`] must find exactly one sign
/// change of `c0(Delta) - log(pi1/pi0)`; the root is then bisected to 1e-10.
pub fn lda_consistency_delta(pi1: f64, rho: f64) -> Result<f64> {
    check_prior(pi1)?;
    if pi1 == 0.5 {
        return invalid("equal priors: noisy LDA is consistent for every separation");
    }
    if !(rho > 0.0 && rho < 0.5) {
        return invalid(format!("rho = {rho} must lie in (0, 1/2)"));
    }
    let target = (pi1 / (1.0 - pi1)).ln();
    let h = |delta: f64| lda_limit_c0(pi1, delta, rho).map(|c| c - target);
    let (lo, hi) = CONSISTENCY_SCAN;
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let values = grid.iter().map(|&d| h(d)).collect::<Result<Vec<_>>>()?;
    let brackets: Vec<usize> = (0..SCAN_POINTS - 1)
        .filter(|&i| values[i] == 0.0 || values[i].signum() != values[i + 1].signum())
        .collect();
    match brackets.as_slice() {
        [] => Err(Error::NoRootInBracket { lo, hi }),
        [i] => {
            let (mut a, mut b) = (grid[*i], grid[i + 1]);
            let mut fa = values[*i];
            if fa == 0.0 {
                return Ok(a);
            }
            while b - a > 1e-10 {
                let m = 0.5 * (a + b);
                let fm = h(m)?;
                if fm == 0.0 {
                    return Ok(m);
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            Ok(0.5 * (a + b))
        }
        _ => Err(Error::HypothesisViolated(format!(
            "{} sign changes found; the consistency separation is not unique",
            brackets.len()
        ))),
    }
}

/// True-label risk recovered from a noisy-label risk under homogeneous noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedRisk {
    pub value: f64,
    /// False when the inputs are inconsistent and `value` leaves `[0, 1]`.
    pub in_unit_interval: bool,
}

pub fn homogeneous_risk_transform(r_tilde: f64, rho: f64) -> Result<TransformedRisk> {
    check_rho(rho)?;
    if !(0.0..=1.0).contains(&r_tilde) {
        return invalid(format!("noisy risk {r_tilde} must lie in [0, 1]"));
    }
    let value = (r_tilde - rho) / (1.0 - 2.0 * rho);
    Ok(TransformedRisk {
        value,
        in_unit_interval: (0.0..=1.0).contains(&value),
    })
}

/// Inverse of [`homogeneous_risk_transform`]: `rho + (1 - 2 rho) R`.
pub fn noisy_risk_from_true(risk: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(rho + (1.0 - 2.0 * rho) * risk)
}

/// Upper bound on the true-label excess risk from the noisy-label excess risk.
pub fn theorem1_bound(excess_tilde: f64, bounds: &NoiseBounds) -> Result<f64> {
    if !(excess_tilde >= 0.0) {
        return invalid(format!("noisy excess risk {excess_tilde} must be non-negative"));
    }
    if !(bounds.rho_star < 0.5) {
        return Err(Error::HypothesisViolated(format!(
            "rho* = {} is not below 1/2",
            bounds.rho_star
        )));
    }
    if !(bounds.a_star < 1.0) {
        return Err(Error::HypothesisViolated(format!(
            "a* = {} is not below 1",
            bounds.a_star
        )));
    }
    Ok(excess_tilde / ((1.0 - 2.0 * bounds.rho_star) * (1.0 - bounds.a_star)))
}

fn regret_base(g_half: f64, g_dot_half: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    let base = 1.0 + (g_dot_half - 2.0 * g_half);
    if !(base > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "1 - 2g(1/2) + g'(1/2) = {base} must be positive"
        )));
    }
    Ok(base)
}

/// Limiting ratio of noisy-trained to clean-trained kNN excess risk.
pub fn knn_regret_ratio_limit(g_half: f64, g_dot_half: f64, d: usize) -> Result<f64> {
    let base = regret_base(g_half, g_dot_half, d)?;
    Ok(base.powf(-8.0 / (d as f64 + 4.0)))
}

/// Multiplier applied to the clean neighbour count for the noisy classifier.
pub fn coupling_factor(g_half: f64, g_dot_half: f64, d: usize) -> Result<f64> {
    let base = regret_base(g_half, g_dot_half, d)?;
    let d = d as f64;
    Ok(base.powf(-2.0 * d / (d + 4.0)))
}

/// Neighbour count for the noisy classifier matched to `k` clean neighbours, at least 1.
pub fn coupled_k(k: usize, g_half: f64, g_dot_half: f64, d: usize) -> Result<usize> {
    if k == 0 {
        return invalid("k must be positive");
    }
    let factor = coupling_factor(g_half, g_dot_half, d)?;
    Ok(((factor * k as f64).floor() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Some(Exponent::Infinite),
            other => other.parse().ok().map(Exponent::Finite),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateExponent {
    pub gamma1: Exponent,
    pub gamma2: f64,
    pub gamma: f64,
    /// Margin and geometric-noise constants, carried for reference only.
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateOutcome {
    Rate(RateExponent),
    /// Infinite geometric noise exponent: the rate statement needs a fixed bandwidth instead.
    FixedSigmaRegime,
}

/// Convergence-rate exponent of the Gaussian-kernel SVM excess risk.
pub fn svm_rate_exponent(gamma1: Exponent, gamma2: Exponent) -> Result<RateOutcome> {
    let g2 = match gamma2 {
        Exponent::Infinite => return Ok(RateOutcome::FixedSigmaRegime),
        Exponent::Finite(v) if v > 0.0 && v.is_finite() => v,
        Exponent::Finite(v) => return invalid(format!("gamma2 = {v} must be positive")),
    };
    let first = g2 / (2.0 * g2 + 1.0);
    let gamma = match gamma1 {
        Exponent::Finite(g1) if !(g1 >= 0.0 && g1.is_finite()) => {
            return invalid(format!("gamma1 = {g1} must be non-negative"))
        }
        Exponent::Finite(g1) if g1 == 0.0 => first,
        Exponent::Finite(g1) => {
            if g2 <= (g1 + 2.0) / (2.0 * g1) {
                first
            } else {
                2.0 * g2 * (g1 + 1.0) / (2.0 * g2 * (g1 + 2.0) + 3.0 * g1 + 4.0)
            }
        }
        Exponent::Infinite => {
            if g2 <= 0.5 {
                first
            } else {
                2.0 * g2 / (2.0 * g2 + 3.0)
            }
        }
    };
    Ok(RateOutcome::Rate(RateExponent {
        gamma1,
        gamma2: g2,
        gamma,
        kappa1: None,
        kappa2: None,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinBoundTerm {
    /// `P{C(X) != noisy Bayes(X)}` is asymptotically smaller.
    Disagreement,
    /// The `kappa`-weighted noisy excess risk is asymptotically smaller.
    WeightedExcess,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneNnLimits {
    /// Noisy Bayes risk `E[min(eta~, 1 - eta~)]`.
    pub r_tilde_star: f64,
    /// `E[eta~ (1 - eta~)]`.
    pub expected_product: f64,
    /// Limit of the noisy 1-NN excess noisy risk, `2 E[eta~(1-eta~)] - r_tilde_star`.
    pub l_infinity: f64,
    /// Limit of the disagreement term of the excess-risk bound.
    pub disagreement_limit: f64,
    /// Limit of the weighted-excess term, `l_infinity / (1 - 2 rho)`.
    pub weighted_excess_limit: f64,
    pub winner: MinBoundTerm,
    pub rho: f64,
}

/// Asymptotic quantities of the 1-NN rule trained with homogeneous noise.
pub fn one_nn_limits(spec: &NoiseSpec, model: &DataModel, quad: &QuadratureSpec) -> Result<OneNnLimits> {
    let rho = match spec {
        NoiseSpec::Homogeneous { rho } => *rho,
        _ => return invalid("1-NN limits require homogeneous noise"),
    };
    check_rho(rho)?;
    let q = 1.0 - 2.0 * rho;
    let r_tilde_star = model
        .expectation(
            |x| {
                let e = q * model.eta_unchecked(x) + rho;
                e.min(1.0 - e)
            },
            quad,
        )?
        .value;
    let expected_product = model
        .expectation(
            |x| {
                let e = q * model.eta_unchecked(x) + rho;
                e * (1.0 - e)
            },
            quad,
        )?
        .value;
    let l_infinity = 2.0 * expected_product - r_tilde_star;
    let lhs = rho * r_tilde_star;
    let rhs = r_tilde_star - expected_product;
    let winner = if lhs < rhs {
        MinBoundTerm::WeightedExcess
    } else if lhs > rhs {
        MinBoundTerm::Disagreement
    } else {
        MinBoundTerm::Tie
    };
    Ok(OneNnLimits {
        r_tilde_star,
        expected_product,
        l_infinity,
        disagreement_limit: r_tilde_star,
        weighted_excess_limit: l_infinity / q,
        winner,
        rho,
    })
}

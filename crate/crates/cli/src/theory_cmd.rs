//! `theory` subcommands: thin wrappers printing closed-form values.

use clap::{Subcommand, ValueEnum};

use labelnoise::numerics::QuadratureSpec;
use labelnoise::theory::{
    coupled_k, coupling_factor, homogeneous_risk_transform, knn_regret_ratio_limit, lda_bayes_risk,
    lda_consistency_delta, lda_limit, svm_rate_exponent, Exponent, RateOutcome,
};
use labelnoise::{DataModel, GaussianPairModel, QuadraticUniformModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelName {
    Model1,
    Model2,
    Example1,
}

#[derive(Debug, Clone, Subcommand)]
pub enum TheoryCommand {
    /// Bayes risk of a built-in model.
    BayesRisk {
        #[arg(long, value_enum)]
        model: ModelName,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        pi1: f64,
    },
    /// Bayes risk of two Gaussian classes with common covariance.
    LdaBayes {
        #[arg(long)]
        pi1: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Limiting risk of LDA trained under homogeneous noise.
    LdaLimit {
        #[arg(long)]
        pi1: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Separation at which noisy LDA stays consistent despite unequal priors.
    ConsistencyDelta {
        #[arg(long)]
        pi1: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Limiting kNN regret ratio under boundary-consistent noise.
    RegretRatio {
        #[arg(long)]
        g0: f64,
        #[arg(long, allow_negative_numbers = true)]
        h0: f64,
        #[arg(long)]
        d: usize,
    },
    /// Neighbour count for the noisy kNN rule matched to a clean `k`.
    CoupledK {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        g0: f64,
        #[arg(long, allow_negative_numbers = true)]
        h0: f64,
        #[arg(long)]
        d: usize,
    },
    /// SVM excess-risk rate exponent; `inf` is accepted for either argument.
    Gamma {
        #[arg(long, allow_negative_numbers = true)]
        gamma1: String,
        #[arg(long, allow_negative_numbers = true)]
        gamma2: String,
    },
    /// True-label risk recovered from a noisy-label risk under homogeneous noise.
    RiskTransform {
        #[arg(long)]
        noisy_risk: f64,
        #[arg(long)]
        rho: f64,
    },
}

/// `x` with six significant figures, in fixed notation for moderate magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn exponent(s: &str, name: &str) -> labelnoise::Result<Exponent> {
    Exponent::parse(s).ok_or_else(|| labelnoise::Error::InvalidArgument(format!("{name} = {s:?} is not a number or inf")))
}

fn line(name: &str, value: f64, formula: &str) -> String {
    format!("{name} = {}\n  {formula}", sig6(value))
}

/// Text printed for one subcommand.
pub fn evaluate(cmd: &TheoryCommand) -> labelnoise::Result<String> {
    Ok(match *cmd {
        TheoryCommand::BayesRisk { model, d, pi1 } => {
            let m: DataModel = match model {
                ModelName::Model1 => GaussianPairModel::model1(d, pi1)?.into(),
                ModelName::Model2 => QuadraticUniformModel::new(d)?.into(),
                ModelName::Example1 => GaussianPairModel::example1().into(),
            };
            let formula = match model {
                ModelName::Model2 => "E min(eta, 1 - eta) by quadrature over the unit cube",
                _ => "pi0 Phi(-Delta/2 + log(pi0/pi1)/Delta) + pi1 Phi(-Delta/2 - log(pi0/pi1)/Delta)",
            };
            line("bayes_risk", m.bayes_risk(&QuadratureSpec::default())?, formula)
        }
        TheoryCommand::LdaBayes { pi1, delta } => line(
            "bayes_risk",
            lda_bayes_risk(pi1, delta)?,
            "pi0 Phi(-Delta/2 + log(pi0/pi1)/Delta) + pi1 Phi(-Delta/2 - log(pi0/pi1)/Delta)",
        ),
        TheoryCommand::LdaLimit { pi1, delta, rho } => {
            let l = lda_limit(pi1, delta, rho)?;
            format!(
                "{}\n{}",
                line("lda_limit_risk", l.limiting_risk, "risk of the rule w'x + c0 with the noisy limiting offset c0"),
                line("c0", l.c0, "limit of the fitted LDA offset under homogeneous noise")
            )
        }
        TheoryCommand::ConsistencyDelta { pi1, rho } => line(
            "delta_star",
            lda_consistency_delta(pi1, rho)?,
            "unique Delta with c0(Delta) = log(pi1/pi0)",
        ),
        TheoryCommand::RegretRatio { g0, h0, d } => line(
            "regret_ratio",
            knn_regret_ratio_limit(g0, g0 * h0, d)?,
            "(1 - 2 g(1/2) + g'(1/2))^(-8/(d+4)) with g(1/2) = g0, g'(1/2) = g0 h0",
        ),
        TheoryCommand::CoupledK { k, g0, h0, d } => {
            let factor = coupling_factor(g0, g0 * h0, d)?;
            format!(
                "coupled_k = {}\n  floor(k (1 - 2 g(1/2) + g'(1/2))^(-2d/(d+4))), factor {}",
                coupled_k(k, g0, g0 * h0, d)?,
                sig6(factor)
            )
        }
        TheoryCommand::Gamma { ref gamma1, ref gamma2 } => {
            match svm_rate_exponent(exponent(gamma1, "gamma1")?, exponent(gamma2, "gamma2")?)? {
                RateOutcome::Rate(r) => line(
                    "gamma",
                    r.gamma,
                    "g2/(2 g2 + 1) for small g2, else 2 g2 (g1 + 1)/(2 g2 (g1 + 2) + 3 g1 + 4)",
                ),
                RateOutcome::FixedSigmaRegime => {
                    "gamma undefined: an infinite geometric noise exponent calls for a fixed kernel width".into()
                }
            }
        }
        TheoryCommand::RiskTransform { noisy_risk, rho } => {
            let t = homogeneous_risk_transform(noisy_risk, rho)?;
            let mut s = line("risk", t.value, "(R~ - rho)/(1 - 2 rho)");
            if !t.in_unit_interval {
                s.push_str("\n  warning: the inputs are inconsistent; the value leaves [0, 1]");
            }
            s
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_figures() {
        assert_eq!(sig6(1.219370), "1.21937");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
        assert_eq!(sig6(0.066807), "0.0668070");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn regret_ratio_prints_rounded_value() {
        let s = evaluate(&TheoryCommand::RegretRatio { g0: 0.1, h0: 0.0, d: 5 }).unwrap();
        assert!(s.starts_with("regret_ratio = 1.2193"), "{s}");
    }

    #[test]
    fn gamma_two_branch() {
        let s = evaluate(&TheoryCommand::Gamma {
            gamma1: "1".into(),
            gamma2: "1".into(),
        })
        .unwrap();
        assert!(s.starts_with("gamma = 0.333333"), "{s}");
        assert!(evaluate(&TheoryCommand::Gamma {
            gamma1: "x".into(),
            gamma2: "1".into()
        })
        .is_err());
    }

    #[test]
    fn domain_errors_are_reported() {
        let e = evaluate(&TheoryCommand::LdaLimit {
            pi1: 0.5,
            delta: 3.0,
            rho: 0.6,
        })
        .unwrap_err();
        assert!(e.to_string().contains("rho"), "{e}");
    }
}

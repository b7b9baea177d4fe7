//! CSV tables written by `run`.
//!
//! Column order is part of the interface; the header constants are checked by tests.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use labelnoise::eval::{CellCheck, CheckStatus, ExperimentTable};
use labelnoise::plan::ExperimentKind;
use labelnoise::theory::knn_regret_ratio_limit;

pub const RESULTS_HEADER: &str =
    "experiment_id,model,noise,classifier,n,replication,risk,se,tuned_k_or_lambda,converged,seed";
pub const SUMMARY_HEADER: &str = "experiment_id,model,noise,classifier,n,replications,failures,status,risk,se,noisy_risk,noisy_se,bayes_risk,excess,lda_limit";
pub const CHECKS_HEADER: &str = "experiment_id,model,noise,classifier,n,check,margin,se,status,reason";
pub const REGRET_HEADER: &str =
    "experiment_id,model,noise,classifier,n,k_coupling,ratio,se,noisy_excess,clean_excess,unstable,limit";
pub const THEORY_HEADER: &str = "experiment_id,model,noise,quantity,value";

#[derive(Serialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub model: String,
    pub noise: String,
    pub classifier: String,
    pub n: usize,
    pub replication: usize,
    pub risk: Option<f64>,
    pub se: Option<f64>,
    pub tuned_k_or_lambda: Option<f64>,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Serialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    pub model: String,
    pub noise: String,
    pub classifier: String,
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub status: &'static str,
    pub risk: Option<f64>,
    pub se: Option<f64>,
    pub noisy_risk: Option<f64>,
    pub noisy_se: Option<f64>,
    pub bayes_risk: f64,
    pub excess: Option<f64>,
    pub lda_limit: Option<f64>,
}

#[derive(Serialize)]
pub struct CheckRow {
    pub experiment_id: String,
    pub model: String,
    pub noise: String,
    pub classifier: String,
    pub n: usize,
    pub check: &'static str,
    pub margin: Option<f64>,
    pub se: Option<f64>,
    pub status: &'static str,
    pub reason: String,
}

#[derive(Serialize)]
pub struct RegretRow {
    pub experiment_id: String,
    pub model: String,
    pub noise: String,
    pub classifier: String,
    pub n: usize,
    pub k_coupling: &'static str,
    pub ratio: f64,
    pub se: f64,
    pub noisy_excess: f64,
    pub clean_excess: f64,
    pub unstable: bool,
    pub limit: Option<f64>,
}

#[derive(Serialize)]
pub struct TheoryRow {
    pub experiment_id: String,
    pub model: String,
    pub noise: String,
    pub quantity: &'static str,
    pub value: f64,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn result_rows(t: &ExperimentTable) -> Vec<ResultRow> {
    let n_test = t.plan.experiment.n_test as f64;
    t.records
        .iter()
        .map(|r| {
            let ok = r.outcome.as_ref().ok();
            ResultRow {
                experiment_id: t.plan.experiment.id.clone(),
                model: t.plan.model.label(),
                noise: t.noise_label(r.noise),
                classifier: t.classifier_label(r.classifier),
                n: r.n,
                replication: r.replication,
                risk: ok.map(|o| o.risk),
                se: ok.map(|o| (o.risk * (1.0 - o.risk) / n_test).sqrt()),
                tuned_k_or_lambda: ok.and_then(|o| o.tuned),
                converged: ok.is_some_and(|o| o.converged),
                seed: r.seed,
            }
        })
        .collect()
}

pub fn summary_rows(t: &ExperimentTable) -> Vec<SummaryRow> {
    t.cells()
        .into_iter()
        .map(|c| {
            let is_lda = t.plan.classifiers[c.classifier] == labelnoise::plan::ClassifierConfig::Lda;
            SummaryRow {
                experiment_id: t.plan.experiment.id.clone(),
                model: t.plan.model.label(),
                noise: t.noise_label(c.noise),
                classifier: t.classifier_label(c.classifier),
                n: c.n,
                replications: c.successes,
                failures: c.failures,
                status: match c.status {
                    labelnoise::eval::CellStatus::Ok => "ok",
                    labelnoise::eval::CellStatus::Insufficient => "insufficient",
                },
                risk: c.risk.map(|r| r.mean),
                se: c.risk.map(|r| r.se),
                noisy_risk: c.noisy_risk.map(|r| r.mean),
                noisy_se: c.noisy_risk.map(|r| r.se),
                bayes_risk: t.bayes_risk,
                excess: c.risk.map(|r| r.mean - t.bayes_risk),
                lda_limit: if is_lda { t.lda_limit(c.noise) } else { None },
            }
        })
        .collect()
}

fn check_rows(t: &ExperimentTable, name: &'static str, checks: Vec<CellCheck>) -> Vec<CheckRow> {
    checks
        .into_iter()
        .map(|c| {
            let (status, reason) = match &c.record.status {
                CheckStatus::Holds => ("holds", String::new()),
                CheckStatus::Violated => ("violated", String::new()),
                CheckStatus::Skipped(why) => ("skipped", why.clone()),
            };
            CheckRow {
                experiment_id: t.plan.experiment.id.clone(),
                model: t.plan.model.label(),
                noise: t.noise_label(c.noise),
                classifier: t.classifier_label(c.classifier),
                n: c.n,
                check: name,
                margin: finite(c.record.margin),
                se: finite(c.record.standard_error),
                status,
                reason,
            }
        })
        .collect()
}

pub fn regret_rows(t: &ExperimentTable) -> Result<Vec<RegretRow>> {
    Ok(t.regret_ratios()?
        .into_iter()
        .map(|r| RegretRow {
            experiment_id: t.plan.experiment.id.clone(),
            model: t.plan.model.label(),
            noise: t.noise_label(r.noise),
            classifier: t.classifier_label(r.classifier),
            n: r.n,
            k_coupling: r.k_coupling.label(),
            ratio: r.ratio.ratio,
            se: r.ratio.standard_error,
            noisy_excess: r.ratio.numerator.excess,
            clean_excess: r.ratio.denominator.excess,
            unstable: r.ratio.unstable,
            limit: r.limit,
        })
        .collect())
}

/// Closed-form values to overlay on the simulated curves.
pub fn theory_rows(t: &ExperimentTable) -> Vec<TheoryRow> {
    let row = |noise: String, quantity, value| TheoryRow {
        experiment_id: t.plan.experiment.id.clone(),
        model: t.plan.model.label(),
        noise,
        quantity,
        value,
    };
    let mut rows = vec![row("none".into(), "bayes_risk", t.bayes_risk)];
    let d = t.model.dim();
    for (s, noise) in t.plan.noises.iter().enumerate() {
        if noise.is_none() {
            continue;
        }
        rows.push(row(t.noise_label(s), "noisy_bayes_risk", t.noisy_bayes_risk[s]));
        if let Some(limit) = t.lda_limit(s) {
            rows.push(row(t.noise_label(s), "lda_limit_risk", limit));
        }
        if t.plan.experiment.kind == ExperimentKind::RegretRatio {
            if let Some(limit) = noise
                .spec()
                .boundary_profile()
                .and_then(|(g, g_dot)| knn_regret_ratio_limit(g, g_dot, d).ok())
            {
                rows.push(row(t.noise_label(s), "knn_regret_ratio_limit", limit));
            }
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, header: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes results, summary, checks, regret_ratio and theory tables for all runs.
pub fn write_all(tables: &[ExperimentTable], out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut results = Vec::new();
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    let mut regret = Vec::new();
    let mut theory = Vec::new();
    for t in tables {
        results.extend(result_rows(t));
        summary.extend(summary_rows(t));
        checks.extend(check_rows(t, "homogeneous-identity", t.identity_checks()));
        checks.extend(check_rows(t, "transfer-bound", t.transfer_bound_checks()));
        if t.plan.experiment.kind == ExperimentKind::RegretRatio {
            regret.extend(regret_rows(t)?);
        }
        theory.extend(theory_rows(t));
    }
    write_csv(&out.join("results.csv"), RESULTS_HEADER, &results)?;
    write_csv(&out.join("summary.csv"), SUMMARY_HEADER, &summary)?;
    write_csv(&out.join("checks.csv"), CHECKS_HEADER, &checks)?;
    write_csv(&out.join("theory.csv"), THEORY_HEADER, &theory)?;
    if !regret.is_empty() {
        write_csv(&out.join("regret_ratio.csv"), REGRET_HEADER, &regret)?;
    }
    Ok(())
}

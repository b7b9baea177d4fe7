//! Front end for the `labelnoise` binary: experiment runs, closed-form calculators and SVG plots.

pub mod output;
pub mod plot;
pub mod theory_cmd;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use labelnoise::eval::{run_replicated, CheckStatus};
use labelnoise::plan::{preset, ExperimentPlan, PRESETS};

pub use plot::PlotKind;

#[derive(Debug, Parser)]
#[command(name = "labelnoise", version, about = "Classification with noisy training labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a replicated experiment and write CSV tables.
    Run(RunArgs),
    /// Evaluate a closed-form quantity.
    Theory {
        #[command(subcommand)]
        quantity: theory_cmd::TheoryCommand,
    },
    /// Render a results CSV as an SVG figure.
    Plot {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct RunArgs {
    /// TOML experiment file.
    #[arg(long, group = "source")]
    pub config: Option<PathBuf>,
    /// Built-in experiment.
    #[arg(long, group = "source", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, overriding the plan's.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the full replication count instead of the desk-scale one.
    #[arg(long)]
    pub full: bool,
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let (plans, out) = load_plans(&args)?;
            let report = run_plans(&plans, &out)?;
            print!("{}", report.text);
            if report.failed_replications > 0 {
                eprintln!(
                    "warning: {} replication fits failed; see the failures column of summary.csv",
                    report.failed_replications
                );
            }
            Ok(0)
        }
        Command::Theory { quantity } => match theory_cmd::evaluate(&quantity) {
            Ok(text) => {
                println!("{text}");
                Ok(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(2)
            }
        },
        Command::Plot { csv, kind, out } => {
            plot::plot_file(&csv, kind, &out)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

/// Plans with command-line overrides applied, plus the output directory.
pub fn load_plans(args: &RunArgs) -> Result<(Vec<ExperimentPlan>, PathBuf)> {
    let mut plans = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let plan = ExperimentPlan::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
            vec![plan]
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!("one of --config or --preset is required"),
    };
    for plan in &mut plans {
        if let Some(seed) = args.seed {
            plan.experiment.seed = seed;
        }
        if let Some(threads) = args.threads {
            plan.experiment.threads = threads;
        }
        if args.full {
            plan.full_scale();
        }
        plan.validate()?;
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&plans[0].experiment.output_dir));
    Ok((plans, out))
}

pub struct RunReport {
    pub failed_replications: usize,
    pub identity_violations: usize,
    pub bound_violations: usize,
    /// Human-readable digest printed after the run.
    pub text: String,
}

/// Runs every plan and writes the CSV tables into `out`.
pub fn run_plans(plans: &[ExperimentPlan], out: &Path) -> Result<RunReport> {
    let mut tables = Vec::with_capacity(plans.len());
    for plan in plans {
        log::info!("running {}", plan.experiment.id);
        tables.push(run_replicated(plan).with_context(|| format!("experiment {}", plan.experiment.id))?);
    }
    output::write_all(&tables, out)?;

    let mut text = String::new();
    let mut report = RunReport {
        failed_replications: 0,
        identity_violations: 0,
        bound_violations: 0,
        text: String::new(),
    };
    for t in &tables {
        text.push_str(&format!(
            "{} {} (Bayes risk {:.4})\n",
            t.plan.experiment.id,
            t.plan.model.label(),
            t.bayes_risk
        ));
        for cell in t.cells() {
            report.failed_replications += cell.failures;
            let value = match cell.risk {
                Some(r) => format!("{:.4} +- {:.4}", r.mean, r.se),
                None => "insufficient".into(),
            };
            text.push_str(&format!(
                "  n={:<6} {:<22} {:<36} {value}\n",
                cell.n,
                t.classifier_label(cell.classifier),
                t.noise_label(cell.noise)
            ));
        }
        let identity = t.identity_checks();
        let bound = t.transfer_bound_checks();
        let count = |v: &[labelnoise::eval::CellCheck], s: fn(&CheckStatus) -> bool| v.iter().filter(|c| s(&c.record.status)).count();
        let l_bad = count(&identity, |s| *s == CheckStatus::Violated);
        let t_bad = count(&bound, |s| *s == CheckStatus::Violated);
        let t_skip = count(&bound, |s| matches!(s, CheckStatus::Skipped(_)));
        report.identity_violations += l_bad;
        report.bound_violations += t_bad;
        text.push_str(&format!(
            "  homogeneous-noise identity: {l_bad} violations in {} cells\n",
            identity.len()
        ));
        text.push_str(&format!(
            "  excess-risk transfer bound: {t_bad} violations in {} cells ({t_skip} skipped)\n",
            bound.len()
        ));
        if t.plan.experiment.kind == labelnoise::plan::ExperimentKind::RegretRatio {
            for r in t.regret_ratios()? {
                text.push_str(&format!(
                    "  ratio n={:<6} {:<36} {:.3} +- {:.3}{}{}\n",
                    r.n,
                    t.noise_label(r.noise),
                    r.ratio.ratio,
                    r.ratio.standard_error,
                    r.limit.map(|l| format!(" (limit {l:.3})")).unwrap_or_default(),
                    if r.ratio.unstable { " unstable" } else { "" }
                ));
            }
        }
    }
    text.push_str(&format!("wrote tables to {}\n", out.display()));
    report.text = text;
    Ok(report)
}

use std::fs;
use std::path::Path;
use std::process::Command;

use labelnoise::plan::{preset, PRESETS};
use labelnoise_cli::plot::{figure_from_csv, render_svg, PlotKind};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_labelnoise"))
}

const SMALL: &str = r#"
[experiment]
id = "small"
replications = 4
n_grid = [40, 80]
n_test = 300

[model]
kind = "model1"
d = 2
pi1 = 0.5

[[noise]]
kind = "none"

[[noise]]
kind = "homogeneous"
rho = 0.2

[[classifier]]
kind = "knn"

[[classifier]]
kind = "svm"
tuning = { mode = "cv", grid = [0.01, 0.1], folds = 4 }

[[classifier]]
kind = "lda"
"#;

const REGRET: &str = r#"
[experiment]
id = "ratios"
kind = "regret-ratio"
replications = 4
n_grid = [60]
n_test = 300

[model]
kind = "model2"
d = 2

[[noise]]
kind = "none"

[[noise]]
kind = "boundary-consistent"
g0 = 0.1
h0 = 3.0

[[classifier]]
kind = "knn"
"#;

fn run_config(dir: &Path, name: &str, text: &str, extra: &[&str]) -> std::process::Output {
    let config = dir.join(format!("{name}.toml"));
    fs::write(&config, text).unwrap();
    bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join(name))
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn csv_headers_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config(dir.path(), "small", SMALL, &[]).status.success());
    assert!(run_config(dir.path(), "ratios", REGRET, &[]).status.success());
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (run, file) in [
        ("small", "results.csv"),
        ("small", "summary.csv"),
        ("small", "checks.csv"),
        ("small", "theory.csv"),
        ("ratios", "regret_ratio.csv"),
    ] {
        let written = fs::read_to_string(dir.path().join(run).join(file)).unwrap();
        let expected = fs::read_to_string(golden.join(format!("{file}.header"))).unwrap();
        assert_eq!(written.lines().next().unwrap(), expected.trim_end(), "{file}");
        assert!(!written.contains('\r'));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_config(dir.path(), "a", SMALL, &["--threads", "1"]);
    let b = run_config(dir.path(), "b", SMALL, &["--threads", "2"]);
    assert!(a.status.success() && b.status.success());
    for file in ["results.csv", "summary.csv", "checks.csv", "theory.csv"] {
        let x = fs::read(dir.path().join("a").join(file)).unwrap();
        let y = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
    let c = run_config(dir.path(), "c", SMALL, &["--seed", "99"]);
    assert!(c.status.success());
    assert_ne!(
        fs::read(dir.path().join("a/results.csv")).unwrap(),
        fs::read(dir.path().join("c/results.csv")).unwrap()
    );
}

#[test]
fn results_rows_cover_every_replication() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config(dir.path(), "small", SMALL, &[]).status.success());
    let text = fs::read_to_string(dir.path().join("small/results.csv")).unwrap();
    // 2 sizes x 4 replications x 3 classifiers x 2 noise settings
    assert_eq!(text.lines().count(), 1 + 2 * 4 * 3 * 2);
    let summary = fs::read_to_string(dir.path().join("small/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3 * 2);
    let lda_noisy = summary
        .lines()
        .find(|l| l.contains(",homogeneous(rho=0.2),lda,"))
        .unwrap();
    assert!(!lda_noisy.ends_with(','), "LDA rows carry the limiting risk: {lda_noisy}");
}

#[test]
fn malformed_configs_fail_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), "bad", "[experiment]\nreplications = \"many\"\n", &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
    let out = run_config(dir.path(), "unknown", "[experiment]\nid = \"x\"\ncolour = 1\n", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn theory_subcommands() {
    let out = bin().args(["theory", "regret-ratio", "--g0", "0.1", "--h0", "0", "--d", "5"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("regret_ratio = 1.219"), "{text}");
    let out = bin()
        .args(["theory", "lda-limit", "--pi1", "0.5", "--delta", "3", "--rho", "0.3"])
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("lda_limit_risk = 0.0668"));
    let out = bin().args(["theory", "gamma", "--gamma1", "1", "--gamma2", "1"]).output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("gamma = 0.333333"));
    let out = bin()
        .args(["theory", "regret-ratio", "--g0", "0.3", "--h0", "-2", "--d", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("must be positive"));
}

#[test]
fn every_preset_loads() {
    for name in PRESETS {
        let plans = preset(name).unwrap();
        assert!(!plans.is_empty());
        for p in plans {
            p.validate().unwrap();
        }
    }
    let out = bin().args(["run", "--preset", "figure9"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn empty_csv_writes_no_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "").unwrap();
    let svg = dir.path().join("out.svg");
    let out = bin()
        .arg("plot")
        .arg(&csv)
        .args(["--kind", "risk-curves", "--out"])
        .arg(&svg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!svg.exists());
    fs::write(&csv, "n,risk\n100,0.1\n").unwrap();
    let out = bin()
        .arg("plot")
        .arg(&csv)
        .args(["--kind", "risk-curves", "--out"])
        .arg(&svg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment_id,noise,classifier,n,risk,bayes_risk"));
    assert!(!svg.exists());
}

#[test]
fn lda_limit_plot_from_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[experiment]
id = "lda"
replications = 3
n_grid = [100, 300]
n_test = 300

[model]
kind = "model1"
d = 5
pi1 = 0.9

[[noise]]
kind = "none"
[[noise]]
kind = "homogeneous"
rho = 0.1
[[noise]]
kind = "homogeneous"
rho = 0.2
[[noise]]
kind = "homogeneous"
rho = 0.3
[[noise]]
kind = "homogeneous"
rho = 0.4

[[classifier]]
kind = "lda"
"#;
    assert!(run_config(dir.path(), "lda", config, &[]).status.success());
    let theory = fs::read_to_string(dir.path().join("lda/theory.csv")).unwrap();
    assert_eq!(theory.matches("lda_limit_risk").count(), 4);
    let svg = dir.path().join("lda.svg");
    let out = bin()
        .arg("plot")
        .arg(dir.path().join("lda/summary.csv"))
        .args(["--kind", "lda-limit", "--out"])
        .arg(&svg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let svg = fs::read_to_string(svg).unwrap();
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains(r#"version="1.1""#));
    assert_eq!(svg.matches(r#"class="series""#).count(), 4);
    // four limit lines and the Bayes line
    assert_eq!(svg.matches(r#"class="guide""#).count(), 5);
}

#[test]
fn regret_ratio_plot_has_one_curve_per_setting() {
    let mut csv = String::from("experiment_id,model,noise,classifier,n,k_coupling,ratio,se,noisy_excess,clean_excess,unstable,limit\n");
    let limits = [(0.0, 1.2194), (-1.0, 1.3731), (1.0, 1.0990), (2.0, 1.0), (3.0, 0.9191)];
    for (h0, limit) in limits {
        for (n, r) in [(200, 1.3), (2000, 1.1)] {
            csv.push_str(&format!(
                "e,m,boundary-consistent(g0=0.1;h0={h0}),knn-cv,{n},cv-separate,{r},0.05,0.01,0.01,false,{limit}\n"
            ));
        }
    }
    let fig = figure_from_csv(&csv, PlotKind::RegretRatio).unwrap();
    assert_eq!(fig.series.len(), 5);
    let mut guides: Vec<f64> = fig.guides.iter().map(|g| (g.value * 100.0).round() / 100.0).collect();
    guides.sort_by(f64::total_cmp);
    assert_eq!(guides, vec![0.92, 1.0, 1.1, 1.22, 1.37]);
    let svg = render_svg(&fig, PlotKind::RegretRatio);
    assert_eq!(svg.matches(r#"class="series""#).count(), 5);
    assert_eq!(svg, render_svg(&fig, PlotKind::RegretRatio));
}

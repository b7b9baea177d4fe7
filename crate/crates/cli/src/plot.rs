//! Hand-written SVG 1.1 figures from the CSV tables.
//!
//! The markup uses fixed-precision coordinates and sorted series, so the same
//! input always yields the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Risk against n per (classifier, noise), from summary.csv.
    RiskCurves,
    /// Regret ratio against n per noise setting, from regret_ratio.csv.
    RegretRatio,
    /// LDA risk against n with its limiting risk, from summary.csv.
    LdaLimit,
}

impl PlotKind {
    fn required(self) -> &'static [&'static str] {
        match self {
            PlotKind::RiskCurves => &["experiment_id", "noise", "classifier", "n", "risk", "bayes_risk"],
            PlotKind::LdaLimit => &["experiment_id", "noise", "classifier", "n", "risk", "bayes_risk", "lda_limit"],
            PlotKind::RegretRatio => &["experiment_id", "noise", "classifier", "n", "ratio", "limit"],
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            PlotKind::RegretRatio => "regret ratio",
            _ => "risk",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guide {
    pub label: String,
    pub value: f64,
}

/// Curves and horizontal reference lines ready to draw.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub guides: Vec<Guide>,
}

fn parse_opt(s: &str, column: &str, line: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| anyhow!("line {line}: column {column} holds {s:?}, not a number"))
}

/// Reads the series and guides of `kind` from CSV text.
pub fn figure_from_csv(text: &str, kind: PlotKind) -> Result<Figure> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().context("reading CSV header")?.clone();
    let required = kind.required();
    let mut col = BTreeMap::new();
    for &name in required {
        match header.iter().position(|h| h == name) {
            Some(i) => {
                col.insert(name, i);
            }
            None => bail!(
                "column {name:?} missing; a {} plot expects a header containing {}",
                kind.to_possible_value().expect("value").get_name(),
                required.join(",")
            ),
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.context("reading CSV record")?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |name: &str| rec.get(col[name]).unwrap_or("");
        rows.push((line, get("experiment_id").to_string(), get("noise").to_string(), get("classifier").to_string(), {
            let mut values = BTreeMap::new();
            for &name in required.iter().filter(|n| !matches!(**n, "experiment_id" | "noise" | "classifier")) {
                values.insert(name, parse_opt(get(name), name, line)?);
            }
            values
        }));
    }
    if rows.is_empty() {
        bail!("the CSV has no data rows");
    }
    let ids: BTreeSet<&str> = rows.iter().map(|r| r.1.as_str()).collect();
    let multi = ids.len() > 1;

    let mut fig = Figure::default();
    let mut guides: BTreeMap<String, f64> = BTreeMap::new();
    for (_, id, noise, classifier, v) in &rows {
        if kind == PlotKind::LdaLimit && (classifier != "lda" || noise == "none") {
            continue;
        }
        let prefix = if multi { format!("{id} ") } else { String::new() };
        let key = match kind {
            PlotKind::RiskCurves => format!("{prefix}{classifier} {noise}"),
            PlotKind::LdaLimit => format!("{prefix}{noise}"),
            PlotKind::RegretRatio => format!("{prefix}{classifier} {noise}"),
        };
        let y = match kind {
            PlotKind::RegretRatio => v["ratio"],
            _ => v["risk"],
        };
        if let (Some(n), Some(y)) = (v["n"], y) {
            fig.series.entry(key).or_default().push((n, y));
        }
        match kind {
            PlotKind::RiskCurves | PlotKind::LdaLimit => {
                if let Some(b) = v["bayes_risk"] {
                    guides.insert(format!("{prefix}Bayes risk"), b);
                }
                if kind == PlotKind::LdaLimit {
                    if let Some(l) = v["lda_limit"] {
                        guides.insert(format!("{prefix}limit {noise}"), l);
                    }
                }
            }
            PlotKind::RegretRatio => {
                if let Some(l) = v["limit"] {
                    guides.insert(format!("{prefix}limit {noise}"), l);
                }
            }
        }
    }
    if fig.series.is_empty() {
        bail!("no rows of the CSV belong in a {:?} plot", kind);
    }
    for points in fig.series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    fig.guides = guides.into_iter().map(|(label, value)| Guide { label, value }).collect();
    Ok(fig)
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 330.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// SVG markup for `fig` with a log-scaled n axis.
pub fn render_svg(fig: &Figure, kind: PlotKind) -> String {
    let xs = fig.series.values().flatten().map(|p| p.0);
    let (mut x_lo, mut x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if x_lo <= 0.0 {
        x_lo = 1.0;
    }
    if x_hi <= x_lo {
        x_hi = x_lo * 10.0;
    }
    let ys = fig.series.values().flatten().map(|p| p.1).chain(fig.guides.iter().map(|g| g.value));
    let (mut y_lo, mut y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let pad = ((y_hi - y_lo) * 0.05).max(1e-3);
    y_lo -= pad;
    y_hi += pad;
    let (w, h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let (lx_lo, lx_hi) = (x_lo.log10(), x_hi.log10());
    let px = |x: f64| LEFT + (x.max(x_lo).log10() - lx_lo) / (lx_hi - lx_lo) * w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#
    );

    // decade ticks with 2 and 5 subdivisions
    let mut decade = 10f64.powf(lx_lo.floor());
    while decade <= x_hi * 1.0001 {
        for m in [1.0, 2.0, 5.0] {
            let x = decade * m;
            if x >= x_lo * 0.9999 && x <= x_hi * 1.0001 {
                let xp = px(x);
                let _ = writeln!(
                    s,
                    r#"<line x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/><text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                    TOP + h,
                    TOP + h + 5.0,
                    TOP + h + 18.0,
                    tick_label(x)
                );
            }
        }
        decade *= 10.0;
    }
    for i in 0..=5 {
        let y = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let yp = py(y);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{yp:.2}" x2="{LEFT}" y2="{yp:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            yp + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n (log scale)</text>"#,
        LEFT + w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + h / 2.0,
        TOP + h / 2.0,
        kind.y_label()
    );

    let legend_x = LEFT + w + 20.0;
    let mut legend_y = TOP + 10.0;
    for (i, (label, points)) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in points {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
        }
        let _ = writeln!(
            s,
            r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            legend_x + 20.0,
            legend_x + 26.0,
            legend_y + 4.0,
            escape(label)
        );
        legend_y += 16.0;
    }
    for g in &fig.guides {
        let yp = py(g.value);
        let _ = writeln!(
            s,
            r#"<line class="guide" x1="{LEFT}" y1="{yp:.2}" x2="{:.2}" y2="{yp:.2}" stroke="gray" stroke-dasharray="2,3"/>"#,
            LEFT + w
        );
        let _ = writeln!(
            s,
            r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="gray" stroke-dasharray="2,3"/><text x="{:.2}" y="{:.2}">{} = {}</text>"#,
            legend_x + 20.0,
            legend_x + 26.0,
            legend_y + 4.0,
            escape(&g.label),
            tick_label(g.value)
        );
        legend_y += 16.0;
    }
    s.push_str("</svg>\n");
    s
}

/// Reads `csv`, renders it and writes `out`; nothing is written on error.
pub fn plot_file(csv: &Path, kind: PlotKind, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    let fig = figure_from_csv(&text, kind).with_context(|| format!("in {}", csv.display()))?;
    let svg = render_svg(&fig, kind);
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUMMARY: &str = "experiment_id,noise,classifier,n,risk,bayes_risk,lda_limit
fig3,none,lda,100,0.05,0.0337,
fig3,none,lda,1000,0.04,0.0337,
fig3,homogeneous(rho=0.1),lda,100,0.08,0.0337,0.06
fig3,homogeneous(rho=0.1),lda,1000,0.07,0.0337,0.06
fig3,homogeneous(rho=0.2),lda,100,0.11,0.0337,0.09
fig3,homogeneous(rho=0.2),lda,1000,0.10,0.0337,0.09
";

    #[test]
    fn lda_limit_figure_structure() {
        let fig = figure_from_csv(SUMMARY, PlotKind::LdaLimit).unwrap();
        assert_eq!(fig.series.len(), 2);
        assert_eq!(fig.guides.len(), 3);
        let svg = render_svg(&fig, PlotKind::LdaLimit);
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert_eq!(svg.matches(r#"class="guide""#).count(), 3);
        assert_eq!(svg, render_svg(&fig, PlotKind::LdaLimit));
    }

    #[test]
    fn risk_curves_keep_every_cell() {
        let fig = figure_from_csv(SUMMARY, PlotKind::RiskCurves).unwrap();
        assert_eq!(fig.series.len(), 3);
        assert_eq!(fig.guides.len(), 1);
        assert_eq!(fig.series["lda none"], vec![(100.0, 0.05), (1000.0, 0.04)]);
    }

    #[test]
    fn bad_inputs() {
        let err = figure_from_csv("experiment_id,noise\n", PlotKind::RiskCurves).unwrap_err();
        assert!(err.to_string().contains("experiment_id,noise,classifier,n,risk,bayes_risk"), "{err}");
        let header_only = "experiment_id,noise,classifier,n,risk,bayes_risk\n";
        assert!(figure_from_csv(header_only, PlotKind::RiskCurves).is_err());
        let junk = "experiment_id,noise,classifier,n,risk,bayes_risk\na,b,c,x,0.1,0.1\n";
        assert!(figure_from_csv(junk, PlotKind::RiskCurves).unwrap_err().to_string().contains("not a number"));
    }

    #[test]
    fn labels_are_escaped() {
        assert_eq!(escape("a<b&\"c\""), "a&lt;b&amp;&quot;c&quot;");
        assert_eq!(tick_label(0.25), "0.25");
        assert_eq!(tick_label(1000.0), "1000");
    }
}

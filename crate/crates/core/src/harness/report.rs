//! Summary JSON and SVG regret plots, from in-memory traces or a run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Method;
use crate::harness::regret::{Band, RegretSummary};
use crate::harness::stats::{bonferroni, wilcoxon_signed_rank};
use crate::trace::Trace;

pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub objective: String,
    pub optimum: f64,
    pub hypotheses: Vec<String>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub i_max: usize,
    pub seed: u64,
    pub band: Band,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    #[serde(flatten)]
    pub regret: RegretSummary,
}

/// Paired Wilcoxon test of HypBO against one baseline on final simple regret.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: Method,
    pub statistic: Option<f64>,
    pub n: usize,
    pub p_value: Option<f64>,
    pub exact: Option<bool>,
    pub significant: bool,
    pub significant_bonferroni: bool,
    pub hypbo_mean_lower: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub meta: Meta,
    pub alpha: f64,
    pub alpha_bonferroni: f64,
    pub methods: Vec<MethodResult>,
    pub comparisons: Vec<Comparison>,
}

impl Summary {
    pub fn method(&self, m: Method) -> Option<&RegretSummary> {
        self.methods.iter().find(|r| r.method == m).map(|r| &r.regret)
    }
}

pub fn summarize(meta: &Meta, traces: &[(Method, Vec<Trace>)]) -> Result<Summary> {
    let methods: Vec<MethodResult> = traces
        .iter()
        .map(|(m, ts)| MethodResult { method: *m, regret: RegretSummary::from_traces(ts, meta.optimum, meta.band) })
        .collect();
    let hyp = methods.iter().find(|r| r.method == Method::Hypbo);
    let baselines: Vec<&MethodResult> = methods.iter().filter(|r| r.method != Method::Hypbo).collect();
    let alpha_bonferroni = bonferroni(ALPHA, baselines.len().max(1))?;
    let mut comparisons = Vec::new();
    if let Some(h) = hyp {
        for b in baselines {
            let pairs: Vec<(f64, f64)> = h
                .regret
                .final_simple_regret
                .iter()
                .copied()
                .zip(b.regret.final_simple_regret.iter().copied())
                .collect();
            let lower = h.regret.mean_final_simple_regret < b.regret.mean_final_simple_regret;
            let c = match wilcoxon_signed_rank(&pairs) {
                Ok(w) => Comparison {
                    baseline: b.method,
                    statistic: Some(w.statistic),
                    n: w.n,
                    p_value: Some(w.p_value),
                    exact: Some(w.exact),
                    significant: w.p_value < ALPHA,
                    significant_bonferroni: w.p_value < alpha_bonferroni,
                    hypbo_mean_lower: lower,
                    note: None,
                },
                Err(e) => Comparison {
                    baseline: b.method,
                    statistic: None,
                    n: pairs.iter().filter(|(a, b)| a != b).count(),
                    p_value: None,
                    exact: None,
                    significant: false,
                    significant_bonferroni: false,
                    hypbo_mean_lower: lower,
                    note: Some(e.to_string()),
                },
            };
            comparisons.push(c);
        }
    }
    Ok(Summary { meta: meta.clone(), alpha: ALPHA, alpha_bonferroni, methods, comparisons })
}

pub fn trace_path(dir: &Path, method: Method, trial: usize) -> PathBuf {
    dir.join("traces").join(format!("{method}_trial{trial:03}.csv"))
}

/// Writes per-trial traces, `meta.json`, `summary.json` and `regret.svg`.
pub fn write_all(dir: &Path, meta: &Meta, traces: &[(Method, Vec<Trace>)]) -> Result<Summary> {
    std::fs::create_dir_all(dir.join("traces"))?;
    for (m, ts) in traces {
        for (t, trace) in ts.iter().enumerate() {
            std::fs::write(trace_path(dir, *m, t), trace.to_csv_string(t))?;
        }
    }
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(meta)? + "\n")?;
    write_reports(dir, meta, traces)
}

fn write_reports(dir: &Path, meta: &Meta, traces: &[(Method, Vec<Trace>)]) -> Result<Summary> {
    let summary = summarize(meta, traces)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    std::fs::write(dir.join("regret.svg"), regret_svg(&summary))?;
    Ok(summary)
}

/// Rebuilds `summary.json` and `regret.svg` from `meta.json` and the trace CSVs.
pub fn regenerate(dir: &Path) -> Result<Summary> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: Meta = serde_json::from_str(&text)?;
    let mut traces = Vec::new();
    for m in &meta.methods {
        let mut ts = Vec::with_capacity(meta.trials);
        for t in 0..meta.trials {
            let p = trace_path(dir, *m, t);
            let file = std::fs::File::open(&p).map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
            ts.push(Trace::read_csv(file)?.1);
        }
        traces.push((*m, ts));
    }
    write_reports(dir, &meta, &traces)
}

const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Mean simple regret per method with a shaded spread band.
pub fn regret_svg(summary: &Summary) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (80.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let len = summary.methods.iter().map(|r| r.regret.mean_simple_regret.len()).max().unwrap_or(0).max(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &summary.methods {
        for (m, b) in r.regret.mean_simple_regret.iter().zip(&r.regret.band_simple_regret) {
            if m.is_finite() && b.is_finite() {
                lo = lo.min(m - b);
                hi = hi.max(m + b);
            }
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-300 {
        hi = lo + 1.0;
    }
    let sx = |i: usize| left + if len > 1 { pw * i as f64 / (len - 1) as f64 } else { 0.0 };
    let sy = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">Simple regret: {}</text>"#,
        left + pw / 2.0,
        escape(&summary.meta.objective)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2e}</text>"#,
            left - 8.0,
            y + 4.0
        );
        let i = ((len - 1) as f64 * k as f64 / 4.0).round() as usize;
        let x = sx(i);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            i + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#,
        left + pw / 2.0,
        h - 10.0
    );

    for (k, r) in summary.methods.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mean = &r.regret.mean_simple_regret;
        let band = &r.regret.band_simple_regret;
        let upper: Vec<String> = (0..mean.len()).map(|i| format!("{:.2},{:.2}", sx(i), sy(mean[i] + band[i]))).collect();
        let lower: Vec<String> =
            (0..mean.len()).rev().map(|i| format!("{:.2},{:.2}", sx(i), sy(mean[i] - band[i]))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = (0..mean.len()).map(|i| format!("{:.2},{:.2}", sx(i), sy(mean[i]))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 16.0 + 20.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 12.0,
            left + pw + 36.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            left + pw + 42.0,
            ly + 4.0,
            r.method
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

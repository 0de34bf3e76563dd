//! Batch reports: per-arm summaries, significance against the control arm,
//! marginals over every sweep axis and accuracy grids, rendered as text and
//! written as CSV next to the metrics.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use crate::config::{ArmConfig, ExperimentConfig};
use crate::harness::{read_metrics, HarnessError, RunMetrics};
use crate::summary::{compare, grid, marginal, summarize, write_comparison_csv, write_summary_csv, Comparison, Summary};

#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    pub summaries: Vec<Summary>,
    pub comparisons: Vec<Comparison>,
    pub marginals: Vec<(String, Vec<Summary>)>,
    pub grids: Vec<(String, String, Vec<(String, Vec<(String, f64)>)>)>,
}

/// Pairs of axes worth a capture-ratio matrix when both are swept.
const GRID_AXES: [(&str, &str); 2] = [("eta", "assumed_eta"), ("eta", "sketch_period")];

/// Loads the configuration and metrics a batch left in `dir`.
pub fn load_results(dir: &Path) -> Result<(ExperimentConfig, Vec<RunMetrics>), HarnessError> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let table = read_metrics(&dir.join("metrics.jsonl"))?;
    Ok((cfg, table))
}

pub fn build_report(cfg: &ExperimentConfig, table: &[RunMetrics], control: Option<&str>) -> Result<Report, HarnessError> {
    let arms = cfg.expanded_arms()?;
    let summaries = summarize(table);
    let control = control.or(cfg.control.as_deref());
    let comparisons = control.map(|c| compare(&summaries, c)).unwrap_or_default();
    let mut axes: Vec<String> = Vec::new();
    for arm in &arms {
        for k in arm.axes.keys() {
            if !axes.contains(k) {
                axes.push(k.clone());
            }
        }
    }
    let marginals = axes.iter().map(|a| (a.clone(), marginal(table, &arms, a))).collect();
    let grids = GRID_AXES
        .iter()
        .filter(|(r, c)| has_axis(&arms, r) && has_axis(&arms, c))
        .map(|(r, c)| (r.to_string(), c.to_string(), grid(table, &arms, r, c)))
        .collect();
    Ok(Report { name: cfg.name.clone(), summaries, comparisons, marginals, grids })
}

fn has_axis(arms: &[ArmConfig], axis: &str) -> bool {
    arms.iter().any(|a| a.axes.contains_key(axis))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

fn summary_rows(out: &mut String, rows: &[Summary]) {
    let width = rows.iter().map(|s| s.group.len()).max().unwrap_or(5).max(5);
    let _ = writeln!(
        out,
        "{:<width$}  {:>5}  {:>8}  {:>7}  {:>8}  {:>8}  {:>7}  {:>8}  {:>8}",
        "group", "runs", "captured", "ratio", "mean ttc", "med ttc", "asked", "answered", "failures"
    );
    for s in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>5}  {:>8}  {:>7.3}  {:>8}  {:>8}  {:>7.1}  {:>8.1}  {:>8}",
            s.group,
            s.runs,
            s.captures,
            s.capture_ratio,
            opt(s.mean_ttc),
            opt(s.median_ttc),
            s.mean_queries_asked,
            s.mean_queries_answered,
            s.failures
        );
    }
}

impl Report {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.name);
        summary_rows(&mut out, &self.summaries);
        if !self.comparisons.is_empty() {
            let _ = writeln!(out, "\nagainst {} (Fisher exact):", self.comparisons[0].control);
            for c in &self.comparisons {
                let _ = writeln!(
                    out,
                    "  {:<32} {:>3}/{:<3} vs {:>3}/{:<3}  p(better)={:.4}  p(worse)={:.4}  p(two-sided)={:.4}",
                    c.arm, c.captures, c.runs, c.control_captures, c.control_runs, c.p_better, c.p_worse, c.p_two_sided
                );
            }
        }
        for (axis, rows) in &self.marginals {
            let _ = writeln!(out, "\nmarginal over {axis}:");
            summary_rows(&mut out, rows);
        }
        for (r, c, rows) in &self.grids {
            let _ = writeln!(out, "\ncapture ratio, rows {r}, columns {c}:");
            if let Some((_, first)) = rows.first() {
                let header: Vec<String> = first.iter().map(|(k, _)| format!("{k:>8}")).collect();
                let _ = writeln!(out, "{:>8}  {}", "", header.join(" "));
            }
            for (rv, cols) in rows {
                let cells: Vec<String> = cols.iter().map(|(_, v)| format!("{v:>8.3}")).collect();
                let _ = writeln!(out, "{rv:>8}  {}", cells.join(" "));
            }
        }
        out
    }

    /// Writes `summary.csv`, `comparison.csv` and `marginal_<axis>.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        write_summary_csv(&self.summaries, File::create(dir.join("summary.csv"))?)?;
        if !self.comparisons.is_empty() {
            write_comparison_csv(&self.comparisons, File::create(dir.join("comparison.csv"))?)?;
        }
        for (axis, rows) in &self.marginals {
            write_summary_csv(rows, File::create(dir.join(format!("marginal_{axis}.csv")))?)?;
        }
        std::fs::write(dir.join("report.txt"), self.render())?;
        Ok(())
    }
}

//! Aggregates over metrics tables: capture ratio, time-to-capture statistics
//! (over captured runs only), interaction counts, and marginal views over
//! sweep axes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::config::ArmConfig;
use crate::harness::{HarnessError, RunMetrics};
use crate::stats::{binomial_test, binomial_test_two_sided};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Arm name, or `axis=value` for marginal rows.
    pub group: String,
    pub runs: usize,
    pub captures: usize,
    pub failures: usize,
    pub capture_ratio: f64,
    pub mean_ttc: Option<f64>,
    pub median_ttc: Option<f64>,
    pub mean_queries_asked: f64,
    pub mean_queries_answered: f64,
    pub mean_sketches: f64,
}

fn aggregate(group: String, rows: &[&RunMetrics]) -> Summary {
    let runs = rows.len();
    let captures = rows.iter().filter(|m| m.captured).count();
    let mut ttc: Vec<f64> = rows.iter().filter_map(|m| m.time_to_capture).collect();
    ttc.sort_by(f64::total_cmp);
    let mean = |f: &dyn Fn(&RunMetrics) -> f64| {
        if runs == 0 {
            0.0
        } else {
            rows.iter().map(|m| f(m)).sum::<f64>() / runs as f64
        }
    };
    let median_ttc = match ttc.len() {
        0 => None,
        n if n % 2 == 1 => Some(ttc[n / 2]),
        n => Some(0.5 * (ttc[n / 2 - 1] + ttc[n / 2])),
    };
    Summary {
        group,
        runs,
        captures,
        failures: rows.iter().filter(|m| m.error.is_some()).count(),
        capture_ratio: if runs == 0 { 0.0 } else { captures as f64 / runs as f64 },
        mean_ttc: if ttc.is_empty() { None } else { Some(ttc.iter().sum::<f64>() / ttc.len() as f64) },
        median_ttc,
        mean_queries_asked: mean(&|m| m.queries_asked as f64),
        mean_queries_answered: mean(&|m| m.queries_answered as f64),
        mean_sketches: mean(&|m| m.sketches as f64),
    }
}

/// One row per arm, in order of first appearance.
pub fn summarize(table: &[RunMetrics]) -> Vec<Summary> {
    let mut order: Vec<&str> = Vec::new();
    for m in table {
        if !order.contains(&m.arm.as_str()) {
            order.push(&m.arm);
        }
    }
    order
        .into_iter()
        .map(|arm| {
            let rows: Vec<&RunMetrics> = table.iter().filter(|m| m.arm == arm).collect();
            aggregate(arm.to_string(), &rows)
        })
        .collect()
}

/// Pools arms by their value on one sweep axis (for example the average
/// effect of true accuracy across every assumed accuracy).
pub fn marginal(table: &[RunMetrics], arms: &[ArmConfig], axis: &str) -> Vec<Summary> {
    let mut groups: BTreeMap<String, Vec<&RunMetrics>> = BTreeMap::new();
    for arm in arms {
        if let Some(value) = arm.axes.get(axis) {
            let rows = groups.entry(value.clone()).or_default();
            rows.extend(table.iter().filter(|m| m.arm == arm.name));
        }
    }
    groups.into_iter().map(|(value, rows)| aggregate(format!("{axis}={value}"), &rows)).collect()
}

/// Capture-ratio matrix over two axes, rows by `row_axis` values.
pub fn grid(table: &[RunMetrics], arms: &[ArmConfig], row_axis: &str, col_axis: &str) -> Vec<(String, Vec<(String, f64)>)> {
    let mut cells: BTreeMap<String, BTreeMap<String, Vec<&RunMetrics>>> = BTreeMap::new();
    for arm in arms {
        if let (Some(r), Some(c)) = (arm.axes.get(row_axis), arm.axes.get(col_axis)) {
            cells
                .entry(r.clone())
                .or_default()
                .entry(c.clone())
                .or_default()
                .extend(table.iter().filter(|m| m.arm == arm.name));
        }
    }
    cells
        .into_iter()
        .map(|(r, cols)| {
            let row = cols.into_iter().map(|(c, rows)| (c, aggregate(String::new(), &rows).capture_ratio)).collect();
            (r, row)
        })
        .collect()
}

/// Significance of each arm against a control arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub arm: String,
    pub control: String,
    pub captures: usize,
    pub runs: usize,
    pub control_captures: usize,
    pub control_runs: usize,
    /// One-sided: arm better than control.
    pub p_better: f64,
    /// One-sided: arm worse than control.
    pub p_worse: f64,
    pub p_two_sided: f64,
}

pub fn compare(summaries: &[Summary], control: &str) -> Vec<Comparison> {
    let Some(c) = summaries.iter().find(|s| s.group == control) else { return Vec::new() };
    summaries
        .iter()
        .filter(|s| s.group != control)
        .map(|s| {
            let (k1, n1, k2, n2) = (s.captures as u64, s.runs as u64, c.captures as u64, c.runs as u64);
            Comparison {
                arm: s.group.clone(),
                control: control.into(),
                captures: s.captures,
                runs: s.runs,
                control_captures: c.captures,
                control_runs: c.runs,
                p_better: binomial_test(k1, n1, k2, n2),
                p_worse: binomial_test(k2, n2, k1, n1),
                p_two_sided: binomial_test_two_sided(k1, n1, k2, n2),
            }
        })
        .collect()
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[Summary], out: W) -> Result<(), HarnessError> {
    write_csv(rows, out)
}

pub fn write_comparison_csv<W: Write>(rows: &[Comparison], out: W) -> Result<(), HarnessError> {
    write_csv(rows, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(arm: &str, episode: usize, ttc: Option<f64>) -> RunMetrics {
        RunMetrics {
            arm: arm.into(),
            episode,
            seed: episode as u64,
            captured: ttc.is_some(),
            time_to_capture: ttc,
            end_time: ttc.unwrap_or(600.0),
            decisions: 10,
            queries_asked: episode,
            queries_answered: episode / 2,
            sketches: 1,
            statements: 0,
            score: 0.0,
            error: None,
        }
    }

    #[test]
    fn all_captured_at_100() {
        let t: Vec<_> = (0..4).map(|i| row("a", i, Some(100.0))).collect();
        let s = &summarize(&t)[0];
        assert_eq!(s.capture_ratio, 1.0);
        assert_eq!(s.mean_ttc, Some(100.0));
        assert_eq!(s.median_ttc, Some(100.0));
    }

    #[test]
    fn no_captures() {
        let t: Vec<_> = (0..3).map(|i| row("a", i, None)).collect();
        let s = &summarize(&t)[0];
        assert_eq!(s.capture_ratio, 0.0);
        assert_eq!(s.mean_ttc, None);
        assert_eq!(s.median_ttc, None);
    }

    #[test]
    fn mixed_table_matches_recomputation() {
        let ttcs = [Some(50.0), None, Some(200.0), Some(80.0), None, Some(590.0)];
        let mut t: Vec<_> = ttcs.iter().enumerate().map(|(i, x)| row("a", i, *x)).collect();
        t.push(row("b", 0, None));
        let s = summarize(&t);
        assert_eq!(s.len(), 2);
        let a = &s[0];
        // Spreadsheet-style recomputation, written out by hand.
        assert_eq!((a.runs, a.captures), (6, 4));
        assert!((a.capture_ratio - 4.0 / 6.0).abs() < 1e-15);
        assert!((a.mean_ttc.unwrap() - (50.0 + 200.0 + 80.0 + 590.0) / 4.0).abs() < 1e-12);
        assert_eq!(a.median_ttc, Some((80.0 + 200.0) / 2.0));
        assert!((a.mean_queries_asked - 15.0 / 6.0).abs() < 1e-12);
        assert!((a.mean_queries_answered - (0 + 0 + 1 + 1 + 2 + 2) as f64 / 6.0).abs() < 1e-12);
        assert_eq!(s[1].group, "b");
    }

    #[test]
    fn marginals_pool_over_other_axes() {
        let mut arms = Vec::new();
        let mut t = Vec::new();
        for (i, (eta, assumed)) in [("0.5", "0.5"), ("0.5", "0.9"), ("0.9", "0.5"), ("0.9", "0.9")].iter().enumerate() {
            let mut a = ArmConfig::robot_only(&format!("arm{i}"));
            a.axes.insert("eta".into(), eta.to_string());
            a.axes.insert("assumed_eta".into(), assumed.to_string());
            arms.push(a);
            t.push(row(&format!("arm{i}"), 0, if *eta == "0.9" { Some(10.0) } else { None }));
            t.push(row(&format!("arm{i}"), 1, Some(20.0)));
        }
        let m = marginal(&t, &arms, "eta");
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].group.as_str(), m[0].runs, m[0].captures), ("eta=0.5", 4, 2));
        assert_eq!((m[1].group.as_str(), m[1].runs, m[1].captures), ("eta=0.9", 4, 4));
        let g = grid(&t, &arms, "eta", "assumed_eta");
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1, vec![("0.5".to_string(), 0.5), ("0.9".to_string(), 0.5)]);
    }

    #[test]
    fn comparisons_against_control() {
        let mut t: Vec<_> = (0..10).map(|i| row("ctl", i, if i < 2 { Some(1.0) } else { None })).collect();
        t.extend((0..10).map(|i| row("arm", i, if i < 8 { Some(1.0) } else { None })));
        let c = compare(&summarize(&t), "ctl");
        assert_eq!(c.len(), 1);
        assert!(c[0].p_better < 0.05);
        assert!(c[0].p_worse > 0.95);
        assert!((c[0].p_two_sided - 0.023014).abs() < 1e-5);
        assert!(compare(&summarize(&t), "missing").is_empty());
    }
}

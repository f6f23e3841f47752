//! Median and interquartile range across many runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsReport;

/// Linear-interpolation quantile of sorted data (`h = (n − 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub median: f64,
    pub iqr: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        Self {
            median: quantile_sorted(&v, 0.5),
            iqr: q3 - q1,
            q1,
            q3,
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

/// Summaries of every numeric report field. Returns `None` for no reports.
pub fn aggregate(reports: &[MetricsReport]) -> Option<AggregateReport> {
    let first = reports.first()?;
    let metrics = first
        .numeric_fields()
        .into_iter()
        .map(|(name, _)| {
            let values: Vec<f64> = reports
                .iter()
                .map(|r| {
                    r.numeric_fields()
                        .into_iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| v)
                        .expect("same fields")
                })
                .collect();
            (name.to_string(), MetricSummary::of(&values))
        })
        .collect();
    Some(AggregateReport {
        runs: reports.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        let s = MetricSummary::of(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.median, s.iqr, s.q1, s.q3), (3.0, 2.0, 2.0, 4.0));
        let one = MetricSummary::of(&[7.5]);
        assert_eq!((one.median, one.iqr), (7.5, 0.0));
        let even = MetricSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((even.median, even.q1, even.q3), (2.5, 1.75, 3.25));
    }

    #[test]
    fn identical_reports_have_zero_spread() {
        let r = MetricsReport {
            crashes: 2,
            potential_conflicts: 10,
            conflicts_solved_pct: 80.0,
            ..MetricsReport::default()
        };
        let agg = aggregate(&vec![r; 4]).unwrap();
        assert_eq!(agg.runs, 4);
        assert!(agg.metrics.values().all(|m| m.iqr == 0.0));
        assert_eq!(agg.metrics["conflicts_solved_pct"].median, 80.0);
        assert!(aggregate(&[]).is_none());
    }
}

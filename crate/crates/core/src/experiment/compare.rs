use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Manifest, MetricRow, METRICS_HEADER};
use crate::curriculum::{RunRecord, SuccessMetric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub threshold: f64,
    /// Trailing moving-average window applied to each seed's success series
    /// before the threshold test; 1 compares the raw series.
    pub smooth: usize,
    /// Number of trailing episodes averaged into a seed's final success.
    pub final_window: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { threshold: 0.8, smooth: 1, final_window: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub seeds: usize,
    pub episodes: u64,
    pub final_mean: f64,
    pub final_sd: f64,
    /// First cumulative episode at which the per-episode median over seeds
    /// reaches the threshold.
    pub episodes_to_threshold: Option<u64>,
    /// Same, using the mean over seeds.
    pub mean_curve_episodes_to_threshold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub threshold: f64,
    pub baseline: RunSummary,
    pub candidate: RunSummary,
    /// `100 · (1 − candidate / baseline)` episodes-to-threshold; absent when
    /// either run never reaches the threshold.
    pub reduction_pct: Option<f64>,
    /// Candidate minus baseline mean final success.
    pub success_improvement: f64,
    pub relative_success_improvement_pct: Option<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= w {
            sum -= series[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

fn summarize(label: &str, series: &[Vec<f64>], opts: &CompareOptions) -> Result<RunSummary, ExperimentError> {
    if series.is_empty() || series.iter().any(|s| s.is_empty()) {
        return Err(ExperimentError::Parse(format!("run '{label}' has no episodes")));
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let smoothed: Vec<Vec<f64>> = series.iter().map(|s| smooth(&s[..len], opts.smooth)).collect();
    let mut by_median = None;
    let mut by_mean = None;
    for e in 0..len {
        let mut col: Vec<f64> = smoothed.iter().map(|s| s[e]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        if by_mean.is_none() && mean >= opts.threshold {
            by_mean = Some(e as u64 + 1);
        }
        if by_median.is_none() && median(&mut col) >= opts.threshold {
            by_median = Some(e as u64 + 1);
        }
    }
    let window = opts.final_window.clamp(1, len);
    let finals: Vec<f64> = series.iter().map(|s| s[len - window..len].iter().sum::<f64>() / window as f64).collect();
    let n = finals.len() as f64;
    let final_mean = finals.iter().sum::<f64>() / n;
    let final_sd = if finals.len() > 1 {
        (finals.iter().map(|f| (f - final_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(RunSummary {
        label: label.to_string(),
        seeds: series.len(),
        episodes: len as u64,
        final_mean,
        final_sd,
        episodes_to_threshold: by_median,
        mean_curve_episodes_to_threshold: by_mean,
    })
}

fn report(
    baseline: RunSummary,
    candidate: RunSummary,
    opts: &CompareOptions,
) -> ComparisonReport {
    let reduction_pct = match (baseline.episodes_to_threshold, candidate.episodes_to_threshold) {
        (Some(b), Some(c)) => Some(100.0 * (1.0 - c as f64 / b as f64)),
        _ => None,
    };
    let success_improvement = candidate.final_mean - baseline.final_mean;
    let relative_success_improvement_pct =
        (baseline.final_mean > 0.0).then(|| 100.0 * success_improvement / baseline.final_mean);
    ComparisonReport {
        threshold: opts.threshold,
        baseline,
        candidate,
        reduction_pct,
        success_improvement,
        relative_success_improvement_pct,
    }
}

fn record_series(records: &[RunRecord], metric: SuccessMetric) -> Vec<Vec<f64>> {
    records.iter().map(|r| r.rows.iter().map(|row| metric.of(&row.success)).collect()).collect()
}

/// Compares in-memory run records (one per seed) on `frac_top`.
pub fn compare_records(
    baseline: &[RunRecord],
    candidate: &[RunRecord],
    opts: &CompareOptions,
) -> Result<ComparisonReport, ExperimentError> {
    let b = summarize("baseline", &record_series(baseline, SuccessMetric::FracTop), opts)?;
    let c = summarize("candidate", &record_series(candidate, SuccessMetric::FracTop), opts)?;
    Ok(report(b, c, opts))
}

/// Parses a `metrics.csv` into rows grouped by run id (in file order).
pub fn read_metrics(path: &Path) -> Result<Vec<(String, Vec<MetricRow>)>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(ExperimentError::Parse(format!("{}: unexpected header", path.display())));
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<MetricRow>> = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let row = MetricRow::from_csv(line)?;
        if !groups.contains_key(&row.run_id) {
            order.push(row.run_id.clone());
        }
        let rows = groups.entry(row.run_id.clone()).or_default();
        if rows.last().is_some_and(|last| row.episode != last.episode + 1) {
            return Err(ExperimentError::Parse(format!("{}: episodes not contiguous", row.run_id)));
        }
        rows.push(row);
    }
    Ok(order.into_iter().map(|id| {
        let rows = groups.remove(&id).unwrap_or_default();
        (id, rows)
    }).collect())
}

/// Compares two experiment output directories.
pub fn compare_runs(
    baseline_dir: &Path,
    candidate_dir: &Path,
    opts: &CompareOptions,
) -> Result<ComparisonReport, ExperimentError> {
    let mb = Manifest::load(baseline_dir)?;
    let mc = Manifest::load(candidate_dir)?;
    for (m, dir) in [(&mb, baseline_dir), (&mc, candidate_dir)] {
        if !m.complete {
            return Err(ExperimentError::Mismatch(format!("{} did not complete", dir.display())));
        }
    }
    if mb.target_env != mc.target_env {
        return Err(ExperimentError::Mismatch("target environments differ".into()));
    }
    if mb.success_metric != mc.success_metric {
        return Err(ExperimentError::Mismatch("success metrics differ".into()));
    }
    let load = |dir: &Path, m: &Manifest| -> Result<RunSummary, ExperimentError> {
        let runs = read_metrics(&dir.join("metrics.csv"))?;
        let series: Vec<Vec<f64>> =
            runs.iter().map(|(_, rows)| rows.iter().map(|r| r.success(m.success_metric)).collect()).collect();
        summarize(&m.name, &series, opts)
    };
    Ok(report(load(baseline_dir, &mb)?, load(candidate_dir, &mc)?, opts))
}

fn reached(v: Option<u64>) -> String {
    v.map_or_else(|| "not reached".to_string(), |e| e.to_string())
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "threshold: {}", self.threshold)?;
        for s in [&self.baseline, &self.candidate] {
            writeln!(
                f,
                "{}: seeds={} episodes={} final={:.4}±{:.4} episodes_to_threshold(median)={} (mean curve)={}",
                s.label,
                s.seeds,
                s.episodes,
                s.final_mean,
                s.final_sd,
                reached(s.episodes_to_threshold),
                reached(s.mean_curve_episodes_to_threshold)
            )?;
        }
        match self.reduction_pct {
            Some(r) => writeln!(f, "training-time reduction: {r:.2}%")?,
            None => writeln!(f, "training-time reduction: not reached")?,
        }
        write!(f, "success improvement: {:+.4}", self.success_improvement)?;
        if let Some(p) = self.relative_success_improvement_pct {
            write!(f, " ({p:+.2}%)")?;
        }
        writeln!(f)
    }
}

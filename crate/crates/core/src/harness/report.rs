//! Report types: Wilson intervals, sample statistics, JSON and CSV emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::randomness::GeneratorInfo;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `count` successes out of `trials`.
pub fn wilson_interval(count: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub count: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    pub fn new(count: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(count, trials, Z_95);
        RateEstimate {
            count,
            trials,
            rate: if trials == 0 {
                0.0
            } else {
                count as f64 / trials as f64
            },
            ci_low,
            ci_high,
        }
    }

    /// Fails when the lower confidence bound exceeds `target * c_slack`.
    pub fn exceeds(&self, target: f64, c_slack: f64) -> bool {
        self.ci_low > target * c_slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
    pub max: u64,
    pub total: u64,
}

impl SampleStats {
    pub fn from_counts(counts: &[u64]) -> Self {
        if counts.is_empty() {
            return SampleStats {
                mean: 0.0,
                p50: 0,
                p95: 0,
                max: 0,
                total: 0,
            };
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let at =
            |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        let total = sorted.iter().fold(0u64, |a, &b| a.saturating_add(b));
        SampleStats {
            mean: counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64,
            p50: at(0.5),
            p95: at(0.95),
            max: *sorted.last().expect("non-empty"),
            total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub non_replication: Option<f64>,
    pub error: Option<f64>,
}

/// Aggregate of a paired-run experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub experiment: String,
    pub parameters: serde_json::Value,
    pub trials: u64,
    pub seed: u64,
    pub slack_r: usize,
    pub c_slack: f64,
    /// Trials whose two outputs differ (in at least `slack_r` elements for sets).
    pub non_replication: RateEstimate,
    /// Executions with an incorrect output, over both executions of every trial.
    pub error: RateEstimate,
    pub cap_breach: RateEstimate,
    /// Trials whose executions ended at different positions of the internal stream.
    pub stream_mismatches: u64,
    pub samples: SampleStats,
    pub targets: Targets,
    pub constants: BTreeMap<String, f64>,
    pub generator: GeneratorInfo,
    pub fail: bool,
    pub fail_reasons: Vec<String>,
}

impl TrialReport {
    pub(crate) fn judge(&mut self) {
        self.fail_reasons.clear();
        if let Some(t) = self.targets.non_replication {
            if self.non_replication.exceeds(t, self.c_slack) {
                self.fail_reasons.push(format!(
                    "non-replication lower bound {:.4} exceeds {t} x {}",
                    self.non_replication.ci_low, self.c_slack
                ));
            }
        }
        if let Some(t) = self.targets.error {
            if self.error.exceeds(t, self.c_slack) {
                self.fail_reasons.push(format!(
                    "error lower bound {:.4} exceeds {t} x {}",
                    self.error.ci_low, self.c_slack
                ));
            }
        }
        self.fail = !self.fail_reasons.is_empty();
    }
}

pub const CSV_HEADER: &str = "axis,value,trials,non_replication,nr_ci_low,nr_ci_high,error_rate,err_ci_low,err_ci_high,cap_breach_rate,mean_samples,p50_samples,p95_samples,max_samples,fail";

/// One CSV row per report, keyed by the swept parameter value.
pub fn sweep_csv(axis: &str, rows: &[(f64, TrialReport)]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (value, r) in rows {
        let _ = writeln!(
            out,
            "{axis},{value},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trials,
            r.non_replication.rate,
            r.non_replication.ci_low,
            r.non_replication.ci_high,
            r.error.rate,
            r.error.ci_low,
            r.error.ci_high,
            r.cap_breach.rate,
            r.samples.mean,
            r.samples.p50,
            r.samples.p95,
            r.samples.max,
            r.fail
        );
    }
    out
}

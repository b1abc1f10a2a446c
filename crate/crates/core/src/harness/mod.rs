//! Paired-run verification harness.
//!
//! Every trial draws an instance, a shared internal string and two
//! independent sample seeds, then executes the algorithm twice and records
//! whether the outputs agree, whether each output is correct and how many
//! samples each execution used.

pub mod algorithms;
pub mod instances;
pub mod presets;
pub mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::randomness::{GeneratorInfo, SharedRandomness};
use crate::util::ceil_u64;

pub use algorithms::{AlgorithmSpec, Prepared, ALGORITHMS};
pub use instances::{ScalarGen, VectorDist, VectorGen};
pub use report::{sweep_csv, wilson_interval, RateEstimate, SampleStats, Targets, TrialReport};

/// Minimum trial count for the normal-approximation intervals to be meaningful.
pub const MIN_TRIALS: usize = 100;
pub const DEFAULT_C_SLACK: f64 = 3.0;

/// Per-trial randomness.
#[derive(Debug, Clone)]
pub struct TrialSeeds {
    pub trial: u64,
    /// Stream for drawing the instance.
    pub instance: SharedRandomness,
    /// Internal string shared by both executions.
    pub internal: SharedRandomness,
    /// Independent sample seeds of the two executions.
    pub samples: [u64; 2],
}

impl TrialSeeds {
    pub fn new(master: u64, trial: u64) -> Self {
        let root = SharedRandomness::new(master).derive(trial);
        let a = root.derive(2).seed();
        let mut b = root.derive(3).seed();
        if a == b {
            b = !b;
        }
        TrialSeeds {
            trial,
            instance: root.derive(0),
            internal: root.derive(1),
            samples: [a, b],
        }
    }
}

/// What one execution of a trial did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub samples: u64,
    pub correct: bool,
    pub cap_breached: bool,
    /// Checksum of the internal stream after the execution.
    pub stream: (u64, u128),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub executions: [Execution; 2],
    /// 0 when the outputs agree; the symmetric difference for set outputs.
    pub difference: usize,
    /// Optional short description of each output, tallied by the CLI.
    pub labels: Option<[String; 2]>,
}

/// An experiment runnable under the paired protocol.
pub trait Experiment: Sync {
    fn name(&self) -> String;
    fn parameters(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn constants(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
    fn targets(&self) -> Targets;
    fn trial(&self, seeds: &TrialSeeds) -> Result<TrialRecord>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTrialConfig {
    pub algorithm: AlgorithmSpec,
    pub trials: usize,
    pub seed: u64,
    /// Outputs count as replicated when they differ in fewer than `slack_r` elements.
    #[serde(default = "default_slack")]
    pub slack_r: usize,
    #[serde(default = "default_c_slack")]
    pub c_slack: f64,
}

fn default_slack() -> usize {
    1
}

fn default_c_slack() -> f64 {
    DEFAULT_C_SLACK
}

impl PairedTrialConfig {
    pub fn new(algorithm: AlgorithmSpec, trials: usize, seed: u64) -> Self {
        PairedTrialConfig {
            algorithm,
            trials,
            seed,
            slack_r: 1,
            c_slack: DEFAULT_C_SLACK,
        }
    }

    pub fn with_slack(mut self, slack_r: usize) -> Self {
        self.slack_r = slack_r;
        self
    }
}

/// Outcome of [`run_experiment_records`]: the aggregate report and every trial record in trial order.
#[derive(Debug, Clone)]
pub struct PairedRun {
    pub report: TrialReport,
    pub records: Vec<TrialRecord>,
}

/// Runs `trials` paired trials of `experiment` and aggregates them.
pub fn run_experiment_records<E: Experiment + ?Sized>(
    experiment: &E,
    trials: usize,
    seed: u64,
    slack_r: usize,
    c_slack: f64,
) -> Result<PairedRun> {
    ensure(trials >= MIN_TRIALS, || {
        format!("need at least {MIN_TRIALS} trials, got {trials}")
    })?;
    ensure(slack_r >= 1, || "slack must be at least 1".into())?;
    ensure(c_slack > 0.0, || {
        format!("c_slack must be positive, got {c_slack}")
    })?;
    let records = (0..trials as u64)
        .into_par_iter()
        .map(|t| experiment.trial(&TrialSeeds::new(seed, t)))
        .collect::<Result<Vec<_>>>()?;

    let mut non_replicated = 0;
    let mut errors = 0;
    let mut breaches = 0;
    let mut mismatches = 0;
    let mut samples = Vec::with_capacity(2 * trials);
    for r in &records {
        if r.difference >= slack_r {
            non_replicated += 1;
        }
        if r.executions[0].stream != r.executions[1].stream {
            mismatches += 1;
        }
        for e in &r.executions {
            errors += u64::from(!e.correct);
            breaches += u64::from(e.cap_breached);
            samples.push(e.samples);
        }
    }
    let executions = 2 * trials as u64;
    let mut report = TrialReport {
        experiment: experiment.name(),
        parameters: experiment.parameters(),
        trials: trials as u64,
        seed,
        slack_r,
        c_slack,
        non_replication: RateEstimate::new(non_replicated, trials as u64),
        error: RateEstimate::new(errors, executions),
        cap_breach: RateEstimate::new(breaches, executions),
        stream_mismatches: mismatches,
        samples: SampleStats::from_counts(&samples),
        targets: experiment.targets(),
        constants: experiment.constants(),
        generator: GeneratorInfo::current(),
        fail: false,
        fail_reasons: Vec::new(),
    };
    report.judge();
    Ok(PairedRun { report, records })
}

pub fn run_experiment<E: Experiment + ?Sized>(
    experiment: &E,
    trials: usize,
    seed: u64,
    slack_r: usize,
    c_slack: f64,
) -> Result<TrialReport> {
    Ok(run_experiment_records(experiment, trials, seed, slack_r, c_slack)?.report)
}

/// Runs a registered algorithm under the paired protocol.
pub fn run_paired(config: &PairedTrialConfig) -> Result<TrialReport> {
    Ok(run_paired_records(config)?.report)
}

pub fn run_paired_records(config: &PairedTrialConfig) -> Result<PairedRun> {
    let prepared = config.algorithm.prepare()?;
    run_experiment_records(
        &prepared,
        config.trials,
        config.seed,
        config.slack_r,
        config.c_slack,
    )
}

/// Copy of `config` with the parameter at `axis` (dot-separated for nested fields) set to `value`.
pub fn with_parameter(
    config: &PairedTrialConfig,
    axis: &str,
    value: f64,
) -> Result<PairedTrialConfig> {
    let mut spec = serde_json::to_value(&config.algorithm)?;
    let mut slot = &mut spec;
    for key in axis.split('.') {
        slot = slot.get_mut(key).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "`{}` has no parameter `{axis}`",
                config.algorithm.id()
            ))
        })?;
    }
    *slot = if slot.is_u64() && value >= 0.0 && value.fract() == 0.0 {
        serde_json::Value::from(value as u64)
    } else {
        serde_json::Value::from(value)
    };
    Ok(PairedTrialConfig {
        algorithm: AlgorithmSpec::from_value(spec)?,
        ..config.clone()
    })
}

/// Runs `config` once per value of the parameter `axis`.
pub fn sweep(config: &PairedTrialConfig, axis: &str, values: &[f64]) -> Result<Vec<TrialReport>> {
    values
        .iter()
        .map(|&v| run_paired(&with_parameter(config, axis, v)?))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodString {
    pub seed: u64,
    /// Measured paired agreement of the returned seed.
    pub agreement: f64,
    pub candidates_tested: usize,
    pub trials_per_candidate: u64,
}

/// Number of candidate strings tried by [`find_good_string`].
pub fn good_string_candidates(delta: f64) -> usize {
    ceil_u64((3.0 / delta).log2()) as usize
}

/// Paired trials spent on each candidate.
pub fn good_string_trials(rho: f64, delta: f64, constant: f64) -> u64 {
    let t = good_string_candidates(delta) as f64;
    ceil_u64(constant * (t / delta).ln() / (rho * rho)).max(1)
}

/// Searches for an internal string on which `run` agrees with itself across
/// independent samples with frequency at least `1 - 2 rho`.
///
/// `run(internal_seed, sample_seed)` executes the algorithm on the fixed
/// instance it captures.
pub fn find_good_string<O, F>(
    mut run: F,
    rho: f64,
    delta: f64,
    constant: f64,
    rand: &mut SharedRandomness,
) -> Result<GoodString>
where
    O: PartialEq,
    F: FnMut(u64, u64) -> O,
{
    ensure(rho > 0.0 && rho < 0.5, || {
        format!("rho must lie in (0, 1/2), got {rho}")
    })?;
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    ensure(constant > 0.0, || {
        format!("constant must be positive, got {constant}")
    })?;
    let candidates = good_string_candidates(delta);
    let trials = good_string_trials(rho, delta, constant);
    for tested in 1..=candidates {
        let seed = rand.next_u64();
        let mut agree = 0u64;
        for _ in 0..trials {
            let (s1, s2) = (rand.next_u64(), rand.next_u64());
            if run(seed, s1) == run(seed, s2) {
                agree += 1;
            }
        }
        let agreement = agree as f64 / trials as f64;
        if agreement >= 1.0 - 2.0 * rho {
            return Ok(GoodString {
                seed,
                agreement,
                candidates_tested: tested,
                trials_per_candidate: trials,
            });
        }
    }
    Err(Error::NotFound { tested: candidates })
}

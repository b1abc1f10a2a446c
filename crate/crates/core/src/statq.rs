//! Replicable statistical-query oracles.

use serde::{Deserialize, Serialize};

use crate::compose::{compose_adaptive, CompositionBudget};
use crate::error::{ensure, Result};
use crate::randomness::{MeanSource, ProductBernoulli, SharedRandomness};
use crate::util::ceil_u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatQueryParams {
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
}

impl StatQueryParams {
    pub fn new(tau: f64, rho: f64, delta: f64) -> Result<Self> {
        ensure(tau > 0.0 && tau < 1.0, || {
            format!("tau must lie in (0, 1), got {tau}")
        })?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < 1.0, || {
            format!("delta must lie in (0, 1), got {delta}")
        })?;
        Ok(StatQueryParams { tau, rho, delta })
    }

    pub fn effective_delta(&self) -> f64 {
        self.delta.min(self.rho / 4.0)
    }

    pub fn rounds(&self) -> u32 {
        (4.0 + (1.0 / self.rho).log2()).ceil() as u32
    }

    pub fn round_tolerance(&self, t: u32) -> f64 {
        self.tau / 2f64.powi(t as i32 + 2)
    }

    /// Batch sizes of the adaptive oracle.
    pub fn schedule(&self) -> Vec<u64> {
        let rounds = self.rounds();
        let log_term = (2.0 * rounds as f64 / self.effective_delta()).ln();
        (1..=rounds)
            .map(|t| {
                let tau_t = self.round_tolerance(t);
                ceil_u64(3.0 / (tau_t * tau_t) * log_term)
            })
            .collect()
    }

    pub fn worst_case_samples(&self) -> u64 {
        self.schedule().iter().sum()
    }

    /// Batch size of the fixed-sample oracle with constant `c`.
    pub fn fixed_samples(&self, c: f64) -> u64 {
        let alpha = self.tau / 8.0;
        ceil_u64(c / (alpha * alpha * self.rho * self.rho) * (1.0 / self.delta).ln())
    }
}

/// Grid of width `width` on `[0, 1]` shifted by `offset`, with short end cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetGrid {
    pub width: f64,
    pub offset: f64,
}

impl OffsetGrid {
    /// Cell `[lo, hi]` containing `x`, clipped to `[0, 1]`.
    pub fn cell(&self, x: f64) -> (f64, f64) {
        let k = ((x - self.offset) / self.width).floor();
        let lo = self.offset + k * self.width;
        (lo.max(0.0), (lo + self.width).min(1.0))
    }

    pub fn midpoint(&self, x: f64) -> f64 {
        let (lo, hi) = self.cell(x);
        (lo + hi) / 2.0
    }

    /// The cell that contains the open interval `(a, b)`, if one does.
    pub fn enclosing(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.cell((a + b) / 2.0);
        (lo <= a && b <= hi).then_some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatQueryOutcome {
    pub value: f64,
    pub samples_used: u64,
    pub terminated_round: Option<u32>,
    pub offset: f64,
}

/// Adaptive replicable statistical query.
///
/// Returns the midpoint of a randomly offset grid cell once a confidence
/// interval around the running estimate fits inside one cell.
pub fn adaptive_stat_query<S: MeanSource + ?Sized>(
    source: &mut S,
    params: &StatQueryParams,
    rand: &mut SharedRandomness,
) -> StatQueryOutcome {
    let alpha = params.tau / 8.0;
    let grid = OffsetGrid {
        width: alpha,
        offset: alpha * rand.unit(),
    };
    let mut used = 0;
    let mut mu_hat = 0.0;
    for (i, m) in params.schedule().into_iter().enumerate() {
        let t = i as u32 + 1;
        let tau_t = params.round_tolerance(t);
        mu_hat = source.batch_mean(m);
        used += m;
        if let Some((lo, hi)) = grid.enclosing(mu_hat - 2.0 * tau_t, mu_hat + 2.0 * tau_t) {
            return StatQueryOutcome {
                value: (lo + hi) / 2.0,
                samples_used: used,
                terminated_round: Some(t),
                offset: grid.offset,
            };
        }
    }
    StatQueryOutcome {
        value: mu_hat,
        samples_used: used,
        terminated_round: None,
        offset: grid.offset,
    }
}

/// Fixed-sample replicable statistical query with batch constant `c`.
pub fn fixed_stat_query_with<S: MeanSource + ?Sized>(
    source: &mut S,
    params: &StatQueryParams,
    c: f64,
    rand: &mut SharedRandomness,
) -> StatQueryOutcome {
    let alpha = params.tau / 8.0;
    let grid = OffsetGrid {
        width: alpha,
        offset: alpha * rand.unit(),
    };
    let m = params.fixed_samples(c);
    let mu_hat = source.batch_mean(m);
    StatQueryOutcome {
        value: grid.midpoint(mu_hat),
        samples_used: m,
        terminated_round: None,
        offset: grid.offset,
    }
}

pub fn fixed_stat_query<S: MeanSource + ?Sized>(
    source: &mut S,
    params: &StatQueryParams,
    rand: &mut SharedRandomness,
) -> StatQueryOutcome {
    fixed_stat_query_with(source, params, 3.0, rand)
}

/// Family of queries answered one at a time; query `i` may depend on earlier answers.
pub trait QuerySource {
    /// Mean of query `i` over `m` fresh samples, given the answers to queries `0..i`.
    fn batch_mean(&mut self, i: usize, answers: &[f64], m: u64) -> f64;
}

impl<F: FnMut(usize, &[f64], u64) -> f64> QuerySource for F {
    fn batch_mean(&mut self, i: usize, answers: &[f64], m: u64) -> f64 {
        self(i, answers, m)
    }
}

/// Query `i` reads coordinate `i`.
impl QuerySource for ProductBernoulli {
    fn batch_mean(&mut self, i: usize, _answers: &[f64], m: u64) -> f64 {
        self.coins_mut()[i].batch_mean(m)
    }
}

struct Indexed<'a, Q: ?Sized> {
    family: &'a mut Q,
    index: usize,
    answers: &'a [f64],
    consumed: u64,
}

impl<Q: QuerySource + ?Sized> MeanSource for Indexed<'_, Q> {
    fn batch_mean(&mut self, m: u64) -> f64 {
        self.consumed += m;
        self.family.batch_mean(self.index, self.answers, m)
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiStatQueryConfig {
    /// Constant in the global sample cap.
    pub cap_constant: f64,
    /// Constant in the non-replicable fallback batch size.
    pub fallback_constant: f64,
}

impl Default for MultiStatQueryConfig {
    fn default() -> Self {
        MultiStatQueryConfig {
            cap_constant: 100.0,
            fallback_constant: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStatQueryOutcome {
    pub values: Vec<f64>,
    pub samples_used: u64,
    pub cap_breached: bool,
}

/// Per-query budgets and global cap for `n` adaptive queries.
pub fn multi_stat_query_budget(
    n: usize,
    params: &StatQueryParams,
    config: &MultiStatQueryConfig,
) -> CompositionBudget {
    let nf = n as f64;
    let per_task = StatQueryParams {
        tau: params.tau,
        rho: params.rho / (2.0 * nf),
        delta: params.delta / (2.0 * nf),
    };
    let formula = config.cap_constant * nf * nf * (nf / params.delta).ln().max(1.0)
        / (params.tau * params.tau * params.rho * params.rho);
    CompositionBudget::new(
        per_task.rho,
        per_task.delta,
        ceil_u64(formula),
        per_task.worst_case_samples(),
    )
}

/// `n` adaptive statistical queries under a shared sample cap.
pub fn multi_stat_query<Q: QuerySource + ?Sized>(
    family: &mut Q,
    n: usize,
    params: &StatQueryParams,
    config: &MultiStatQueryConfig,
    rand: &SharedRandomness,
) -> Result<MultiStatQueryOutcome> {
    ensure(n >= 1, || "at least one query is required".into())?;
    let budget = multi_stat_query_budget(n, params, config);
    let per_task = StatQueryParams::new(params.tau, budget.per_task_rho, budget.per_task_delta)?;
    let fallback_delta = params.delta / (2.0 * n as f64);
    let fallback_m = ceil_u64(
        config.fallback_constant / (params.tau * params.tau) * (2.0 / fallback_delta).ln(),
    );
    let composed = compose_adaptive(
        family,
        n,
        &budget,
        rand,
        |fam, i, transcript: &[f64], task_rand| {
            let mut src = Indexed {
                family: fam,
                index: i,
                answers: transcript,
                consumed: 0,
            };
            let out = adaptive_stat_query(&mut src, &per_task, task_rand);
            (out.value, out.samples_used)
        },
        |answers| answers,
        |fam| {
            let mut answers = Vec::with_capacity(n);
            for i in 0..n {
                let v = fam.batch_mean(i, &answers, fallback_m);
                answers.push(v);
            }
            (answers, fallback_m * n as u64)
        },
    );
    Ok(MultiStatQueryOutcome {
        values: composed.output,
        samples_used: composed.total_samples,
        cap_breached: composed.cap_breached,
    })
}

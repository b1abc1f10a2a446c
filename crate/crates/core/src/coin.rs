//! Single-coin testing.
//!
//! The `(p0, q0)`-coin problem asks whether a coin has bias at most `p0`
//! (answer [`Verdict::Reject`]) or at least `q0` (answer [`Verdict::Accept`]).

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::randomness::source::sample_rng;
use crate::randomness::{unit_f64, Coin, SampleSource, SharedRandomness};
use crate::statq::{fixed_stat_query, StatQueryParams};
use crate::util::ceil_u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn flip(self) -> Verdict {
        match self {
            Verdict::Accept => Verdict::Reject,
            Verdict::Reject => Verdict::Accept,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinProblemParams {
    pub p0: f64,
    pub q0: f64,
    pub rho: f64,
    pub delta: f64,
}

impl CoinProblemParams {
    pub fn new(p0: f64, q0: f64, rho: f64, delta: f64) -> Result<Self> {
        ensure(0.0 <= p0 && p0 < q0 && q0 <= 1.0, || {
            format!("need 0 <= p0 < q0 <= 1, got p0={p0}, q0={q0}")
        })?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < 0.5, || {
            format!("delta must lie in (0, 1/2), got {delta}")
        })?;
        Ok(CoinProblemParams { p0, q0, rho, delta })
    }

    pub fn gap(&self) -> f64 {
        self.q0 - self.p0
    }

    /// Failure probability after the `min(delta, rho/4)` adjustment.
    pub fn effective_delta(&self) -> f64 {
        self.delta.min(self.rho / 4.0)
    }

    pub fn rounds(&self) -> u32 {
        (4.0 + (1.0 / self.rho).log2()).ceil() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub verdict: Verdict,
    pub samples_used: u64,
    /// Round that terminated (1-based); `None` when every round was inconclusive
    /// or the tester is not round-based.
    pub terminated_round: Option<u32>,
    /// Random acceptance threshold drawn from the shared stream, when one was used.
    pub threshold: Option<f64>,
}

/// Adaptive replicable coin tester.
///
/// Draws a random threshold `r` and runs rounds of doubling accuracy, stopping
/// as soon as the empirical bias is confidently on one side of `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveCoinTester {
    pub params: CoinProblemParams,
    /// Constant in the per-round batch size.
    pub sample_constant: f64,
}

impl AdaptiveCoinTester {
    pub fn new(params: CoinProblemParams) -> Self {
        AdaptiveCoinTester {
            params,
            sample_constant: 3.0,
        }
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.sample_constant = c;
        self
    }

    pub fn round_accuracy(&self, t: u32) -> f64 {
        self.params.gap() / 2f64.powi(t as i32 + 2)
    }

    /// Batch sizes `m_1, ..., m_T`.
    pub fn schedule(&self) -> Vec<u64> {
        let p = &self.params;
        let rounds = p.rounds();
        let log_term = (2.0 * rounds as f64 / p.effective_delta()).ln();
        (1..=rounds)
            .map(|t| {
                let eps = self.round_accuracy(t);
                ceil_u64(self.sample_constant * p.q0 / (eps * eps) * log_term)
            })
            .collect()
    }

    /// Largest number of flips any run can use.
    pub fn worst_case_samples(&self) -> u64 {
        self.schedule().iter().sum()
    }

    pub fn run<C: Coin + ?Sized>(
        &self,
        source: &mut C,
        rand: &mut SharedRandomness,
    ) -> TestOutcome {
        let p = &self.params;
        let margin = p.rho * p.gap() / 16.0;
        let r = rand
            .uniform(p.p0 + margin, p.q0 - margin)
            .expect("margin is below a quarter of the gap");
        let mut used = 0;
        for (i, m) in self.schedule().into_iter().enumerate() {
            let t = i as u32 + 1;
            let eps = self.round_accuracy(t);
            let p_hat = source.heads(m) as f64 / m as f64;
            used += m;
            let lower = p_hat - eps;
            let upper = p_hat + eps;
            if (lower - r).abs().min((upper - r).abs()) > eps {
                let verdict = if p_hat > r {
                    Verdict::Accept
                } else {
                    Verdict::Reject
                };
                return TestOutcome {
                    verdict,
                    samples_used: used,
                    terminated_round: Some(t),
                    threshold: Some(r),
                };
            }
        }
        TestOutcome {
            verdict: Verdict::Reject,
            samples_used: used,
            terminated_round: None,
            threshold: Some(r),
        }
    }
}

pub fn adaptive_coin_test<C: Coin + ?Sized>(
    source: &mut C,
    params: &CoinProblemParams,
    rand: &mut SharedRandomness,
) -> TestOutcome {
    AdaptiveCoinTester::new(*params).run(source, rand)
}

/// Fixed-sample replicable tester built on the fixed statistical query.
pub fn simple_coin_test<C: Coin + ?Sized>(
    source: &mut C,
    params: &CoinProblemParams,
    rand: &mut SharedRandomness,
) -> TestOutcome {
    let sq = StatQueryParams::new(params.gap() / 3.0, params.rho, params.delta)
        .expect("coin parameters yield a valid tolerance");
    let before = Coin::consumed(source);
    let estimate = fixed_stat_query(source, &sq, rand);
    let verdict = if estimate.value > (params.p0 + params.q0) / 2.0 {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    TestOutcome {
        verdict,
        samples_used: Coin::consumed(source) - before,
        terminated_round: None,
        threshold: None,
    }
}

pub fn nonreplicable_sample_size(p0: f64, q0: f64, delta: f64) -> u64 {
    ceil_u64(27.0 * q0 / (q0 - p0).powi(2) * (2.0 / delta).ln())
}

/// Single-batch tester with no replicability guarantee.
pub fn nonreplicable_coin_test<C: Coin + ?Sized>(
    source: &mut C,
    p0: f64,
    q0: f64,
    delta: f64,
) -> TestOutcome {
    let m = nonreplicable_sample_size(p0, q0, delta);
    let p_hat = source.heads(m) as f64 / m as f64;
    TestOutcome {
        verdict: if p_hat >= (p0 + q0) / 2.0 {
            Verdict::Accept
        } else {
            Verdict::Reject
        },
        samples_used: m,
        terminated_round: Some(1),
        threshold: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HypothesisDecision {
    Reject,
    FailToReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    pub decision: HypothesisDecision,
    pub coin: TestOutcome,
}

/// Coin whose flips are `p <= p0` for p-values `p` from an underlying source.
pub struct PValueCoin<'a, S: ?Sized> {
    pvalues: &'a mut S,
    p0: f64,
    bad_value: Option<f64>,
}

impl<'a, S: SampleSource<Sample = f64> + ?Sized> PValueCoin<'a, S> {
    pub fn new(pvalues: &'a mut S, p0: f64) -> Self {
        PValueCoin {
            pvalues,
            p0,
            bad_value: None,
        }
    }

    /// First p-value seen outside `[0, 1]`, if any.
    pub fn bad_value(&self) -> Option<f64> {
        self.bad_value
    }
}

impl<S: SampleSource<Sample = f64> + ?Sized> Coin for PValueCoin<'_, S> {
    fn flip(&mut self) -> bool {
        let x = self.pvalues.draw();
        if !(0.0..=1.0).contains(&x) && self.bad_value.is_none() {
            self.bad_value = Some(x);
        }
        x <= self.p0
    }
    fn consumed(&self) -> u64 {
        self.pvalues.consumed()
    }
}

/// Runs a coin tester on the coin induced by thresholding p-values at `p0`.
///
/// The null hypothesis is rejected exactly when the coin tester accepts.
pub fn hypothesis_to_coin<S, F>(
    pvalues: &mut S,
    params: &CoinProblemParams,
    tester: F,
) -> Result<HypothesisOutcome>
where
    S: SampleSource<Sample = f64> + ?Sized,
    F: FnOnce(&mut dyn Coin, &CoinProblemParams) -> TestOutcome,
{
    let mut coin = PValueCoin::new(pvalues, params.p0);
    let outcome = tester(&mut coin, params);
    if let Some(x) = coin.bad_value() {
        return Err(Error::Domain(format!("p-value {x} lies outside [0, 1]")));
    }
    let decision = match outcome.verdict {
        Verdict::Accept => HypothesisDecision::Reject,
        Verdict::Reject => HypothesisDecision::FailToReject,
    };
    Ok(HypothesisOutcome {
        decision,
        coin: outcome,
    })
}

/// p-value source driven by a coin: heads map to `U[0, p0]`, tails to `U[p0, 1]`.
pub struct CoinPValues<C> {
    coin: C,
    p0: f64,
    rng: ChaCha8Rng,
}

impl<C: Coin> CoinPValues<C> {
    pub fn new(coin: C, p0: f64, seed: u64) -> Self {
        CoinPValues {
            coin,
            p0,
            rng: sample_rng(seed),
        }
    }
}

impl<C: Coin> SampleSource for CoinPValues<C> {
    type Sample = f64;
    fn draw(&mut self) -> f64 {
        let u = unit_f64(self.rng.next_u64());
        if self.coin.flip() {
            self.p0 * u
        } else {
            self.p0 + (1.0 - self.p0) * u
        }
    }
    fn consumed(&self) -> u64 {
        self.coin.consumed()
    }
}

pub fn coin_to_hypothesis<C: Coin>(
    coin: C,
    params: &CoinProblemParams,
    seed: u64,
) -> CoinPValues<C> {
    CoinPValues::new(coin, params.p0, seed)
}

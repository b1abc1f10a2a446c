//! Replicable heavy hitters over finite distributions, and amplification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::randomness::{DiscreteSource, SharedRandomness};
use crate::util::ceil_u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterParams {
    pub v: f64,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
}

impl HeavyHitterParams {
    pub fn new(v: f64, eps: f64, rho: f64, delta: f64) -> Result<Self> {
        ensure(4.0 * eps < v, || {
            format!("need 4 eps < v, got eps={eps}, v={v}")
        })?;
        ensure(4.0 * delta < rho, || {
            format!("need 4 delta < rho, got delta={delta}, rho={rho}")
        })?;
        Self::relaxed(v, eps, rho, delta)
    }

    /// Only requires `0 < eps < v < 1`; used by callers whose parameters sit
    /// outside the standard regime but still keep `v - eps` positive.
    pub(crate) fn relaxed(v: f64, eps: f64, rho: f64, delta: f64) -> Result<Self> {
        ensure(v > 0.0 && v < 1.0, || {
            format!("v must lie in (0, 1), got {v}")
        })?;
        ensure(eps > 0.0 && eps < v, || {
            format!("eps must lie in (0, v), got {eps}")
        })?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < 1.0, || {
            format!("delta must lie in (0, 1), got {delta}")
        })?;
        Ok(HeavyHitterParams { v, eps, rho, delta })
    }

    pub fn effective_delta(&self) -> f64 {
        self.delta.min(self.rho / 4.0)
    }

    /// Size of the candidate pass.
    pub fn candidate_samples(&self) -> u64 {
        let floor = self.v - self.eps;
        ceil_u64((8.0 / (self.effective_delta() * floor)).ln() / floor).max(1)
    }

    pub fn rounds(&self) -> u32 {
        let m0 = self.candidate_samples() as f64;
        (7.0 + (m0.sqrt() / self.rho).log2()).ceil() as u32
    }

    fn log_term(&self) -> f64 {
        let m0 = self.candidate_samples() as f64;
        (4.0 * (m0 + 1.0) * self.rounds() as f64 / self.effective_delta()).ln()
    }

    pub fn round_accuracy(&self, t: u32) -> f64 {
        self.eps / 2f64.powi(t as i32 + 2)
    }

    pub fn schedule(&self) -> Vec<u64> {
        let log_term = self.log_term();
        (1..=self.rounds())
            .map(|t| {
                let e = self.round_accuracy(t);
                ceil_u64(3.0 / (e * e) * log_term)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyHitterResult<T> {
    /// Sorted heavy hitters.
    pub set: Vec<T>,
    /// Threshold actually applied.
    pub threshold: f64,
    pub samples_used: u64,
    pub terminated_round: Option<u32>,
    pub fallback: bool,
}

fn candidates<D: DiscreteSource + ?Sized>(source: &mut D, m0: u64) -> BTreeSet<D::Item> {
    source.histogram(m0).into_keys().collect()
}

fn frequency<T: Ord>(hist: &BTreeMap<T, u64>, x: &T, m: u64) -> f64 {
    hist.get(x).copied().unwrap_or(0) as f64 / m as f64
}

/// Adaptive replicable heavy hitters.
///
/// Draws a threshold `v_r` near `v` and sharpens the frequency estimates of
/// the candidates until `v_r` is clear of every confidence band.
pub fn adaptive_heavy_hitters<D: DiscreteSource + ?Sized>(
    source: &mut D,
    params: &HeavyHitterParams,
    rand: &mut SharedRandomness,
) -> HeavyHitterResult<D::Item> {
    let start = source.consumed();
    let m0 = params.candidate_samples();
    let cands = candidates(source, m0);
    let v_r = rand
        .uniform(params.v - params.eps / 2.0, params.v + params.eps / 2.0)
        .expect("eps is positive");
    let rounds = params.rounds();
    let log_term = (4.0 * rounds as f64 * (m0 as f64 + 1.0) / params.effective_delta()).ln();
    for (i, m) in params.schedule().into_iter().enumerate() {
        let t = i as u32 + 1;
        let eps_t = params.round_accuracy(t);
        let hist = source.histogram(m);
        let clear = cands.iter().all(|x| {
            let p = frequency(&hist, x, m);
            let eta = eps_t.min(2.0 * (p / m as f64 * log_term).sqrt());
            !(p - 2.0 * eta < v_r && v_r < p + 2.0 * eta)
        });
        if clear {
            let set = cands
                .iter()
                .filter(|x| frequency(&hist, x, m) > v_r)
                .cloned()
                .collect();
            return HeavyHitterResult {
                set,
                threshold: v_r,
                samples_used: source.consumed() - start,
                terminated_round: Some(t),
                fallback: false,
            };
        }
    }
    let fallback_params = HeavyHitterParams {
        rho: params.rho / 2.0,
        delta: params.delta / 8.0,
        ..*params
    };
    let mut fallback_rand = rand.derive(1);
    let mut out = fixed_heavy_hitters(source, &fallback_params, &mut fallback_rand);
    out.samples_used = source.consumed() - start;
    out.fallback = true;
    out
}

/// Batch size so that the total frequency error over `support` atoms stays below `lambda`
/// except with probability `delta`, from `2^support exp(-m lambda^2 / 2)`.
pub fn total_variation_samples(support: usize, lambda: f64, delta: f64) -> u64 {
    ceil_u64(
        2.0 / (lambda * lambda) * (support as f64 * std::f64::consts::LN_2 + (1.0 / delta).ln()),
    )
}

/// Fixed-sample replicable heavy hitters with a uniformly random threshold on `[v - eps, v + eps]`.
pub fn fixed_heavy_hitters<D: DiscreteSource + ?Sized>(
    source: &mut D,
    params: &HeavyHitterParams,
    rand: &mut SharedRandomness,
) -> HeavyHitterResult<D::Item> {
    let start = source.consumed();
    let cands = candidates(source, params.candidate_samples());
    let v_prime = rand
        .uniform(params.v - params.eps, params.v + params.eps)
        .expect("eps is positive");
    // candidates plus one atom for everything else
    let m = total_variation_samples(
        cands.len() + 1,
        params.rho * params.eps / 8.0,
        params.effective_delta() / 2.0,
    );
    let hist = source.histogram(m);
    let set = cands
        .iter()
        .filter(|x| frequency(&hist, x, m) > v_prime)
        .cloned()
        .collect();
    HeavyHitterResult {
        set,
        threshold: v_prime,
        samples_used: source.consumed() - start,
        terminated_round: None,
        fallback: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifyParams {
    pub rho: f64,
    pub delta: f64,
    /// Multiplier of `log2(1/rho)` in the number of random strings.
    pub string_constant: f64,
}

impl AmplifyParams {
    pub fn new(rho: f64, delta: f64) -> Result<Self> {
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < 1.0, || {
            format!("delta must lie in (0, 1), got {delta}")
        })?;
        Ok(AmplifyParams {
            rho,
            delta,
            string_constant: 3.0,
        })
    }

    pub fn strings(&self) -> usize {
        ((self.string_constant * (1.0 / self.rho).log2()).ceil() as usize).max(1)
    }

    /// Failure probability handed to each heavy-hitter search.
    pub fn inner_delta(&self) -> f64 {
        let l = 1.0 + (1.0 / self.rho).log2();
        self.rho * self.rho * self.delta / (8.0 * l * l * l)
    }

    pub fn heavy_hitter_params(&self) -> HeavyHitterParams {
        HeavyHitterParams::relaxed(
            0.8,
            0.1,
            self.rho / (2.0 * self.strings() as f64),
            self.inner_delta(),
        )
        .expect("fixed heavy-hitter regime")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifyOutcome<T> {
    pub output: T,
    /// Sorted union of the heavy hitters found over all strings.
    pub union: Vec<T>,
    pub samples_used: u64,
}

/// Amplifies the replicability of an algorithm through its output distributions.
///
/// `runs(j, seed)` returns a source whose draws are the outputs of the inner
/// algorithm on fresh samples with internal random string `seed`; the `j`-th
/// string's seed comes from the shared stream. `samples_used` sums the
/// sources' counters, so a source should count inner samples, not runs.
pub fn adaptive_amplify<T, D, F>(
    mut runs: F,
    params: &AmplifyParams,
    rand: &SharedRandomness,
) -> AmplifyOutcome<T>
where
    T: Ord + Clone,
    D: DiscreteSource<Item = T>,
    F: FnMut(usize, u64) -> D,
{
    let hh = params.heavy_hitter_params();
    let mut union = BTreeSet::new();
    let mut used = 0;
    let mut first_output = None;
    for j in 0..params.strings() {
        let mut string_rand = rand.derive(2 * j as u64);
        let seed = string_rand.next_u64();
        let mut source = runs(j, seed);
        let mut hh_rand = rand.derive(2 * j as u64 + 1);
        let found = adaptive_heavy_hitters(&mut source, &hh, &mut hh_rand);
        if first_output.is_none() {
            first_output = Some(source.draw());
        }
        used += source.consumed();
        union.extend(found.set);
    }
    let union: Vec<T> = union.into_iter().collect();
    let output = if union.is_empty() {
        first_output.expect("at least one string")
    } else {
        let mut pick = rand.derive(u64::MAX);
        union[pick.index(union.len())].clone()
    };
    AmplifyOutcome {
        output,
        union,
        samples_used: used,
    }
}

/// Discrete source that reruns a black-box algorithm with a fixed random string.
pub struct InnerRuns<F> {
    inner: F,
    seed: u64,
    per_run: u64,
    runs: u64,
}

impl<T: Ord + Clone, F: FnMut(&mut SharedRandomness) -> T> InnerRuns<F> {
    /// Each run is charged `per_run` samples.
    pub fn new(inner: F, seed: u64, per_run: u64) -> Self {
        InnerRuns {
            inner,
            seed,
            per_run,
            runs: 0,
        }
    }
}

impl<T: Ord + Clone, F: FnMut(&mut SharedRandomness) -> T> DiscreteSource for InnerRuns<F> {
    type Item = T;
    fn draw(&mut self) -> T {
        self.runs += 1;
        (self.inner)(&mut SharedRandomness::new(self.seed))
    }
    fn consumed(&self) -> u64 {
        self.runs * self.per_run
    }
}

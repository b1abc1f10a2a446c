//! Adaptive composition, N-coin testers and the binary-search bias learner.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coin::{
    adaptive_coin_test, nonreplicable_coin_test, AdaptiveCoinTester, CoinProblemParams, Verdict,
};
use crate::error::{ensure, Error, Result};
use crate::randomness::source::{binomial, sample_rng};
use crate::randomness::{Coin, SharedRandomness};
use crate::util::ceil_u64;

/// Per-task budgets and the global sample cap of a composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionBudget {
    pub per_task_rho: f64,
    pub per_task_delta: f64,
    pub sample_cap: u64,
}

impl CompositionBudget {
    /// The cap is the larger of the closed-form limit and the worst case of a single task.
    pub fn new(
        per_task_rho: f64,
        per_task_delta: f64,
        formula_cap: u64,
        task_worst_case: u64,
    ) -> Self {
        CompositionBudget {
            per_task_rho,
            per_task_delta,
            sample_cap: formula_cap.max(task_worst_case),
        }
    }

    pub fn unlimited(per_task_rho: f64, per_task_delta: f64) -> Self {
        CompositionBudget {
            per_task_rho,
            per_task_delta,
            sample_cap: u64::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composed<R> {
    pub output: R,
    pub total_samples: u64,
    pub task_samples: Vec<u64>,
    pub fallback_samples: u64,
    pub cap_breached: bool,
}

/// Runs `n` tasks in order under a global sample cap.
///
/// Task `i` receives the transcript of earlier outputs and the stream
/// `rand.derive(i)`, and reports its output with the samples it used. The
/// cap is checked after every task; once it is exceeded the transcript is
/// discarded and `fallback` answers instead.
pub fn compose_adaptive<Ctx: ?Sized, O, R>(
    ctx: &mut Ctx,
    n: usize,
    budget: &CompositionBudget,
    rand: &SharedRandomness,
    mut task: impl FnMut(&mut Ctx, usize, &[O], &mut SharedRandomness) -> (O, u64),
    aggregate: impl FnOnce(Vec<O>) -> R,
    fallback: impl FnOnce(&mut Ctx) -> (R, u64),
) -> Composed<R> {
    let mut transcript = Vec::with_capacity(n);
    let mut task_samples = Vec::with_capacity(n);
    let mut total: u64 = 0;
    for i in 0..n {
        let mut task_rand = rand.derive(i as u64);
        let (out, used) = task(ctx, i, &transcript, &mut task_rand);
        transcript.push(out);
        task_samples.push(used);
        total = total.saturating_add(used);
        if total > budget.sample_cap {
            let (output, fallback_samples) = fallback(ctx);
            return Composed {
                output,
                total_samples: total.saturating_add(fallback_samples),
                task_samples,
                fallback_samples,
                cap_breached: true,
            };
        }
    }
    Composed {
        output: aggregate(transcript),
        total_samples: total,
        task_samples,
        fallback_samples: 0,
        cap_breached: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NCoinOutcome {
    /// Sorted indices of accepted coins.
    pub accepted: Vec<usize>,
    pub samples_per_coin: Vec<u64>,
    pub total_samples: u64,
    pub cap_breached: bool,
}

impl NCoinOutcome {
    pub fn symmetric_difference(&self, other: &NCoinOutcome) -> usize {
        let a: std::collections::BTreeSet<_> = self.accepted.iter().collect();
        let b: std::collections::BTreeSet<_> = other.accepted.iter().collect();
        a.symmetric_difference(&b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NCoinConfig {
    /// Constant in the closed-form sample limit.
    pub cap_constant: f64,
}

impl Default for NCoinConfig {
    fn default() -> Self {
        NCoinConfig {
            cap_constant: 100.0,
        }
    }
}

pub fn n_coin_budget(
    n: usize,
    params: &CoinProblemParams,
    config: &NCoinConfig,
) -> CompositionBudget {
    let nf = n as f64;
    let task = CoinProblemParams {
        rho: params.rho / nf,
        delta: params.delta / (2.0 * nf),
        ..*params
    };
    let formula = config.cap_constant
        * nf
        * nf
        * params.q0
        * (nf / params.delta).ln()
        * (1.0 / params.rho).log2()
        / (params.gap().powi(2) * params.rho * params.rho);
    CompositionBudget::new(
        task.rho,
        task.delta,
        ceil_u64(formula),
        AdaptiveCoinTester::new(task).worst_case_samples(),
    )
}

/// Per-task replicability of the approximately replicable tester.
pub fn approx_per_coin_rho(n: usize, slack: usize, rho: f64) -> f64 {
    slack as f64 / (2.0 * n as f64 * (1.0 + 2.0 * (4.0 / rho).ln()))
}

pub fn approx_n_coin_budget(
    n: usize,
    slack: usize,
    params: &CoinProblemParams,
    config: &NCoinConfig,
) -> Result<CompositionBudget> {
    if slack < 1 || slack > n {
        return Err(Error::InvalidRange(format!(
            "slack {slack} must lie in [1, {n}]"
        )));
    }
    let nf = n as f64;
    let delta = params.effective_delta();
    let task = CoinProblemParams {
        rho: approx_per_coin_rho(n, slack, params.rho),
        delta: delta / (2.0 * nf),
        ..*params
    };
    let formula = config.cap_constant * params.q0 * nf * nf
        / (params.gap().powi(2) * slack as f64 * params.rho)
        * (nf / delta).ln()
        * (1.0 / params.rho).ln();
    Ok(CompositionBudget::new(
        task.rho,
        task.delta,
        ceil_u64(formula),
        AdaptiveCoinTester::new(task).worst_case_samples(),
    ))
}

fn run_n_coin<C: Coin>(
    sources: &mut [C],
    params: &CoinProblemParams,
    budget: &CompositionBudget,
    fallback_delta: f64,
    rand: &SharedRandomness,
) -> NCoinOutcome {
    let n = sources.len();
    let before: Vec<u64> = sources.iter().map(|c| c.consumed()).collect();
    let task = CoinProblemParams {
        rho: budget.per_task_rho,
        delta: budget.per_task_delta,
        ..*params
    };
    let composed = compose_adaptive(
        sources,
        n,
        budget,
        rand,
        |coins, i, _, task_rand| {
            let out = adaptive_coin_test(&mut coins[i], &task, task_rand);
            (out.verdict, out.samples_used)
        },
        |verdicts| {
            verdicts
                .iter()
                .enumerate()
                .filter(|(_, v)| **v == Verdict::Accept)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        },
        |coins| {
            let mut used = 0;
            let mut accepted = Vec::new();
            for (i, c) in coins.iter_mut().enumerate() {
                let out = nonreplicable_coin_test(c, params.p0, params.q0, fallback_delta);
                used += out.samples_used;
                if out.verdict == Verdict::Accept {
                    accepted.push(i);
                }
            }
            (accepted, used)
        },
    );
    let samples_per_coin: Vec<u64> = sources
        .iter()
        .zip(&before)
        .map(|(c, b)| c.consumed() - b)
        .collect();
    debug_assert_eq!(samples_per_coin.iter().sum::<u64>(), composed.total_samples);
    NCoinOutcome {
        accepted: composed.output,
        total_samples: samples_per_coin.iter().sum(),
        samples_per_coin,
        cap_breached: composed.cap_breached,
    }
}

/// Replicable N-coin tester composed from single-coin adaptive testers.
pub fn n_coin_test_with<C: Coin>(
    sources: &mut [C],
    params: &CoinProblemParams,
    config: &NCoinConfig,
    rand: &SharedRandomness,
) -> Result<NCoinOutcome> {
    let n = sources.len();
    ensure(n >= 1, || "at least one coin is required".into())?;
    let budget = n_coin_budget(n, params, config);
    Ok(run_n_coin(
        sources,
        params,
        &budget,
        params.delta / (2.0 * n as f64),
        rand,
    ))
}

pub fn n_coin_test<C: Coin>(
    sources: &mut [C],
    params: &CoinProblemParams,
    rand: &SharedRandomness,
) -> Result<NCoinOutcome> {
    n_coin_test_with(sources, params, &NCoinConfig::default(), rand)
}

/// N-coin tester whose paired outputs differ in fewer than `slack` coins except with probability `rho`.
pub fn approx_n_coin_test_with<C: Coin>(
    sources: &mut [C],
    params: &CoinProblemParams,
    slack: usize,
    config: &NCoinConfig,
    rand: &SharedRandomness,
) -> Result<NCoinOutcome> {
    let n = sources.len();
    ensure(n >= 1, || "at least one coin is required".into())?;
    let budget = approx_n_coin_budget(n, slack, params, config)?;
    Ok(run_n_coin(
        sources,
        params,
        &budget,
        params.effective_delta() / (2.0 * n as f64),
        rand,
    ))
}

pub fn approx_n_coin_test<C: Coin>(
    sources: &mut [C],
    params: &CoinProblemParams,
    slack: usize,
    rand: &SharedRandomness,
) -> Result<NCoinOutcome> {
    approx_n_coin_test_with(sources, params, slack, &NCoinConfig::default(), rand)
}

/// Keep-heads and tails-to-heads probabilities `(h, t)` mapping biases `a` and
/// `b = a + width` to `1/2 - width/4` and `1/2 + width/4`.
pub fn bias_shift(a: f64, b: f64) -> (f64, f64) {
    let t = 0.5 - (a + b) / 4.0;
    let h = 1.0 - (a + b) / 4.0;
    (h, t)
}

/// Coin obtained by reflipping another coin's outcomes.
///
/// With `reflect` set, heads and tails of the inner coin are swapped first.
pub struct ShiftedCoin<'a, C: ?Sized> {
    inner: &'a mut C,
    keep_heads: f64,
    tails_to_heads: f64,
    reflect: bool,
    rng: ChaCha8Rng,
}

impl<'a, C: Coin + ?Sized> ShiftedCoin<'a, C> {
    pub fn new(
        inner: &'a mut C,
        keep_heads: f64,
        tails_to_heads: f64,
        reflect: bool,
        seed: u64,
    ) -> Self {
        ShiftedCoin {
            inner,
            keep_heads,
            tails_to_heads,
            reflect,
            rng: sample_rng(seed),
        }
    }
}

impl<C: Coin + ?Sized> Coin for ShiftedCoin<'_, C> {
    fn flip(&mut self) -> bool {
        let heads = self.inner.flip() != self.reflect;
        let u = crate::randomness::unit_f64(self.rng.next_u64());
        if heads {
            u < self.keep_heads
        } else {
            u < self.tails_to_heads
        }
    }
    fn heads(&mut self, m: u64) -> u64 {
        let raw = self.inner.heads(m);
        let heads = if self.reflect { m - raw } else { raw };
        binomial(&mut self.rng, heads, self.keep_heads)
            + binomial(&mut self.rng, m - heads, self.tails_to_heads)
    }
    fn consumed(&self) -> u64 {
        self.inner.consumed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfLearnConfig {
    /// Divisor applied to the per-round replicability and failure budgets.
    pub round_constant: f64,
    pub n_coin: NCoinConfig,
}

impl Default for LinfLearnConfig {
    fn default() -> Self {
        LinfLearnConfig {
            round_constant: 8.0,
            n_coin: NCoinConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinfLearnOutcome {
    pub estimate: Vec<f64>,
    pub samples_used: u64,
    pub rounds: u32,
    pub cap_breaches: u32,
}

/// Learns every bias to within `eps` in sup norm by simultaneous binary search.
pub fn linf_learn_by_search_with<C: Coin>(
    sources: &mut [C],
    eps: f64,
    rho: f64,
    delta: f64,
    config: &LinfLearnConfig,
    rand: &SharedRandomness,
) -> Result<LinfLearnOutcome> {
    ensure(eps > 0.0 && eps < 1.0, || {
        format!("eps must lie in (0, 1), got {eps}")
    })?;
    let n = sources.len();
    ensure(n >= 1, || "at least one coin is required".into())?;
    let cells = (2.0 / eps).ceil() as usize;
    let width = 1.0 / cells as f64;
    let divisor = config.round_constant * (1.0 / eps).log2().max(1.0);
    let params = CoinProblemParams::new(
        0.5 - eps / 16.0,
        0.5 + eps / 16.0,
        rho / divisor,
        delta / divisor,
    )?;
    // alive cells of coordinate i are lo[i]..hi[i]
    let mut lo = vec![0usize; n];
    let mut hi = vec![cells; n];
    let before: u64 = sources.iter().map(|c| c.consumed()).sum();
    let mut rounds = 0;
    let mut cap_breaches = 0;
    loop {
        let active: Vec<usize> = (0..n).filter(|&i| hi[i] - lo[i] > 1).collect();
        if active.is_empty() {
            break;
        }
        let round_rand = rand.derive(rounds as u64);
        let reflip_seed = round_rand.derive(u64::MAX).next_u64();
        let mut medians = Vec::with_capacity(active.len());
        let mut shifted = Vec::with_capacity(active.len());
        let mut reflected = Vec::with_capacity(active.len());
        for (i, coin) in sources
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| hi[*i] - lo[*i] > 1)
        {
            let c = lo[i] + (hi[i] - lo[i] - 1) / 2;
            let a = c as f64 * width;
            let b = a + width;
            let reflect = a > (1.0 - width) / 2.0;
            let (a, b) = if reflect { (1.0 - b, 1.0 - a) } else { (a, b) };
            let (h, t) = bias_shift(a, b);
            medians.push(c);
            reflected.push(reflect);
            shifted.push(ShiftedCoin::new(
                coin,
                h,
                t,
                reflect,
                reflip_seed ^ crate::randomness::splitmix64(i as u64),
            ));
        }
        let out = n_coin_test_with(&mut shifted, &params, &config.n_coin, &round_rand)?;
        drop(shifted);
        if out.cap_breached {
            cap_breaches += 1;
        }
        for (k, &i) in active.iter().enumerate() {
            let accepted = out.accepted.binary_search(&k).is_ok();
            let verdict = if accepted {
                Verdict::Accept
            } else {
                Verdict::Reject
            };
            let verdict = if reflected[k] {
                verdict.flip()
            } else {
                verdict
            };
            let c = medians[k];
            match verdict {
                Verdict::Accept => lo[i] = c + 1,
                Verdict::Reject => hi[i] = c,
            }
        }
        rounds += 1;
    }
    let estimate = (0..n)
        .map(|i| {
            if hi[i] > lo[i] {
                (lo[i] as f64 + 0.5) * width
            } else {
                // both of the last two cells were removed; report their shared endpoint
                (lo[i] as f64 + 1.0) * width
            }
        })
        .collect();
    let after: u64 = sources.iter().map(|c| c.consumed()).sum();
    Ok(LinfLearnOutcome {
        estimate,
        samples_used: after - before,
        rounds,
        cap_breaches,
    })
}

pub fn linf_learn_by_search<C: Coin>(
    sources: &mut [C],
    eps: f64,
    rho: f64,
    delta: f64,
    rand: &SharedRandomness,
) -> Result<LinfLearnOutcome> {
    linf_learn_by_search_with(sources, eps, rho, delta, &LinfLearnConfig::default(), rand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::Bernoulli;
    use proptest::prelude::*;

    fn coins(biases: &[f64], seed: u64) -> Vec<Bernoulli> {
        biases
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                Bernoulli::new(p, seed.wrapping_mul(1000).wrapping_add(i as u64)).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_task_without_cap_returns_its_output() {
        let budget = CompositionBudget::unlimited(0.1, 0.1);
        let out = compose_adaptive(
            &mut (),
            1,
            &budget,
            &SharedRandomness::new(1),
            |_, _, _: &[u32], _| (7u32, 10),
            |t| t[0],
            |_| (0, 0),
        );
        assert_eq!(out.output, 7);
        assert!(!out.cap_breached);
        assert_eq!(out.total_samples, 10);
    }

    #[test]
    fn zero_cap_always_falls_back() {
        let budget = CompositionBudget {
            per_task_rho: 0.1,
            per_task_delta: 0.1,
            sample_cap: 0,
        };
        let out = compose_adaptive(
            &mut (),
            3,
            &budget,
            &SharedRandomness::new(1),
            |_, _, _: &[u32], _| (7u32, 1),
            |t| t[0],
            |_| (99, 5),
        );
        assert_eq!(out.output, 99);
        assert!(out.cap_breached);
        assert_eq!(out.total_samples, 6);
        assert_eq!(out.fallback_samples, 5);
    }

    #[test]
    fn tasks_receive_derived_streams_and_transcripts() {
        let budget = CompositionBudget::unlimited(0.1, 0.1);
        let root = SharedRandomness::new(42);
        let out = compose_adaptive(
            &mut (),
            4,
            &budget,
            &root,
            |_, i, t: &[u64], r| {
                assert_eq!(t.len(), i);
                (r.next_u64(), 0)
            },
            |t| t,
            |_| (vec![], 0),
        );
        for (i, v) in out.output.iter().enumerate() {
            assert_eq!(*v, root.derive(i as u64).next_u64());
        }
    }

    #[test]
    fn extreme_biases() {
        let p = CoinProblemParams::new(0.3, 0.6, 0.3, 0.05).unwrap();
        for s in 0..20 {
            let out =
                n_coin_test(&mut coins(&[0.0; 16], s), &p, &SharedRandomness::new(s)).unwrap();
            assert!(out.accepted.is_empty());
            let out =
                n_coin_test(&mut coins(&[1.0; 16], s), &p, &SharedRandomness::new(s)).unwrap();
            assert_eq!(out.accepted.len(), 16);
            assert_eq!(out.total_samples, out.samples_per_coin.iter().sum::<u64>());
        }
    }

    #[test]
    fn cap_respects_single_task_worst_case() {
        let p = CoinProblemParams::new(0.3, 0.6, 0.3, 0.05).unwrap();
        let b = n_coin_budget(16, &p, &NCoinConfig::default());
        let task = CoinProblemParams::new(0.3, 0.6, 0.3 / 16.0, 0.05 / 32.0).unwrap();
        assert!(b.sample_cap >= AdaptiveCoinTester::new(task).worst_case_samples());
    }

    #[test]
    fn slack_outside_range_is_rejected() {
        let p = CoinProblemParams::new(0.3, 0.6, 0.2, 0.05).unwrap();
        let mut c = coins(&[0.5; 4], 1);
        let r = SharedRandomness::new(1);
        assert!(matches!(
            approx_n_coin_test(&mut c, &p, 0, &r),
            Err(Error::InvalidRange(_))
        ));
        assert!(matches!(
            approx_n_coin_test(&mut c, &p, 5, &r),
            Err(Error::InvalidRange(_))
        ));
        assert!(approx_n_coin_test(&mut c, &p, 4, &r).is_ok());
    }

    #[test]
    fn approx_tester_is_correct_on_separated_coins() {
        let p = CoinProblemParams::new(0.3, 0.6, 0.2, 0.05).unwrap();
        let biases: Vec<f64> = (0..32)
            .map(|i| if i % 2 == 0 { 0.1 } else { 0.9 })
            .collect();
        let out =
            approx_n_coin_test(&mut coins(&biases, 3), &p, 4, &SharedRandomness::new(3)).unwrap();
        let expect: Vec<usize> = (0..32).filter(|i| i % 2 == 1).collect();
        assert_eq!(out.accepted, expect);
    }

    #[test]
    fn bias_shift_worked_example() {
        let (h, t) = bias_shift(0.4, 0.5);
        assert!((t - 0.275).abs() < 1e-15);
        assert!((h - 0.775).abs() < 1e-15);
        assert!((0.4 * h + 0.6 * t - 0.475).abs() < 1e-12);
        assert!((0.5 * h + 0.5 * t - 0.525).abs() < 1e-12);
    }

    #[test]
    fn shifted_coin_has_the_mapped_bias() {
        let (h, t) = bias_shift(0.4, 0.5);
        for (p, reflect, expect) in [(0.4, false, 0.475), (0.5, false, 0.525), (0.6, true, 0.475)] {
            let mut base = Bernoulli::new(p, 11).unwrap();
            let mut s = ShiftedCoin::new(&mut base, h, t, reflect, 12);
            let rate = s.heads(2_000_000) as f64 / 2e6;
            assert!((rate - expect).abs() < 0.002, "p={p}: {rate}");
            let single = (0..100_000).filter(|_| s.flip()).count() as f64 / 1e5;
            assert!((single - expect).abs() < 0.01);
        }
    }

    #[test]
    fn learner_on_zero_biases() {
        for s in 0..20 {
            let out = linf_learn_by_search(
                &mut coins(&[0.0; 4], s),
                0.125,
                0.3,
                0.05,
                &SharedRandomness::new(s),
            )
            .unwrap();
            assert!(
                out.estimate.iter().all(|&e| e.abs() <= 0.125),
                "{:?}",
                out.estimate
            );
        }
    }

    #[test]
    fn learner_accuracy_on_random_biases() {
        let trials = 100;
        let mut ok = 0;
        for s in 0..trials {
            let mut r = SharedRandomness::new(10_000 + s);
            let biases: Vec<f64> = (0..8).map(|_| r.unit()).collect();
            let out = linf_learn_by_search(
                &mut coins(&biases, s),
                0.125,
                0.3,
                0.05,
                &SharedRandomness::new(s),
            )
            .unwrap();
            let err = biases
                .iter()
                .zip(&out.estimate)
                .map(|(p, e)| (p - e).abs())
                .fold(0.0, f64::max);
            if err <= 0.125 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}/{trials}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn bias_shift_solves_both_equations(a in 0.0f64..0.45, width in 0.01f64..0.1) {
            prop_assume!(a <= (1.0 - width) / 2.0);
            let b = a + width;
            let (h, t) = bias_shift(a, b);
            prop_assert!(h > 0.0 && h < 1.0 && t > 0.0 && t < 1.0);
            prop_assert!((a * h + (1.0 - a) * t - (0.5 - width / 4.0)).abs() < 1e-12);
            prop_assert!((b * h + (1.0 - b) * t - (0.5 + width / 4.0)).abs() < 1e-12);
        }

        #[test]
        fn cap_breach_implies_fallback_and_conserves_samples(cap in 0u64..50, costs in proptest::collection::vec(0u64..20, 1..8)) {
            let budget = CompositionBudget { per_task_rho: 0.1, per_task_delta: 0.1, sample_cap: cap };
            let n = costs.len();
            let out = compose_adaptive(
                &mut (),
                n,
                &budget,
                &SharedRandomness::new(0),
                |_, i, _: &[u64], _| (i as u64, costs[i]),
                |_| false,
                |_| (true, 3),
            );
            prop_assert_eq!(out.output, out.cap_breached);
            prop_assert_eq!(out.total_samples, out.task_samples.iter().sum::<u64>() + out.fallback_samples);
            let mut running = 0;
            let mut breach = false;
            for c in &costs {
                running += c;
                if running > cap { breach = true; break; }
            }
            prop_assert_eq!(breach, out.cap_breached);
        }
    }
}

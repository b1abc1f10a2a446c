//! Replicable identification of coins with near-maximal bias.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{ensure, Error, Result};
use crate::heavyhitters::{adaptive_heavy_hitters, HeavyHitterParams};
use crate::randomness::{Coin, Discrete, DiscreteSource, SharedRandomness};
use crate::statq::{adaptive_stat_query, StatQueryParams};
use crate::util::ceil_u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoMaxParams {
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
}

impl PseudoMaxParams {
    pub fn new(n: usize, k: usize, eps: f64, rho: f64, delta: f64) -> Result<Self> {
        ensure(k >= 1 && k <= n, || {
            format!("need 1 <= K <= N, got K={k}, N={n}")
        })?;
        ensure(eps > 0.0 && eps < 1.0, || {
            format!("eps must lie in (0, 1), got {eps}")
        })?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < 1.0, || {
            format!("delta must lie in (0, 1), got {delta}")
        })?;
        Ok(PseudoMaxParams {
            n,
            k,
            eps,
            rho,
            delta,
        })
    }

    /// Bucket count of the K-pseudo-maximum search.
    pub fn buckets(&self) -> usize {
        let k = self.k as f64;
        ((k / (12.0 * (6.0 * k / self.delta).ln())).floor() as usize).max(1)
    }

    /// Target count after raising `K` to `ceil(6 ln(3/delta))`.
    pub fn boosted_k(&self) -> usize {
        self.k.max(ceil_u64(6.0 * (3.0 / self.delta).ln()) as usize)
    }

    /// `ceil(N^(1/3) K^(2/3))` at the boosted `K`.
    pub fn t(&self) -> usize {
        let k = self.boosted_k() as f64;
        ((self.n as f64).cbrt() * k.powf(2.0 / 3.0)).ceil() as usize
    }
}

/// Flips per coin in [`find_maximum`] over a subset of `len` coins.
pub fn find_maximum_samples(len: usize, delta: f64, eps: f64) -> u64 {
    ceil_u64(27.0 / (eps * eps) * (2.0 * len as f64 / delta).ln())
}

/// Index in `subset` of the largest empirical bias; ties go to the lowest coin index.
pub fn find_maximum<C: Coin>(
    sources: &mut [C],
    subset: &[usize],
    delta: f64,
    eps: f64,
) -> Result<usize> {
    if subset.is_empty() {
        return Err(Error::Domain(
            "find_maximum needs a non-empty subset".into(),
        ));
    }
    let m = find_maximum_samples(subset.len(), delta, eps);
    let mut best: Option<(u64, usize)> = None;
    for &i in subset {
        let h = sources[i].heads(m);
        best = match best {
            Some((bh, bi)) if bh > h || (bh == h && bi < i) => Some((bh, bi)),
            _ => Some((h, i)),
        };
    }
    Ok(best.expect("non-empty").1)
}

struct Window {
    lo: u64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

fn window_bounds(m: u64, p: f64) -> (u64, u64) {
    if p <= 0.0 {
        (0, 0)
    } else if p >= 1.0 {
        (m, m)
    } else {
        let mean = m as f64 * p;
        let sd = (mean * (1.0 - p)).sqrt();
        let lo = (mean - 12.0 * sd - 2.0).floor().max(0.0) as u64;
        let hi = ((mean + 12.0 * sd + 2.0).ceil() as u64).min(m);
        (lo, hi)
    }
}

impl Window {
    fn new(m: u64, p: f64) -> Window {
        let (lo, hi) = window_bounds(m, p);
        let mut pmf = vec![0.0; (hi - lo + 1) as usize];
        if p <= 0.0 || p >= 1.0 {
            pmf[0] = 1.0;
        } else {
            // walk outwards from the mode with the ratio of consecutive terms
            let mode = (((m + 1) as f64 * p).floor() as u64).clamp(lo, hi);
            let odds = p / (1.0 - p);
            let at = |k: u64| (k - lo) as usize;
            pmf[at(mode)] =
                (ln_binomial(m, mode) + mode as f64 * p.ln() + (m - mode) as f64 * (1.0 - p).ln())
                    .exp();
            for k in mode..hi {
                pmf[at(k + 1)] = pmf[at(k)] * (m - k) as f64 / (k + 1) as f64 * odds;
            }
            for k in (lo + 1..=mode).rev() {
                pmf[at(k - 1)] = pmf[at(k)] * k as f64 / ((m - k + 1) as f64 * odds);
            }
        }
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|x| *x /= total);
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Window { lo, pmf, cdf }
    }

    fn hi(&self) -> u64 {
        self.lo + self.pmf.len() as u64 - 1
    }

    /// P(X <= k).
    fn at_most(&self, k: u64) -> f64 {
        if k < self.lo {
            0.0
        } else if k >= self.hi() {
            1.0
        } else {
            self.cdf[(k - self.lo) as usize]
        }
    }

    /// P(X < k).
    fn below(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.at_most(k - 1)
        }
    }
}

/// Output distribution of [`find_maximum`] for coins of known bias, each
/// flipped `m` times, listed in increasing index order (ties go to the
/// earliest). Binomial tails beyond 12 standard deviations are dropped.
pub fn find_maximum_distribution(biases: &[f64], m: u64) -> Vec<f64> {
    let bounds: Vec<(u64, u64)> = biases.iter().map(|&p| window_bounds(m, p)).collect();
    let floor = bounds.iter().map(|b| b.0).max().unwrap_or(0);
    let live: Vec<usize> = (0..biases.len())
        .filter(|&i| bounds[i].1 >= floor)
        .collect();
    let windows: Vec<(usize, Window)> = live
        .iter()
        .map(|&i| (i, Window::new(m, biases[i])))
        .collect();
    let mut out = vec![0.0; biases.len()];
    for (i, w) in &windows {
        let mut total = 0.0;
        for k in w.lo.max(floor)..=w.hi() {
            let mut prob = w.pmf[(k - w.lo) as usize];
            for (j, v) in &windows {
                if j == i || prob == 0.0 {
                    continue;
                }
                prob *= if j < i { v.below(k) } else { v.at_most(k) };
            }
            total += prob;
        }
        out[*i] = total;
    }
    out
}

/// Outputs of repeated [`find_maximum`] calls on one bucket.
struct FindMaxRuns<'a, C> {
    sources: &'a mut [C],
    subset: Vec<usize>,
    delta: f64,
    eps: f64,
    calls: u64,
}

impl<C: Coin> DiscreteSource for FindMaxRuns<'_, C> {
    type Item = usize;
    fn draw(&mut self) -> usize {
        self.calls += 1;
        find_maximum(self.sources, &self.subset, self.delta, self.eps).expect("bucket is non-empty")
    }
    fn consumed(&self) -> u64 {
        self.calls
    }
}

/// Uniform shared-random assignment of `n` coins to `b` buckets.
pub fn bucket_assignment(n: usize, b: usize, rand: &mut SharedRandomness) -> Vec<usize> {
    (0..n).map(|_| rand.index(b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPseudoMaxOutcome {
    pub set: Vec<usize>,
    pub p_hat_max: f64,
    pub buckets: Vec<usize>,
    pub bucket_estimates: Vec<Option<f64>>,
    /// Coin flips, including those simulated by the exact fast path.
    pub samples_used: u64,
}

/// Replicable K-pseudo-maximum identification; requires `K <= N / 4`.
pub fn k_pseudo_max<C: Coin>(
    sources: &mut [C],
    params: &PseudoMaxParams,
    rand: &SharedRandomness,
) -> Result<KPseudoMaxOutcome> {
    ensure(sources.len() == params.n, || {
        format!("expected {} coins, got {}", params.n, sources.len())
    })?;
    ensure(4 * params.k <= params.n, || {
        format!("need K <= N/4, got K={}, N={}", params.k, params.n)
    })?;
    Ok(k_pseudo_max_unchecked(sources, params, rand))
}

fn counters<C: Coin>(sources: &[C]) -> u64 {
    sources.iter().map(|c| c.consumed()).sum()
}

fn k_pseudo_max_unchecked<C: Coin>(
    sources: &mut [C],
    params: &PseudoMaxParams,
    rand: &SharedRandomness,
) -> KPseudoMaxOutcome {
    let start = counters(sources);
    let n = sources.len();
    let b = params.buckets();
    let kf = params.k as f64;
    let bf = b as f64;
    let buckets = bucket_assignment(n, b, &mut rand.derive(0));
    let delta_max = bf / (18.0 * kf);
    // 4 eps < v fails by design here; v - eps stays positive
    let hh = HeavyHitterParams::relaxed(
        bf / (9.0 * kf),
        bf / (18.0 * kf),
        params.rho / (2.0 * bf),
        params.delta / (3.0 * bf),
    )
    .expect("bucket heavy-hitter parameters are in range");
    let sq = StatQueryParams::new(
        params.eps,
        params.rho / (2.0 * bf),
        params.delta / (3.0 * bf),
    )
    .expect("statistical query parameters are in range");
    let mut simulated = 0u64;
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); b];
    let mut estimates: Vec<Option<f64>> = vec![None; b];
    for bucket in 0..b {
        let members: Vec<usize> = (0..n).filter(|&i| buckets[i] == bucket).collect();
        if members.is_empty() {
            continue;
        }
        let mut hh_rand = rand.derive(1 + 2 * bucket as u64);
        let biases: Option<Vec<f64>> = members.iter().map(|&i| sources[i].known_bias()).collect();
        let found = match biases {
            Some(biases) => {
                let m = find_maximum_samples(members.len(), delta_max, params.eps);
                let probs = find_maximum_distribution(&biases, m);
                let seed = sources[members[0]].sample_seed();
                let atoms = members.iter().copied().zip(probs).collect();
                let mut dist =
                    Discrete::new(atoms, seed).expect("find-maximum distribution has mass");
                let out = adaptive_heavy_hitters(&mut dist, &hh, &mut hh_rand);
                simulated = simulated.saturating_add(
                    dist.consumed()
                        .saturating_mul(m)
                        .saturating_mul(members.len() as u64),
                );
                out
            }
            None => {
                let mut runs = FindMaxRuns {
                    sources: &mut *sources,
                    subset: members.clone(),
                    delta: delta_max,
                    eps: params.eps,
                    calls: 0,
                };
                adaptive_heavy_hitters(&mut runs, &hh, &mut hh_rand)
            }
        };
        if let Some(&rep) = found.set.first() {
            let mut sq_rand = rand.derive(2 + 2 * bucket as u64);
            estimates[bucket] =
                Some(adaptive_stat_query(&mut sources[rep], &sq, &mut sq_rand).value);
        }
        sets[bucket] = found.set;
    }
    let p_hat_max = estimates
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let p_hat_max = if p_hat_max.is_finite() {
        p_hat_max
    } else {
        0.0
    };
    let mut set: Vec<usize> = (0..b)
        .filter(|&bk| estimates[bk].is_some_and(|e| e >= p_hat_max - 5.0 * params.eps))
        .flat_map(|bk| sets[bk].iter().copied())
        .collect();
    set.sort_unstable();
    KPseudoMaxOutcome {
        set,
        p_hat_max,
        buckets,
        bucket_estimates: estimates,
        samples_used: counters(sources) - start + simulated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoMaxOutcome {
    pub set: Vec<usize>,
    pub boosted_k: usize,
    pub t: usize,
    pub inner: KPseudoMaxOutcome,
    /// Sampled coins with their estimated biases.
    pub sampled: Vec<(usize, f64)>,
    /// The sampled set exceeded `2KN/T` and the empty set was returned.
    pub aborted: bool,
    pub samples_used: u64,
}

/// Replicable pseudo-maximum identification.
pub fn pseudo_max<C: Coin>(
    sources: &mut [C],
    params: &PseudoMaxParams,
    rand: &SharedRandomness,
) -> Result<PseudoMaxOutcome> {
    ensure(sources.len() == params.n, || {
        format!("expected {} coins, got {}", params.n, sources.len())
    })?;
    let n = params.n;
    let eps = params.eps;
    let k = params.boosted_k();
    let t = params.t();
    let inner_params = PseudoMaxParams {
        n,
        k: t,
        eps: eps / 10.0,
        rho: params.rho / 2.0,
        delta: params.delta / 4.0,
    };
    let inner = k_pseudo_max_unchecked(sources, &inner_params, &rand.derive(0));
    let start = counters(sources);
    let rate = 2.0 * k as f64 / t as f64;
    let mut pick = rand.derive(1);
    let included: Vec<usize> = (0..n).filter(|_| pick.unit() < rate).collect();
    let mut out = PseudoMaxOutcome {
        set: Vec::new(),
        boosted_k: k,
        t,
        inner,
        sampled: Vec::new(),
        aborted: false,
        samples_used: 0,
    };
    if included.len() as f64 > rate * n as f64 {
        out.aborted = true;
        out.samples_used = out.inner.samples_used;
        return Ok(out);
    }
    let size = included.len().max(1) as f64;
    let sq = StatQueryParams::new(eps, params.rho / (2.0 * size), params.delta / (4.0 * size))?;
    let mut p_hat_i: f64 = 0.0;
    for &i in &included {
        let est = adaptive_stat_query(&mut sources[i], &sq, &mut rand.derive(2 + i as u64)).value;
        p_hat_i = p_hat_i.max(est);
        out.sampled.push((i, est));
    }
    let p0 = out.inner.p_hat_max;
    let mut set: Vec<usize> = Vec::new();
    if p0 >= p_hat_i - 3.0 * eps {
        set.extend(&out.inner.set);
    }
    let top = p0.max(p_hat_i);
    set.extend(
        out.sampled
            .iter()
            .filter(|(_, e)| *e >= top - eps)
            .map(|(i, _)| *i),
    );
    set.sort_unstable();
    set.dedup();
    out.set = set;
    out.samples_used = out.inner.samples_used + counters(sources) - start;
    Ok(out)
}

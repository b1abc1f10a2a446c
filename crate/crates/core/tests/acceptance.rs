//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines are always printed; the process exits
//! non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replicore::coin::{adaptive_coin_test, CoinProblemParams, Verdict};
use replicore::compose::{
    approx_n_coin_test, bias_shift, linf_learn_by_search, n_coin_test, NCoinOutcome,
};
use replicore::harness::find_good_string;
use replicore::heavyhitters::{adaptive_heavy_hitters, HeavyHitterParams};
use replicore::maxid::{pseudo_max, PseudoMaxParams};
use replicore::meanest::{replicable_mean_linf, MeanEstParams};
use replicore::randomness::{Bernoulli, Discrete, ProductBernoulli};
use replicore::statq::{adaptive_stat_query, StatQueryParams};
use replicore::tiling::{
    cube_tiling, default_cube_side, lattice_preprocess, replicable_round, RoundingParams,
};
use replicore::SharedRandomness;

const Z: f64 = 1.959_963_984_540_054;

/// Lower end of the Wilson 95% interval.
fn wilson_low(k: u64, n: u64) -> f64 {
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z * Z;
    let center = p + z2 / (2.0 * n);
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half) / (1.0 + z2 / n)).max(0.0)
}

fn rate(k: u64, n: u64) -> f64 {
    k as f64 / n as f64
}

/// Independent seeds for trial `t` of criterion `id`: (instance, internal, sample A, sample B).
fn seeds(id: u64, t: u64) -> (ChaCha8Rng, u64, u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t);
    let internal = rng.random();
    let a = rng.random();
    let b = rng.random();
    (rng, internal, a, b)
}

fn coins(biases: &[f64], seed: u64) -> Vec<Bernoulli> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    biases
        .iter()
        .map(|&p| Bernoulli::new(p, rng.random()).unwrap())
        .collect()
}

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------

fn c1_coin_replicability() -> Line {
    let start = Instant::now();
    let params = CoinProblemParams::new(0.3, 0.6, 0.2, 0.05).unwrap();
    let trials = 10_000;
    let mut differ = 0;
    for t in 0..trials {
        let (mut inst, r, a, b) = seeds(1, t);
        let p = inst.random_range(0.3..0.6);
        let run = |s: u64| {
            adaptive_coin_test(
                &mut Bernoulli::new(p, s).unwrap(),
                &params,
                &mut SharedRandomness::new(r),
            )
            .verdict
        };
        differ += u64::from(run(a) != run(b));
    }
    let elapsed = start.elapsed();
    let (nr, low) = (rate(differ, trials), wilson_low(differ, trials));
    Line {
        id: "C1",
        pass: nr <= 0.2 && low <= 0.2 && elapsed < Duration::from_secs(60),
        detail: format!(
            "coin replicability: non-replication {nr:.4} (Wilson low {low:.4}) <= 0.2 over {trials} paired trials in {}",
            secs(elapsed)
        ),
    }
}

fn c2_coin_correctness() -> Line {
    let params = CoinProblemParams::new(0.3, 0.6, 0.2, 0.05).unwrap();
    let trials = 5000;
    let mut rates = Vec::new();
    for (k, (p, wrong)) in [(0.3, Verdict::Accept), (0.6, Verdict::Reject)]
        .into_iter()
        .enumerate()
    {
        let errors = (0..trials)
            .filter(|&t| {
                let (_, r, a, _) = seeds(20 + k as u64, t);
                let out = adaptive_coin_test(
                    &mut Bernoulli::new(p, a).unwrap(),
                    &params,
                    &mut SharedRandomness::new(r),
                );
                out.verdict == wrong
            })
            .count() as u64;
        rates.push(rate(errors, trials));
    }
    Line {
        id: "C2",
        pass: rates.iter().all(|&e| e <= 0.05 * 3.0),
        detail: format!(
            "coin correctness: error {:.4} at p0, {:.4} at q0 <= 0.15 over {trials} trials each",
            rates[0], rates[1]
        ),
    }
}

/// Sum of the batch sizes `ceil(3 q0 / eps_t^2 ln(2T/delta'))`, `delta' = min(delta, rho/4)`.
fn coin_cap(p0: f64, q0: f64, rho: f64, delta: f64) -> u64 {
    let rounds = (4.0 + (1.0 / rho).log2()).ceil() as i32;
    let d = delta.min(rho / 4.0);
    (1..=rounds)
        .map(|t| {
            let eps = (q0 - p0) / 2f64.powi(t + 2);
            (3.0 * q0 / (eps * eps) * (2.0 * rounds as f64 / d).ln()).ceil() as u64
        })
        .sum()
}

fn c3_linear_overhead() -> Line {
    let trials = 2000;
    let mut means = Vec::new();
    let mut over_cap = 0;
    for (k, rho) in [0.4, 0.2, 0.1, 0.05].into_iter().enumerate() {
        let params = CoinProblemParams::new(0.3, 0.6, rho, 0.05).unwrap();
        let cap = coin_cap(0.3, 0.6, rho, 0.05);
        let mut total = 0u64;
        for t in 0..trials {
            let (mut inst, r, a, _) = seeds(30 + k as u64, t);
            let p = inst.random_range(0.3..0.6);
            let out = adaptive_coin_test(
                &mut Bernoulli::new(p, a).unwrap(),
                &params,
                &mut SharedRandomness::new(r),
            );
            total += out.samples_used;
            over_cap += u64::from(out.samples_used > cap);
        }
        means.push(total as f64 / trials as f64);
    }
    let ratios: Vec<f64> = means.windows(2).map(|w| w[1] / w[0]).collect();
    Line {
        id: "C3",
        pass: ratios.iter().all(|r| (1.4..=2.8).contains(r)) && over_cap == 0,
        detail: format!(
            "linear overhead: mean-sample ratios {} in [1.4, 2.8]; {over_cap} runs above the batch-sum cap",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn c4_stat_query() -> Line {
    let (tau, rho, delta) = (0.1, 0.2, 0.05);
    let params = StatQueryParams::new(tau, rho, delta).unwrap();
    let trials = 5000;
    let mut accurate = 0;
    let mut differ = 0;
    for t in 0..trials {
        let (mut inst, r, a, b) = seeds(4, t);
        let p = inst.random_range(0.1..0.9);
        let run = |s: u64| {
            adaptive_stat_query(
                &mut Bernoulli::new(p, s).unwrap(),
                &params,
                &mut SharedRandomness::new(r),
            )
            .value
        };
        let (x, y) = (run(a), run(b));
        accurate += u64::from((x - p).abs() <= tau);
        differ += u64::from(x != y);
    }
    let mut means = Vec::new();
    for (k, rho) in [0.4, 0.2, 0.1, 0.05].into_iter().enumerate() {
        let params = StatQueryParams::new(tau, rho, delta).unwrap();
        let total: u64 = (0..1000)
            .map(|t| {
                let (mut inst, r, a, _) = seeds(40 + k as u64, t);
                let p = inst.random_range(0.1..0.9);
                adaptive_stat_query(
                    &mut Bernoulli::new(p, a).unwrap(),
                    &params,
                    &mut SharedRandomness::new(r),
                )
                .samples_used
            })
            .sum();
        means.push(total as f64 / 1000.0);
    }
    let ratios: Vec<f64> = means.windows(2).map(|w| w[1] / w[0]).collect();
    let acc = rate(accurate, trials);
    let nr = rate(differ, trials);
    Line {
        id: "C4",
        pass: acc >= 1.0 - 3.0 * delta && nr <= rho && ratios.iter().all(|r| (1.4..=2.8).contains(r)),
        detail: format!(
            "statistical query: within tau in {acc:.4} >= 0.85; disagreement {nr:.4} <= 0.2; rho-sweep ratios {}",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn c5_heavy_hitters() -> Line {
    let (v, eps, rho, delta) = (0.45, 0.1, 0.2, 0.01);
    let params = HeavyHitterParams::new(v, eps, rho, delta).unwrap();
    let atoms = vec![('a', 0.6), ('b', 0.3), ('c', 0.1)];
    let mass = |x: char| atoms.iter().find(|(y, _)| *y == x).map_or(0.0, |a| a.1);
    let trials = 10_000;
    let mut equal = 0;
    let mut sound = 0;
    for t in 0..trials {
        let (_, r, a, b) = seeds(5, t);
        let run = |s: u64| {
            let mut d = Discrete::new(atoms.clone(), s).unwrap();
            adaptive_heavy_hitters(&mut d, &params, &mut SharedRandomness::new(r)).set
        };
        let (x, y) = (run(a), run(b));
        equal += u64::from(x == y);
        sound += u64::from(x.iter().chain(&y).all(|&e| mass(e) >= v - eps));
    }
    let (eq, so) = (rate(equal, trials), rate(sound, trials));
    Line {
        id: "C5",
        pass: eq >= 1.0 - 3.0 * rho && so >= 1.0 - 3.0 * delta,
        detail: format!(
            "heavy hitters: paired sets equal in {eq:.4} >= 0.4; all returned masses >= v - eps in {so:.4} >= 0.97"
        ),
    }
}

fn c6_rounding() -> Line {
    let start = Instant::now();
    let (n, eps, rho) = (4usize, 0.5, 0.2);
    let side = 0.2 / (n as f64).sqrt();
    let area = 2.0 * n as f64 / side;
    let gap = 0.1 * (n as f64).sqrt() * eps * rho / area;
    let tiling = cube_tiling(n, default_cube_side(n)).unwrap();
    let params = RoundingParams::new(n, eps, rho).unwrap();
    let round = |u: &[f64], r: u64| {
        replicable_round(u, &tiling, &params, &mut SharedRandomness::new(r))
            .unwrap()
            .value
    };
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let trials = 10_000;
    let mut differ = 0;
    for t in 0..trials {
        let (mut inst, r, _, _) = seeds(6, t);
        let u: Vec<f64> = (0..n).map(|_| inst.random_range(-2.0..2.0)).collect();
        let dir: Vec<f64> = (0..n).map(|_| inst.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let w: Vec<f64> = u
            .iter()
            .zip(&dir)
            .map(|(x, d)| x + gap * d / norm)
            .collect();
        differ += u64::from(round(&u, r) != round(&w, r));
    }
    let runs = 100_000;
    let mut violations = 0;
    for t in 0..runs {
        let (mut inst, r, _, _) = seeds(60, t);
        let u: Vec<f64> = (0..n).map(|_| inst.random_range(-4.0..=4.0)).collect();
        violations += u64::from(dist(&round(&u, r), &u) > eps);
    }
    let elapsed = start.elapsed();
    let nr = rate(differ, trials);
    Line {
        id: "C6",
        pass: nr <= 0.2 * 3.0 && violations == 0 && elapsed < Duration::from_secs(120),
        detail: format!(
            "rounding: disagreement {nr:.4} <= 0.6 at distance {gap:.2e}; {violations} of {runs} outputs farther than eps; {}",
            secs(elapsed)
        ),
    }
}

/// Exhaustive search over the coefficient box `|z_i - (B^-1 t)_i| <= |row_i(B^-1)| d`,
/// where `d` bounds the distance to the closest point. Ties within 1e-12 in squared
/// distance go to the lexicographically smallest coefficients.
fn exhaustive_cvp(rows: &DMatrix<f64>, t: &DVector<f64>) -> Vec<i64> {
    let n = rows.nrows();
    let b = rows.transpose();
    let inv = b.clone().try_inverse().unwrap();
    let c = &inv * t;
    let at = |z: &[i64]| {
        (&b * DVector::from_iterator(n, z.iter().map(|&x| x as f64)) - t).norm_squared()
    };
    let guess: Vec<i64> = c.iter().map(|x| x.round() as i64).collect();
    let d = at(&guess).sqrt() + 1e-9;
    let lo: Vec<i64> = (0..n)
        .map(|i| (c[i] - inv.row(i).norm() * d).floor() as i64)
        .collect();
    let hi: Vec<i64> = (0..n)
        .map(|i| (c[i] + inv.row(i).norm() * d).ceil() as i64)
        .collect();
    let mut found: Vec<(f64, Vec<i64>)> = Vec::new();
    let mut z = lo.clone();
    'outer: loop {
        found.push((at(&z), z.clone()));
        for i in (0..n).rev() {
            if z[i] < hi[i] {
                z[i] += 1;
                continue 'outer;
            }
            z[i] = lo[i];
        }
        break;
    }
    let best = found.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    found
        .into_iter()
        .filter(|f| f.0 <= best + 1e-12)
        .map(|f| f.1)
        .min()
        .unwrap()
}

fn c7_cvp() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    let mut mismatches = 0;
    for n in 2..=4 {
        let mut bases = 0;
        while bases < 20 {
            let rows: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            if rows.determinant().abs() < 0.25 {
                continue;
            }
            bases += 1;
            let lattice = lattice_preprocess(&rows, f64::INFINITY).unwrap();
            for _ in 0..200 {
                let t = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
                compared += 1;
                mismatches +=
                    usize::from(lattice.closest(&t).coefficients != exhaustive_cvp(&rows, &t));
            }
        }
    }
    let hex = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 3f64.sqrt() / 2.0]);
    let hex = lattice_preprocess(&hex, f64::INFINITY).unwrap();
    let ratio = hex.mu() / hex.lambda();
    let err = (ratio - 2.0 / 3f64.sqrt()).abs();
    Line {
        id: "C7",
        pass: mismatches == 0 && err <= 1e-4,
        detail: format!(
            "closest vector: {mismatches} mismatches in {compared} targets on 60 bases; hexagonal mu/lambda {ratio:.6} (error {err:.1e})"
        ),
    }
}

fn c8_linf_mean() -> Line {
    let (n, gamma, rho, delta) = (9usize, 0.15, 0.3, 0.05);
    let params = MeanEstParams::linf(
        n,
        gamma,
        rho,
        delta,
        cube_tiling(n, default_cube_side(n)).unwrap(),
    )
    .unwrap();
    let trials = 1000;
    let mut accurate = 0;
    let mut equal = 0;
    for t in 0..trials {
        let (mut inst, r, a, b) = seeds(8, t);
        let p: Vec<f64> = (0..n).map(|_| inst.random_range(0.25..0.75)).collect();
        let run = |s: u64| {
            let mut src = ProductBernoulli::new(&p, s).unwrap();
            replicable_mean_linf(&mut src, &params, &SharedRandomness::new(r))
                .unwrap()
                .estimate
        };
        let (x, y) = (run(a), run(b));
        let err = |e: &[f64]| {
            e.iter()
                .zip(&p)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max)
        };
        accurate += u64::from(err(&x) <= 3.0 * gamma && err(&y) <= 3.0 * gamma);
        equal += u64::from(x == y);
    }
    let (acc, eq) = (rate(accurate, trials), rate(equal, trials));
    Line {
        id: "C8",
        pass: acc >= 0.9 && eq >= 1.0 - 3.0 * rho,
        detail: format!(
            "l-infinity mean: error <= 3 gamma in {acc:.4} >= 0.9; paired equality {eq:.4} >= 0.1"
        ),
    }
}

fn n_coin_mean_samples(n: usize, rho: f64, trials: u64, id: u64) -> (f64, u64, u64, u64) {
    let params = CoinProblemParams::new(0.3, 0.6, rho, 0.05).unwrap();
    let (mut total, mut differ, mut breaches) = (0u64, 0u64, 0u64);
    for t in 0..trials {
        let (mut inst, r, a, b) = seeds(id, t);
        let p: Vec<f64> = (0..n).map(|_| inst.random_range(0.0..1.0)).collect();
        let run =
            |s: u64| n_coin_test(&mut coins(&p, s), &params, &SharedRandomness::new(r)).unwrap();
        let (x, y): (NCoinOutcome, NCoinOutcome) = (run(a), run(b));
        total = total
            .saturating_add(x.total_samples)
            .saturating_add(y.total_samples);
        differ += u64::from(x.accepted != y.accepted);
        breaches += u64::from(x.cap_breached) + u64::from(y.cap_breached);
    }
    (total as f64 / (2 * trials) as f64, differ, breaches, trials)
}

fn c9_n_coin() -> Line {
    let (mean, differ, breaches, trials) = n_coin_mean_samples(16, 0.3, 5000, 9);
    // same instances and seeds at both rho; totals are heavy-tailed through cap breaches
    let (half, ..) = n_coin_mean_samples(16, 0.15, 5000, 9);
    let ratio = half / mean;
    let nr = rate(differ, trials);
    let br = rate(breaches, 2 * trials);
    Line {
        id: "C9",
        pass: nr <= 0.3 * 3.0 && br <= 0.3 && (1.4..=2.8).contains(&ratio),
        detail: format!(
            "16-coin composition: set disagreement {nr:.4} <= 0.9; cap breaches {br:.4} <= 0.3; samples(rho/2)/samples(rho) {ratio:.2}"
        ),
    }
}

fn c10_approximate() -> Line {
    let (n, rho) = (32usize, 0.2);
    let params = CoinProblemParams::new(0.3, 0.6, rho, 0.05).unwrap();
    let trials = 5000;
    let mut far = 0;
    let (mut total4, mut total1) = (0u64, 0u64);
    for t in 0..trials {
        let (mut inst, r, a, b) = seeds(10, t);
        let p: Vec<f64> = (0..n).map(|_| inst.random_range(0.0..1.0)).collect();
        let run = |s: u64, slack: usize| {
            approx_n_coin_test(&mut coins(&p, s), &params, slack, &SharedRandomness::new(r))
                .unwrap()
        };
        let (x, y) = (run(a, 4), run(b, 4));
        let sx: BTreeSet<usize> = x.accepted.iter().copied().collect();
        let sy: BTreeSet<usize> = y.accepted.iter().copied().collect();
        far += u64::from(sx.symmetric_difference(&sy).count() >= 4);
        total4 = total4.saturating_add(x.total_samples);
        if t < 1000 {
            total1 = total1.saturating_add(run(a, 1).total_samples);
        }
    }
    let ratio = (total4 as f64 / trials as f64) / (total1 as f64 / 1000.0);
    let nr = rate(far, trials);
    Line {
        id: "C10",
        pass: nr <= 0.2 * 3.0 && ratio <= 0.5,
        detail: format!(
            "approximate replicability: symmetric difference >= 4 in {nr:.4} <= 0.6; samples(R=4)/samples(R=1) {ratio:.3} <= 0.5"
        ),
    }
}

fn c11_pseudo_max() -> Line {
    let (n, k, eps, rho, delta) = (64usize, 4usize, 0.1, 0.3, 0.05);
    let params = PseudoMaxParams::new(n, k, eps, rho, delta).unwrap();
    let p_max = 0.9;
    let trials = 1000;
    let mut unsound = 0;
    for t in 0..trials {
        let (mut inst, r, a, _) = seeds(11, t);
        let mut p: Vec<f64> = (0..n).map(|_| inst.random_range(0.0..0.8)).collect();
        p[inst.random_range(0..n)] = p_max;
        let out = pseudo_max(&mut coins(&p, a), &params, &SharedRandomness::new(r)).unwrap();
        unsound += u64::from(out.set.iter().any(|&i| p[i] < p_max - 6.0 * eps));
    }
    let planted = (k as f64 * (n as f64 / k as f64).cbrt()).ceil() as usize;
    let mut large = 0;
    for t in 0..trials {
        let (mut inst, r, a, _) = seeds(110, t);
        let mut p = vec![0.2; n];
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..planted {
            let j = inst.random_range(i..n);
            idx.swap(i, j);
            p[idx[i]] = p_max;
        }
        let out = pseudo_max(&mut coins(&p, a), &params, &SharedRandomness::new(r)).unwrap();
        large += u64::from(out.set.len() >= k);
    }
    let (bad, big) = (rate(unsound, trials), rate(large, trials));
    Line {
        id: "C11",
        pass: bad <= 3.0 * delta && big >= 1.0 - 3.0 * delta,
        detail: format!(
            "pseudo-maximum: returned a coin below p_max - 6 eps in {bad:.4} <= 0.15; |S| >= K with {planted} planted in {big:.4} >= 0.85"
        ),
    }
}

fn c12_good_string() -> Line {
    let (p0, q0, rho, delta) = (0.3, 0.6, 0.2, 0.05);
    let inner = CoinProblemParams::new(p0, q0, rho / 9.0, delta).unwrap();
    let meta = 500;
    let mut found = 0;
    let mut worst = 1.0f64;
    for m in 0..meta {
        let (mut inst, finder, _, _) = seeds(12, m);
        let p = inst.random_range(p0..q0);
        let run = |r: u64, s: u64| {
            adaptive_coin_test(
                &mut Bernoulli::new(p, s).unwrap(),
                &inner,
                &mut SharedRandomness::new(r),
            )
            .verdict
        };
        if let Ok(g) = find_good_string(run, rho, delta, 3.0, &mut SharedRandomness::new(finder)) {
            found += 1;
            let pairs = 200;
            let agree = (0..pairs)
                .filter(|_| run(g.seed, inst.random()) == run(g.seed, inst.random()))
                .count();
            worst = worst.min(agree as f64 / pairs as f64);
        }
    }
    let fr = rate(found, meta);
    Line {
        id: "C12",
        pass: fr >= 1.0 - 3.0 * delta && worst >= 1.0 - 3.0 * rho,
        detail: format!(
            "good-string finder: found in {fr:.4} >= 0.85 of {meta} meta-trials; lowest re-measured agreement {worst:.3} >= 0.4"
        ),
    }
}

fn c13_bias_shift() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    let mut outside = 0;
    for _ in 0..100 {
        let width: f64 = rng.random_range(0.01..0.3);
        let a = rng.random_range(0.0..=(1.0 - width) / 2.0);
        let b = a + width;
        let (h, t) = bias_shift(a, b);
        worst = worst
            .max((a * h + (1.0 - a) * t - (0.5 - width / 4.0)).abs())
            .max((b * h + (1.0 - b) * t - (0.5 + width / 4.0)).abs());
        outside += usize::from(!(0.0 < h && h < 1.0 && 0.0 < t && t < 1.0));
    }
    let (n, eps, rho, delta) = (8usize, 0.125, 0.3, 0.05);
    let trials = 1000;
    let mut accurate = 0;
    for t in 0..trials {
        let (mut inst, r, a, _) = seeds(13, t);
        let p: Vec<f64> = (0..n).map(|_| inst.random_range(0.0..1.0)).collect();
        let out = linf_learn_by_search(
            &mut coins(&p, a),
            eps,
            rho,
            delta,
            &SharedRandomness::new(r),
        )
        .unwrap();
        let err = out
            .estimate
            .iter()
            .zip(&p)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        accurate += u64::from(err <= eps);
    }
    let acc = rate(accurate, trials);
    Line {
        id: "C13",
        pass: worst <= 1e-12 && outside == 0 && acc >= 1.0 - 3.0 * delta,
        detail: format!(
            "bias shift: worst residual {worst:.1e}, {outside} pairs outside (0,1); l-infinity learning within eps in {acc:.4} >= 0.85"
        ),
    }
}

fn main() {
    let criteria: [fn() -> Line; 13] = [
        c1_coin_replicability,
        c2_coin_correctness,
        c3_linear_overhead,
        c4_stat_query,
        c5_heavy_hitters,
        c6_rounding,
        c7_cvp,
        c8_linf_mean,
        c9_n_coin,
        c10_approximate,
        c11_pseudo_max,
        c12_good_string,
        c13_bias_shift,
    ];
    let mut failed = 0;
    for criterion in criteria {
        let line = criterion();
        println!(
            "{:<4} {}  {}",
            line.id,
            if line.pass { "PASS" } else { "FAIL" },
            line.detail
        );
        failed += usize::from(!line.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

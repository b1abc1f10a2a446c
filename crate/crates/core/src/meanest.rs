//! Replicable mean estimation in high dimension: coarse replicable
//! localization, median of means, a geometric-median core estimator, and the
//! tiling-rounded l2 and l-infinity estimators.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::randomness::{SharedRandomness, VectorSource};
use crate::tiling::{replicable_round, RoundingParams, TilingOracle};
use crate::util::ceil_u64;

/// Number of batches used by [`median_of_means`].
pub fn median_of_means_batches(dim: usize, delta: f64) -> u64 {
    ceil_u64((dim as f64 / delta).log2()).max(1)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[(values.len() - 1) / 2]
}

/// Coordinate-wise median of `ceil(log2(N / delta))` batch means from `m` samples.
pub fn median_of_means<V: VectorSource + ?Sized>(
    source: &mut V,
    m: u64,
    delta: f64,
) -> Result<Vec<f64>> {
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    let n = source.dim();
    let t = median_of_means_batches(n, delta);
    if m < t {
        return Err(Error::Budget {
            budget: m,
            required: t,
        });
    }
    let per = m / t;
    let means: Vec<Vec<f64>> = (0..t).map(|_| source.batch_mean(per)).collect();
    Ok((0..n)
        .map(|i| {
            let mut col: Vec<f64> = means.iter().map(|v| v[i]).collect();
            lower_median(&mut col)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseOutcome {
    /// Multiples of `K` per coordinate.
    pub value: Vec<f64>,
    pub unrounded: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub samples_used: u64,
}

/// Sample size of [`coarse_round`].
pub fn coarse_samples(dim: usize, k: f64, rho: f64, delta: f64, constant: f64) -> u64 {
    let n = dim as f64;
    ceil_u64(constant * (n / (k * rho)).powi(2) * (n / delta).ln())
}

/// Rounds `x` to `k * j` or `k * (j + 1)` around the cut `k * j + theta`.
pub fn round_at_threshold(x: f64, k: f64, theta: f64) -> f64 {
    let j = (x / k).floor();
    if x - k * j < theta {
        k * j
    } else {
        k * (j + 1.0)
    }
}

/// Replicable `K`-accurate localization of the mean in l-infinity.
///
/// Each coordinate of a median-of-means estimate is rounded to a multiple of
/// `K` at a shared uniformly random cut inside each `K`-cell.
pub fn coarse_round<V: VectorSource + ?Sized>(
    source: &mut V,
    k: f64,
    rho: f64,
    delta: f64,
    constant: f64,
    rand: &mut SharedRandomness,
) -> Result<CoarseOutcome> {
    let n = source.dim();
    ensure(k > 0.0 && k <= n as f64, || {
        format!("K must lie in (0, {n}], got {k}")
    })?;
    ensure(rho > 0.0 && rho < 1.0, || {
        format!("rho must lie in (0, 1), got {rho}")
    })?;
    let start = source.consumed();
    let m = coarse_samples(n, k, rho, delta, constant);
    let unrounded = median_of_means(source, m, delta)?;
    let thresholds: Vec<f64> = (0..n)
        .map(|_| rand.uniform(0.0, k))
        .collect::<Result<_>>()?;
    let value = unrounded
        .iter()
        .zip(&thresholds)
        .map(|(&x, &theta)| round_at_threshold(x, k, theta))
        .collect();
    Ok(CoarseOutcome {
        value,
        unrounded,
        thresholds,
        samples_used: source.consumed() - start,
    })
}

/// Batches used by [`l2_core_estimate`].
pub fn l2_core_batches(delta: f64) -> u64 {
    ceil_u64(8.0 * (1.0 / delta).ln()).max(1)
}

/// Geometric median by Weiszfeld iteration, stopping when a step moves less than `tol`.
pub fn geometric_median(points: &[Vec<f64>], tol: f64) -> Vec<f64> {
    assert!(!points.is_empty(), "geometric median of no points");
    let n = points[0].len();
    let mut y: Vec<f64> = (0..n)
        .map(|i| points.iter().map(|p| p[i]).sum::<f64>() / points.len() as f64)
        .collect();
    for _ in 0..10_000 {
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for p in points {
            let d = p
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let w = 1.0 / d.max(1e-12);
            den += w;
            for (acc, a) in num.iter_mut().zip(p) {
                *acc += w * a;
            }
        }
        let next: Vec<f64> = num.iter().map(|a| a / den).collect();
        let step = next
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        y = next;
        if step < tol {
            break;
        }
    }
    y
}

/// Geometric median of `ceil(8 ln(1/delta))` batch means from `m` samples.
pub fn l2_core_estimate<V: VectorSource + ?Sized>(
    source: &mut V,
    m: u64,
    delta: f64,
) -> Result<Vec<f64>> {
    ensure(delta > 0.0 && delta < 1.0, || {
        format!("delta must lie in (0, 1), got {delta}")
    })?;
    let k = l2_core_batches(delta);
    if m < k {
        return Err(Error::Budget {
            budget: m,
            required: k,
        });
    }
    let per = m / k;
    let means: Vec<Vec<f64>> = (0..k).map(|_| source.batch_mean(per)).collect();
    Ok(geometric_median(&means, 1e-10))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    Linf,
}

#[derive(Debug, Clone)]
pub struct MeanEstParams {
    pub dim: usize,
    pub norm: Norm,
    /// `eps` for l2, `gamma` for l-infinity.
    pub accuracy: f64,
    pub rho: f64,
    pub delta: f64,
    pub tiling: TilingOracle,
    /// Multiplier in every sample-size formula.
    pub constant: f64,
    pub c_q: f64,
}

impl MeanEstParams {
    pub fn l2(dim: usize, eps: f64, rho: f64, delta: f64, tiling: TilingOracle) -> Result<Self> {
        let root = (dim as f64).sqrt();
        ensure(eps > 0.0 && eps < root, || {
            format!("eps must lie in (0, {root}), got {eps}")
        })?;
        Self::build(dim, Norm::L2, eps, rho, delta, tiling)
    }

    pub fn linf(
        dim: usize,
        gamma: f64,
        rho: f64,
        delta: f64,
        tiling: TilingOracle,
    ) -> Result<Self> {
        ensure(gamma > 0.0 && gamma < 1.0, || {
            format!("gamma must lie in (0, 1), got {gamma}")
        })?;
        let p = Self::build(dim, Norm::Linf, gamma, rho, delta, tiling)?;
        let eps = p.rounding_eps();
        ensure(eps < (dim as f64).sqrt(), || {
            format!("rounding accuracy {eps} too large; lower gamma")
        })?;
        Ok(p)
    }

    fn build(
        dim: usize,
        norm: Norm,
        accuracy: f64,
        rho: f64,
        delta: f64,
        tiling: TilingOracle,
    ) -> Result<Self> {
        ensure(dim > 0, || "dimension must be positive".into())?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(delta > 0.0 && delta < rho, || {
            format!("delta must lie in (0, rho), got {delta}")
        })?;
        ensure(tiling.dim() == dim, || {
            format!("tiling has dimension {}, expected {dim}", tiling.dim())
        })?;
        Ok(MeanEstParams {
            dim,
            norm,
            accuracy,
            rho,
            delta,
            tiling,
            constant: 3.0,
            c_q: 10.0,
        })
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    fn log_n_delta(&self) -> f64 {
        (self.dim as f64 / self.delta).ln()
    }

    /// Coarse-stage sample size.
    pub fn m1(&self) -> u64 {
        coarse_samples(
            self.dim,
            self.dim as f64,
            self.rho,
            self.delta,
            self.constant,
        )
    }

    /// Core-stage sample size.
    pub fn m2(&self) -> u64 {
        let n = self.dim as f64;
        let a2 = self.tiling.surface_area().powi(2);
        let scale = self.constant * a2 / (self.accuracy * self.accuracy * self.rho * self.rho * n);
        match self.norm {
            Norm::L2 => ceil_u64(scale * (n + (1.0 / self.delta).ln())),
            Norm::Linf => ceil_u64(scale * self.log_n_delta().powi(3)),
        }
    }

    /// Accuracy handed to the rounding step.
    pub fn rounding_eps(&self) -> f64 {
        match self.norm {
            Norm::L2 => self.accuracy,
            Norm::Linf => (self.dim as f64).sqrt() * self.accuracy / self.log_n_delta(),
        }
    }

    pub fn rounding_params(&self) -> Result<RoundingParams> {
        RoundingParams::with_constant(self.dim, self.rounding_eps(), self.rho, self.c_q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstOutcome {
    pub estimate: Vec<f64>,
    pub center: Vec<f64>,
    /// Core estimate minus the center, before rounding.
    pub offset: Vec<f64>,
    pub rounded_offset: Vec<f64>,
    pub samples_used: u64,
    pub rounding_fell_back: bool,
}

/// Replicable mean estimation with the norm selected by `params`.
pub fn replicable_mean<V: VectorSource + ?Sized>(
    source: &mut V,
    params: &MeanEstParams,
    rand: &SharedRandomness,
) -> Result<MeanEstOutcome> {
    if source.dim() != params.dim {
        return Err(Error::InvalidParameter(format!(
            "source has dimension {}, expected {}",
            source.dim(),
            params.dim
        )));
    }
    let n = params.dim as f64;
    let start = source.consumed();
    let coarse = coarse_round(
        source,
        n,
        params.rho,
        params.delta,
        params.constant,
        &mut rand.derive(0),
    )?;
    let center = coarse.value;
    let core = match params.norm {
        Norm::L2 => l2_core_estimate(source, params.m2(), params.delta)?,
        Norm::Linf => median_of_means(source, params.m2(), params.delta)?,
    };
    // a failed coarse stage can leave the offset outside the rounding domain
    let offset: Vec<f64> = core
        .iter()
        .zip(&center)
        .map(|(c, z)| (c - z).clamp(-n, n))
        .collect();
    let rounded = replicable_round(
        &offset,
        &params.tiling,
        &params.rounding_params()?,
        &mut rand.derive(1),
    )?;
    let estimate = center
        .iter()
        .zip(&rounded.value)
        .map(|(a, b)| a + b)
        .collect();
    Ok(MeanEstOutcome {
        estimate,
        center,
        offset,
        rounded_offset: rounded.value,
        samples_used: source.consumed() - start,
        rounding_fell_back: rounded.fell_back,
    })
}

/// Replicable l2 mean estimation.
pub fn replicable_mean_l2<V: VectorSource + ?Sized>(
    source: &mut V,
    params: &MeanEstParams,
    rand: &SharedRandomness,
) -> Result<MeanEstOutcome> {
    ensure(params.norm == Norm::L2, || {
        "parameters are for the l-infinity estimator".into()
    })?;
    replicable_mean(source, params, rand)
}

/// Replicable l-infinity mean estimation.
pub fn replicable_mean_linf<V: VectorSource + ?Sized>(
    source: &mut V,
    params: &MeanEstParams,
    rand: &SharedRandomness,
) -> Result<MeanEstOutcome> {
    ensure(params.norm == Norm::Linf, || {
        "parameters are for the l2 estimator".into()
    })?;
    replicable_mean(source, params, rand)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::{Constant, Gaussian, VectorFn};
    use crate::tiling::{cube_tiling, default_cube_side};
    use proptest::prelude::*;
    use rand::Rng;

    fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn median_of_means_on_constants() {
        let mut c = Constant::new(vec![1.5, -2.0]);
        assert_eq!(median_of_means(&mut c, 100, 0.05).unwrap(), vec![1.5, -2.0]);
        assert!(matches!(
            median_of_means(&mut c, 2, 0.05),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn median_of_means_on_signs() {
        let (m, delta) = (2000u64, 0.05);
        let bound = 3.0 * ((1.0f64 / delta).ln() / m as f64).sqrt();
        let mut ok = 0;
        for s in 0..2000 {
            let mut src =
                VectorFn::new(1, |r| vec![if r.random::<bool>() { 1.0 } else { -1.0 }], s);
            if median_of_means(&mut src, m, delta).unwrap()[0].abs() <= bound {
                ok += 1;
            }
        }
        assert!(ok as f64 >= (1.0 - delta) * 2000.0, "{ok}");
    }

    #[test]
    fn median_of_means_gaussian() {
        let mut ok = 0;
        for s in 0..500 {
            let mut g = Gaussian::new(vec![1.0; 8], s);
            let est = median_of_means(&mut g, 4000, 0.05).unwrap();
            if est.iter().all(|x| (x - 1.0).abs() <= 0.25) {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.95 * 500.0, "{ok}");
    }

    #[test]
    fn coarse_round_of_zero_mean() {
        for s in 0..50 {
            let mut c = Constant::new(vec![0.0; 3]);
            let out =
                coarse_round(&mut c, 1.0, 0.2, 0.05, 3.0, &mut SharedRandomness::new(s)).unwrap();
            assert!(out.value.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn coarse_round_paired_agreement() {
        let trials = 2000;
        let mut disagree = 0;
        for s in 0..trials {
            let mut r = SharedRandomness::new(1_000_000 + s);
            let mu: Vec<f64> = (0..4).map(|_| r.uniform(-3.0, 3.0).unwrap()).collect();
            let mut a = Gaussian::new(mu.clone(), 2 * s);
            let mut b = Gaussian::new(mu.clone(), 2 * s + 1);
            let oa =
                coarse_round(&mut a, 1.0, 0.2, 0.05, 3.0, &mut SharedRandomness::new(s)).unwrap();
            let ob =
                coarse_round(&mut b, 1.0, 0.2, 0.05, 3.0, &mut SharedRandomness::new(s)).unwrap();
            for (x, m) in oa.value.iter().zip(&mu) {
                assert!((x - m).abs() < 1.0 + 0.3);
            }
            if oa.value != ob.value {
                disagree += 1;
            }
        }
        assert!((disagree as f64 / trials as f64) <= 0.2 * 2.0, "{disagree}");
    }

    #[test]
    fn threshold_rounding() {
        assert_eq!(round_at_threshold(0.3, 1.0, 0.5), 0.0);
        assert_eq!(round_at_threshold(0.7, 1.0, 0.5), 1.0);
        assert_eq!(round_at_threshold(-0.3, 1.0, 0.5), 0.0);
        assert_eq!(round_at_threshold(-0.7, 1.0, 0.5), -1.0);
    }

    #[test]
    fn geometric_median_examples() {
        let pts = vec![vec![2.0, 2.0]; 5];
        assert_eq!(geometric_median(&pts, 1e-10), vec![2.0, 2.0]);
        // collinear points: the median is the middle one
        let pts = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert!((geometric_median(&pts, 1e-12)[0] - 1.0).abs() < 1e-6);
        // square corners
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ];
        let g = geometric_median(&pts, 1e-12);
        assert!((g[0] - 0.5).abs() < 1e-9 && (g[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn core_estimate_on_constants_and_signs() {
        let mut c = Constant::new(vec![0.25, -1.0, 3.0]);
        let est = l2_core_estimate(&mut c, 1000, 0.05).unwrap();
        assert!(l2_dist(&est, &[0.25, -1.0, 3.0]) < 1e-9);
        let m = 20_000u64;
        let mut src = VectorFn::new(
            2,
            |r| {
                if r.random::<bool>() {
                    vec![1.0, 0.0]
                } else {
                    vec![-1.0, 0.0]
                }
            },
            3,
        );
        let est = l2_core_estimate(&mut src, m, 0.05).unwrap();
        assert!(l2_dist(&est, &[0.0, 0.0]) <= 2.0 / (m as f64).sqrt() * 3.0);
    }

    #[test]
    fn core_estimate_gaussian_rate() {
        let (n, m, delta) = (8usize, 8000u64, 0.05);
        let bound =
            2.0 * ((n as f64 / m as f64).sqrt() + ((1.0f64 / delta).ln() / m as f64).sqrt());
        let mut ok = 0;
        for s in 0..1000 {
            let mut g = Gaussian::new(vec![0.0; n], s);
            if l2_dist(&l2_core_estimate(&mut g, m, delta).unwrap(), &vec![0.0; n]) <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 950, "{ok}");
    }

    #[test]
    fn budgets_follow_closed_forms() {
        let t = cube_tiling(4, default_cube_side(4)).unwrap();
        let p = MeanEstParams::l2(4, 0.5, 0.3, 0.05, t.clone()).unwrap();
        let a = t.surface_area();
        let expect =
            (3.0 * (4.0 + (1.0f64 / 0.05).ln()) * a * a / (0.25 * 0.09 * 4.0)).ceil() as u64;
        assert_eq!(p.m2(), expect);
        assert_eq!(p.m1(), (3.0 * (4.0f64 / 0.05).ln() / 0.09).ceil() as u64);
        let half = MeanEstParams::l2(4, 0.5, 0.15, 0.05, t.clone()).unwrap();
        assert!((half.m2() as f64 / p.m2() as f64 - 4.0).abs() < 1e-6);
        assert!(MeanEstParams::l2(4, 0.5, 0.05, 0.05, t.clone()).is_err());
        assert!(MeanEstParams::linf(4, 1.0, 0.3, 0.05, t).is_err());
    }

    #[test]
    fn point_mass_estimates() {
        let n = 3;
        let t = cube_tiling(n, default_cube_side(n)).unwrap();
        let p = MeanEstParams::l2(n, 0.5, 0.3, 0.05, t.clone()).unwrap();
        let q = MeanEstParams::linf(n, 0.2, 0.3, 0.05, t).unwrap();
        for s in 0..100 {
            let rand = SharedRandomness::new(s);
            let out = replicable_mean_l2(&mut Constant::new(vec![0.0; n]), &p, &rand).unwrap();
            assert!(l2_dist(&out.estimate, &[0.0; 3]) <= 0.5);
            let sum: Vec<f64> = out
                .center
                .iter()
                .zip(&out.rounded_offset)
                .map(|(a, b)| a + b)
                .collect();
            assert_eq!(sum, out.estimate);
            let out = replicable_mean_linf(&mut Constant::new(vec![0.0; n]), &q, &rand).unwrap();
            assert!(out.estimate.iter().all(|x| x.abs() <= 0.2 * 3.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn estimate_is_center_plus_rounded_offset(
            seed in any::<u64>(),
            mu in proptest::collection::vec(-2.0f64..2.0, 2),
        ) {
            let t = cube_tiling(2, default_cube_side(2)).unwrap();
            let p = MeanEstParams::l2(2, 0.5, 0.3, 0.05, t).unwrap();
            let mut g = Gaussian::new(mu, seed);
            let out = replicable_mean_l2(&mut g, &p, &SharedRandomness::new(seed)).unwrap();
            for i in 0..2 {
                prop_assert_eq!(out.estimate[i], out.center[i] + out.rounded_offset[i]);
            }
            prop_assert!(l2_dist(&out.rounded_offset, &out.offset) <= 0.5);
            prop_assert_eq!(out.samples_used, p.m1() / median_of_means_batches(2, 0.05) * median_of_means_batches(2, 0.05)
                + p.m2() / l2_core_batches(0.05) * l2_core_batches(0.05));
        }
    }
}

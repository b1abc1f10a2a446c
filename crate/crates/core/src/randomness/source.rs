//! Sample sources with exact draw counters.
//!
//! Every source owns its own generator, seeded independently of the shared
//! internal stream. Counters record the number of scalar draws delivered
//! (for vector sources, the number of vectors).

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::{splitmix64, unit_f64};
use crate::error::{ensure, Result};

pub(crate) fn sample_rng(seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    let mut state = seed ^ 0x5A5A_5A5A_0F0F_0F0F;
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Number of successes in `m` Bernoulli(`p`) trials.
pub(crate) fn binomial<R: Rng + ?Sized>(rng: &mut R, m: u64, p: f64) -> u64 {
    if m == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return m;
    }
    Binomial::new(m, p)
        .expect("probability checked above")
        .sample(rng)
}

/// Generic i.i.d. source.
pub trait SampleSource {
    type Sample;
    fn draw(&mut self) -> Self::Sample;
    fn consumed(&self) -> u64;
}

/// A Bernoulli source; heads are `true`.
pub trait Coin {
    fn flip(&mut self) -> bool;

    /// Number of heads among `m` fresh flips.
    fn heads(&mut self, m: u64) -> u64 {
        (0..m).filter(|_| self.flip()).count() as u64
    }

    fn consumed(&self) -> u64;

    /// True bias, when the source knows it. Only used for exact fast paths.
    fn known_bias(&self) -> Option<f64> {
        None
    }

    /// Sample-side seed for fast paths that simulate flips in bulk.
    fn sample_seed(&mut self) -> u64 {
        (0..64).fold(0u64, |acc, _| (acc << 1) | self.flip() as u64)
    }
}

impl<C: Coin + ?Sized> Coin for &mut C {
    fn flip(&mut self) -> bool {
        (**self).flip()
    }
    fn heads(&mut self, m: u64) -> u64 {
        (**self).heads(m)
    }
    fn consumed(&self) -> u64 {
        (**self).consumed()
    }
    fn known_bias(&self) -> Option<f64> {
        (**self).known_bias()
    }
    fn sample_seed(&mut self) -> u64 {
        (**self).sample_seed()
    }
}

impl<C: Coin + ?Sized> Coin for Box<C> {
    fn flip(&mut self) -> bool {
        (**self).flip()
    }
    fn heads(&mut self, m: u64) -> u64 {
        (**self).heads(m)
    }
    fn consumed(&self) -> u64 {
        (**self).consumed()
    }
    fn known_bias(&self) -> Option<f64> {
        (**self).known_bias()
    }
    fn sample_seed(&mut self) -> u64 {
        (**self).sample_seed()
    }
}

/// Source of query values in `[0, 1]`, consumed in batches.
pub trait MeanSource {
    fn batch_mean(&mut self, m: u64) -> f64;
    fn consumed(&self) -> u64;
}

impl<C: Coin + ?Sized> MeanSource for C {
    fn batch_mean(&mut self, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        self.heads(m) as f64 / m as f64
    }
    fn consumed(&self) -> u64 {
        Coin::consumed(self)
    }
}

/// Statistical query: a sample source composed with a map into `[0, 1]`.
pub struct Query<S, F> {
    source: S,
    phi: F,
}

impl<S: SampleSource, F: FnMut(&S::Sample) -> f64> Query<S, F> {
    pub fn new(source: S, phi: F) -> Self {
        Query { source, phi }
    }

    pub fn into_inner(self) -> S {
        self.source
    }
}

impl<S: SampleSource, F: FnMut(&S::Sample) -> f64> MeanSource for Query<S, F> {
    fn batch_mean(&mut self, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for _ in 0..m {
            let x = self.source.draw();
            sum += (self.phi)(&x).clamp(0.0, 1.0);
        }
        sum / m as f64
    }
    fn consumed(&self) -> u64 {
        self.source.consumed()
    }
}

/// Source over a finite, ordered domain.
pub trait DiscreteSource {
    type Item: Ord + Clone;

    fn draw(&mut self) -> Self::Item;

    /// Counts of each element among `m` fresh draws.
    fn histogram(&mut self, m: u64) -> BTreeMap<Self::Item, u64> {
        let mut counts = BTreeMap::new();
        for _ in 0..m {
            *counts.entry(self.draw()).or_insert(0) += 1;
        }
        counts
    }

    fn consumed(&self) -> u64;
}

/// Source of points in R^N.
pub trait VectorSource {
    fn dim(&self) -> usize;
    fn draw(&mut self) -> Vec<f64>;

    /// Mean of `m` fresh draws.
    fn batch_mean(&mut self, m: u64) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for _ in 0..m {
            for (a, x) in acc.iter_mut().zip(self.draw()) {
                *a += x;
            }
        }
        if m > 0 {
            acc.iter_mut().for_each(|a| *a /= m as f64);
        }
        acc
    }

    fn consumed(&self) -> u64;
}

/// Bernoulli(p) coin.
#[derive(Debug, Clone)]
pub struct Bernoulli {
    p: f64,
    rng: ChaCha8Rng,
    consumed: u64,
}

impl Bernoulli {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&p), || {
            format!("bias {p} is not a probability")
        })?;
        Ok(Bernoulli {
            p,
            rng: sample_rng(seed),
            consumed: 0,
        })
    }

    pub fn bias(&self) -> f64 {
        self.p
    }
}

impl Coin for Bernoulli {
    fn flip(&mut self) -> bool {
        self.consumed += 1;
        unit_f64(self.rng.next_u64()) < self.p
    }
    fn heads(&mut self, m: u64) -> u64 {
        self.consumed += m;
        binomial(&mut self.rng, m, self.p)
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
    fn known_bias(&self) -> Option<f64> {
        Some(self.p)
    }
    fn sample_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl SampleSource for Bernoulli {
    type Sample = bool;
    fn draw(&mut self) -> bool {
        self.flip()
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Product of independent coins; also a vector source over `{0, 1}^N`.
#[derive(Debug, Clone)]
pub struct ProductBernoulli {
    coins: Vec<Bernoulli>,
}

impl ProductBernoulli {
    pub fn new(biases: &[f64], seed: u64) -> Result<Self> {
        let coins = biases
            .iter()
            .enumerate()
            .map(|(i, &p)| Bernoulli::new(p, splitmix64(seed ^ splitmix64(i as u64))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductBernoulli { coins })
    }

    pub fn biases(&self) -> Vec<f64> {
        self.coins.iter().map(Bernoulli::bias).collect()
    }

    pub fn coins_mut(&mut self) -> &mut [Bernoulli] {
        &mut self.coins
    }

    pub fn coordinate_consumed(&self) -> Vec<u64> {
        self.coins.iter().map(|c| c.consumed).collect()
    }

    /// Total scalar draws over all coordinates.
    pub fn total_consumed(&self) -> u64 {
        self.coins.iter().map(|c| c.consumed).sum()
    }
}

impl VectorSource for ProductBernoulli {
    fn dim(&self) -> usize {
        self.coins.len()
    }
    fn draw(&mut self) -> Vec<f64> {
        self.coins
            .iter_mut()
            .map(|c| if c.flip() { 1.0 } else { 0.0 })
            .collect()
    }
    fn batch_mean(&mut self, m: u64) -> Vec<f64> {
        self.coins
            .iter_mut()
            .map(|c| {
                if m == 0 {
                    0.0
                } else {
                    c.heads(m) as f64 / m as f64
                }
            })
            .collect()
    }
    /// Vector draws delivered; every coordinate has been drawn this many times.
    fn consumed(&self) -> u64 {
        self.coins.iter().map(|c| c.consumed).max().unwrap_or(0)
    }
}

/// Gaussian with identity covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    rng: ChaCha8Rng,
    consumed: u64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, seed: u64) -> Self {
        Gaussian {
            mean,
            rng: sample_rng(seed),
            consumed: 0,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl VectorSource for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn draw(&mut self) -> Vec<f64> {
        self.consumed += 1;
        let rng = &mut self.rng;
        self.mean
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(rng);
                mu + z
            })
            .collect()
    }
    /// The mean of `m` draws is exactly N(mean, I/m); sampled directly.
    fn batch_mean(&mut self, m: u64) -> Vec<f64> {
        if m == 0 {
            return vec![0.0; self.mean.len()];
        }
        self.consumed += m;
        let sd = 1.0 / (m as f64).sqrt();
        let rng = &mut self.rng;
        self.mean
            .iter()
            .map(|&mu| {
                let z: f64 = StandardNormal.sample(rng);
                mu + sd * z
            })
            .collect()
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Point mass at a fixed vector.
#[derive(Debug, Clone)]
pub struct Constant {
    value: Vec<f64>,
    consumed: u64,
}

impl Constant {
    pub fn new(value: Vec<f64>) -> Self {
        Constant { value, consumed: 0 }
    }
}

impl VectorSource for Constant {
    fn dim(&self) -> usize {
        self.value.len()
    }
    fn draw(&mut self) -> Vec<f64> {
        self.consumed += 1;
        self.value.clone()
    }
    fn batch_mean(&mut self, m: u64) -> Vec<f64> {
        self.consumed += m;
        self.value.clone()
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Finite distribution over labeled atoms.
#[derive(Debug, Clone)]
pub struct Discrete<T> {
    atoms: Vec<(T, f64)>,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
    consumed: u64,
}

impl<T: Ord + Clone> Discrete<T> {
    /// Masses are normalized; they must be non-negative with a positive sum.
    pub fn new(atoms: Vec<(T, f64)>, seed: u64) -> Result<Self> {
        ensure(!atoms.is_empty(), || {
            "discrete distribution needs at least one atom".into()
        })?;
        ensure(
            atoms.iter().all(|(_, w)| w.is_finite() && *w >= 0.0),
            || "atom masses must be finite and non-negative".into(),
        )?;
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        ensure(total > 0.0, || "atom masses sum to zero".into())?;
        let atoms: Vec<(T, f64)> = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        Ok(Discrete {
            atoms,
            cumulative,
            rng: sample_rng(seed),
            consumed: 0,
        })
    }

    pub fn atoms(&self) -> &[(T, f64)] {
        &self.atoms
    }

    pub fn mass(&self, x: &T) -> f64 {
        self.atoms
            .iter()
            .filter(|(y, _)| y == x)
            .map(|(_, w)| w)
            .sum()
    }
}

impl<T: Ord + Clone> DiscreteSource for Discrete<T> {
    type Item = T;

    fn draw(&mut self) -> T {
        self.consumed += 1;
        let u = unit_f64(self.rng.next_u64());
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.atoms.len() - 1);
        self.atoms[i].0.clone()
    }

    /// Multinomial counts via sequential conditional binomials.
    fn histogram(&mut self, m: u64) -> BTreeMap<T, u64> {
        self.consumed += m;
        multinomial(&mut self.rng, m, &self.atoms)
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }
}

pub(crate) fn multinomial<T: Ord + Clone, R: Rng + ?Sized>(
    rng: &mut R,
    m: u64,
    atoms: &[(T, f64)],
) -> BTreeMap<T, u64> {
    let mut counts = BTreeMap::new();
    let mut left = m;
    let mut mass_left: f64 = atoms.iter().map(|(_, w)| w).sum();
    for (i, (x, w)) in atoms.iter().enumerate() {
        if left == 0 {
            break;
        }
        let k = if i + 1 == atoms.len() || *w >= mass_left {
            left
        } else {
            binomial(rng, left, (w / mass_left).clamp(0.0, 1.0))
        };
        if k > 0 {
            *counts.entry(x.clone()).or_insert(0) += k;
        }
        left -= k;
        mass_left -= w;
    }
    counts
}

/// Source defined by a sampling closure over a private generator.
pub struct FromFn<T, F> {
    f: F,
    rng: ChaCha8Rng,
    consumed: u64,
    _marker: std::marker::PhantomData<fn() -> T>,
}

impl<T, F: FnMut(&mut ChaCha8Rng) -> T> FromFn<T, F> {
    pub fn new(f: F, seed: u64) -> Self {
        FromFn {
            f,
            rng: sample_rng(seed),
            consumed: 0,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T, F: FnMut(&mut ChaCha8Rng) -> T> SampleSource for FromFn<T, F> {
    type Sample = T;
    fn draw(&mut self) -> T {
        self.consumed += 1;
        (self.f)(&mut self.rng)
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

impl<F: FnMut(&mut ChaCha8Rng) -> bool> Coin for FromFn<bool, F> {
    fn flip(&mut self) -> bool {
        self.draw()
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Vector source defined by a closure with a declared dimension.
pub struct VectorFn<F> {
    dim: usize,
    inner: FromFn<Vec<f64>, F>,
}

impl<F: FnMut(&mut ChaCha8Rng) -> Vec<f64>> VectorFn<F> {
    pub fn new(dim: usize, f: F, seed: u64) -> Self {
        VectorFn {
            dim,
            inner: FromFn::new(f, seed),
        }
    }
}

impl<F: FnMut(&mut ChaCha8Rng) -> Vec<f64>> VectorSource for VectorFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn draw(&mut self) -> Vec<f64> {
        let x = SampleSource::draw(&mut self.inner);
        debug_assert_eq!(x.len(), self.dim);
        x
    }
    fn consumed(&self) -> u64 {
        self.inner.consumed
    }
}

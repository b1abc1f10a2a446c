//! Shared internal randomness and sample sources.
//!
//! Two kinds of randomness flow through every algorithm in this crate:
//!
//! * [`SharedRandomness`] is the internal random string. Paired executions
//!   are handed the same seed, so they make identical internal choices
//!   (thresholds, offsets, rotations, bucket assignments).
//! * Sample sources ([`source`]) own a separate generator seeded per run, so
//!   paired executions observe independent samples.
//!
//! Every sub-call of a composite algorithm receives a stream obtained with
//! [`SharedRandomness::derive`], keyed by a fixed label. Derivation does not
//! advance the parent, so data-dependent control flow in one sub-call cannot
//! shift the random choices made by a later one.

pub mod source;

use nalgebra::DMatrix;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use source::{
    Bernoulli, Coin, Constant, Discrete, DiscreteSource, FromFn, Gaussian, MeanSource,
    ProductBernoulli, Query, SampleSource, VectorFn, VectorSource,
};

/// Name of the generator backing [`SharedRandomness`] and the sample sources.
pub const GENERATOR_NAME: &str = "chacha20 (rand_chacha 0.9) + splitmix64 seeding";
/// Bumped whenever the mapping from seeds to draws changes.
pub const GENERATOR_VERSION: u32 = 1;

/// Generator metadata embedded in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub name: String,
    pub version: u32,
}

impl GeneratorInfo {
    pub fn current() -> Self {
        GeneratorInfo {
            name: GENERATOR_NAME.to_string(),
            version: GENERATOR_VERSION,
        }
    }
}

/// One step of the SplitMix64 sequence; used for seed expansion and stream derivation.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn chacha_from_u64(seed: u64) -> ChaCha20Rng {
    let mut bytes = [0u8; 32];
    let mut state = seed;
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha20Rng::from_seed(bytes)
}

/// Uniform double in `[0, 1)` built from the top 53 bits of a word.
pub(crate) fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Deterministic internal random string keyed by a 64-bit seed.
#[derive(Debug, Clone)]
pub struct SharedRandomness {
    seed: u64,
    rng: ChaCha20Rng,
}

impl SharedRandomness {
    pub fn new(seed: u64) -> Self {
        SharedRandomness {
            seed,
            rng: chacha_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit stream words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Identifies the consumed prefix of the stream: equal checksums mean
    /// the two owners consumed bit-identical internal randomness.
    pub fn checksum(&self) -> (u64, u128) {
        (self.seed, self.position())
    }

    /// Independent child stream keyed by `label`; the parent is not advanced.
    pub fn derive(&self, label: u64) -> SharedRandomness {
        let mixed = splitmix64(self.seed ^ splitmix64(label.wrapping_add(0xD1B5_4A32_D192_ED03)));
        SharedRandomness::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` consuming one 64-bit unit.
    pub fn unit(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidRange(format!(
                "[{lo}, {hi}) is empty or not finite"
            )));
        }
        let x = lo + (hi - lo) * self.unit();
        // lo + (hi - lo) * u can round up to hi
        Ok(if x < hi { x } else { lo.max(prev_float(hi)) })
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be non-empty");
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    /// Vector with independent coordinates uniform on `[-q, q]`.
    pub fn uniform_cube(&mut self, n: usize, q: f64) -> Result<Vec<f64>> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidRange(format!(
                "cube half-width must be positive, got {q}"
            )));
        }
        (0..n).map(|_| self.uniform(-q, q)).collect()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Haar-distributed rotation in SO(n).
    ///
    /// QR of a Gaussian matrix with the sign convention diag(R) > 0 gives
    /// Haar measure on O(n); negating the first column when the determinant
    /// is -1 moves the sample into SO(n) while keeping rotation invariance.
    pub fn haar_rotation(&mut self, n: usize) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "rotation dimension must be at least 1".into(),
            ));
        }
        let gaussian = DMatrix::from_fn(n, n, |_, _| self.standard_normal());
        let qr = gaussian.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        Ok(q)
    }
}

fn prev_float(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x < 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        -f64::from_bits(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_replay_bit_exactly() {
        let mut a = SharedRandomness::new(17);
        let mut b = SharedRandomness::new(17);
        for _ in 0..100 {
            assert_eq!(
                a.uniform(0.0, 1.0).unwrap().to_bits(),
                b.uniform(0.0, 1.0).unwrap().to_bits()
            );
        }
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn position_increases_with_each_draw() {
        let mut r = SharedRandomness::new(3);
        let mut last = r.position();
        for _ in 0..20 {
            r.unit();
            assert!(r.position() > last);
            last = r.position();
        }
        r.standard_normal();
        assert!(r.position() > last);
    }

    #[test]
    fn degenerate_interval_is_rejected() {
        let mut r = SharedRandomness::new(1);
        assert!(matches!(r.uniform(2.0, 2.0), Err(Error::InvalidRange(_))));
        assert!(matches!(r.uniform(3.0, 2.0), Err(Error::InvalidRange(_))));
        assert!(matches!(
            r.uniform_cube(3, 0.0),
            Err(Error::InvalidRange(_))
        ));
    }

    #[test]
    fn uniform_interval_mean() {
        let mut r = SharedRandomness::new(99);
        let n = 100_000;
        let mean = (0..n).map(|_| r.uniform(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn cube_coordinates_have_uniform_variance() {
        let mut r = SharedRandomness::new(5);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let v = r.uniform_cube(3, 1.0).unwrap();
            for i in 0..3 {
                assert!((-1.0..=1.0).contains(&v[i]));
                sum[i] += v[i];
                sq[i] += v[i] * v[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(
                (var - 1.0 / 3.0).abs() < 0.02,
                "coordinate {i} variance {var}"
            );
        }
    }

    #[test]
    fn one_dimensional_rotation_is_identity() {
        let mut r = SharedRandomness::new(11);
        for _ in 0..50 {
            let m = r.haar_rotation(1).unwrap();
            assert_eq!(m[(0, 0)], 1.0);
        }
    }

    #[test]
    fn rotations_are_special_orthogonal() {
        let mut r = SharedRandomness::new(12);
        for n in 1..=7 {
            let m = r.haar_rotation(n).unwrap();
            let gram = m.transpose() * &m;
            let err = (gram - DMatrix::<f64>::identity(n, n)).abs().max();
            assert!(err < 1e-10, "n={n} orthogonality error {err}");
            assert!((m.determinant() - 1.0).abs() < 1e-10);
            let x = nalgebra::DVector::from_fn(n, |i, _| (i as f64 + 1.0).sin());
            assert!(((&m * &x).norm() - x.norm()).abs() < 1e-9);
        }
        assert!(r.haar_rotation(0).is_err());
    }

    #[test]
    fn haar_first_column_has_no_preferred_direction() {
        let mut r = SharedRandomness::new(2024);
        let draws = 10_000;
        let mut acc = [0.0; 3];
        for _ in 0..draws {
            let m = r.haar_rotation(3).unwrap();
            for i in 0..3 {
                acc[i] += m[(i, 0)];
            }
        }
        let norm = acc
            .iter()
            .map(|a| (a / draws as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(norm <= 0.05, "mean first column norm {norm}");
    }

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let parent = SharedRandomness::new(8);
        let mut a = parent.derive(1);
        let mut b = parent.derive(1);
        let mut c = parent.derive(2);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_eq!(parent.position(), 0);
    }
}

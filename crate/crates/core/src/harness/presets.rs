//! Ready-made experiments keyed by acceptance-criterion id.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::instances::{ScalarGen, VectorDist, VectorGen};
use super::report::{sweep_csv, TrialReport};
use super::{
    find_good_string, run_paired, sweep, with_parameter, AlgorithmSpec, PairedTrialConfig,
};
use crate::coin::{AdaptiveCoinTester, CoinProblemParams};
use crate::compose::bias_shift;
use crate::error::{Error, Result};
use crate::meanest::Norm;
use crate::randomness::{Bernoulli, SharedRandomness};
use crate::tiling::lattice::TIE_TOLERANCE;
use crate::tiling::{lattice_preprocess, TilingDescriptor};

/// Deterministic checks that are not paired Monte-Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    /// Closest-vector search against exhaustive coefficient search on random bases.
    Cvp {
        bases_per_dim: usize,
        targets: usize,
    },
    /// Good-string search around the adaptive coin tester at `rho / 9`.
    GoodString {
        p0: f64,
        q0: f64,
        rho: f64,
        delta: f64,
        /// Fresh pairs used to re-measure each returned string.
        verify_pairs: usize,
    },
    /// Bias-shift equations on random pairs `(a, a + width)`.
    BiasShift { pairs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "part", rename_all = "snake_case")]
pub enum PresetPart {
    Paired(PairedTrialConfig),
    /// Sweep with an optional band on consecutive mean-sample ratios.
    Sweep {
        config: PairedTrialConfig,
        axis: String,
        values: Vec<f64>,
        ratio_band: Option<(f64, f64)>,
    },
    Check(Check),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub id: String,
    pub description: String,
    pub parts: Vec<PresetPart>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub fail: bool,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "part", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum PartOutcome {
    Paired(TrialReport),
    Sweep {
        axis: String,
        values: Vec<f64>,
        reports: Vec<TrialReport>,
        ratios: Vec<f64>,
        ratio_band: Option<(f64, f64)>,
        fail: bool,
        csv: String,
    },
    Check(CheckReport),
}

impl PartOutcome {
    pub fn fail(&self) -> bool {
        match self {
            PartOutcome::Paired(r) => r.fail,
            PartOutcome::Sweep { fail, .. } => *fail,
            PartOutcome::Check(c) => c.fail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetOutcome {
    pub id: String,
    pub parts: Vec<PartOutcome>,
    pub fail: bool,
}

fn coin_spec(rho: f64, bias: ScalarGen) -> AlgorithmSpec {
    AlgorithmSpec::CoinTest {
        p0: 0.3,
        q0: 0.6,
        rho,
        delta: 0.05,
        bias,
    }
}

fn uniform(lo: f64, hi: f64) -> ScalarGen {
    ScalarGen::Uniform { lo, hi }
}

fn n_coin_spec(n: usize, rho: f64, slack: Option<usize>) -> AlgorithmSpec {
    AlgorithmSpec::NCoin {
        n,
        p0: 0.3,
        q0: 0.6,
        rho,
        delta: 0.05,
        slack,
        biases: VectorGen::Uniform { lo: 0.0, hi: 1.0 },
    }
}

fn pseudo_max_spec(count: usize) -> AlgorithmSpec {
    AlgorithmSpec::PseudoMax {
        n: 64,
        k: 4,
        eps: 0.1,
        rho: 0.3,
        delta: 0.05,
        biases: VectorGen::Planted {
            top: 0.9,
            rest: 0.2,
            count,
        },
    }
}

fn paired(spec: AlgorithmSpec, trials: usize) -> PresetPart {
    PresetPart::Paired(PairedTrialConfig::new(spec, trials, 0))
}

/// Every shipped preset.
pub fn presets() -> Vec<Preset> {
    let preset = |id: &str, description: &str, parts: Vec<PresetPart>| Preset {
        id: id.to_string(),
        description: description.to_string(),
        parts,
    };
    vec![
        preset(
            "c1",
            "adaptive coin test replicability, bias uniform on (p0, q0)",
            vec![paired(coin_spec(0.2, uniform(0.3, 0.6)), 10_000)],
        ),
        preset(
            "c2",
            "adaptive coin test correctness at p0 and q0",
            vec![
                paired(coin_spec(0.2, ScalarGen::Fixed { value: 0.3 }), 5000),
                paired(coin_spec(0.2, ScalarGen::Fixed { value: 0.6 }), 5000),
            ],
        ),
        preset(
            "c3",
            "adaptive coin test expected samples across a rho sweep",
            vec![PresetPart::Sweep {
                config: PairedTrialConfig::new(coin_spec(0.4, uniform(0.3, 0.6)), 2000, 0),
                axis: "rho".into(),
                values: vec![0.4, 0.2, 0.1, 0.05],
                ratio_band: Some((1.4, 2.8)),
            }],
        ),
        preset(
            "c4",
            "statistical query accuracy, replicability and rho scaling",
            vec![
                paired(
                    AlgorithmSpec::StatQuery {
                        tau: 0.1,
                        rho: 0.2,
                        delta: 0.05,
                        bias: uniform(0.1, 0.9),
                    },
                    5000,
                ),
                PresetPart::Sweep {
                    config: PairedTrialConfig::new(
                        AlgorithmSpec::StatQuery {
                            tau: 0.1,
                            rho: 0.4,
                            delta: 0.05,
                            bias: uniform(0.1, 0.9),
                        },
                        2000,
                        0,
                    ),
                    axis: "rho".into(),
                    values: vec![0.4, 0.2, 0.1, 0.05],
                    ratio_band: Some((1.4, 2.8)),
                },
            ],
        ),
        preset(
            "c5",
            "heavy hitters on a three-atom distribution",
            vec![paired(
                AlgorithmSpec::HeavyHitters {
                    atoms: BTreeMap::from([
                        ("a".into(), 0.6),
                        ("b".into(), 0.3),
                        ("c".into(), 0.1),
                    ]),
                    v: 0.45,
                    eps: 0.1,
                    rho: 0.2,
                    delta: 0.01,
                },
                10_000,
            )],
        ),
        preset(
            "c6",
            "cube-tiling rounding of nearby inputs; every output within eps",
            vec![paired(
                AlgorithmSpec::Rounding {
                    n: 4,
                    eps: 0.5,
                    rho: 0.2,
                    tiling: TilingDescriptor::cube(),
                    distance: None,
                    c_q: 10.0,
                },
                50_000,
            )],
        ),
        preset(
            "c7",
            "closest-vector search against exhaustive search",
            vec![PresetPart::Check(Check::Cvp {
                bases_per_dim: 20,
                targets: 200,
            })],
        ),
        preset(
            "c8",
            "l-infinity mean estimation of a 9-dimensional product of coins",
            vec![paired(
                AlgorithmSpec::MeanEst {
                    norm: Norm::Linf,
                    n: 9,
                    accuracy: 0.15,
                    rho: 0.3,
                    delta: 0.05,
                    tiling: TilingDescriptor::cube(),
                    dist: VectorDist::Bernoulli {
                        means: VectorGen::Uniform { lo: 0.25, hi: 0.75 },
                    },
                    error_factor: 3.0,
                },
                1000,
            )],
        ),
        preset(
            "c9",
            "composed 16-coin tester: replicability, cap breaches and rho scaling",
            vec![
                paired(n_coin_spec(16, 0.3, None), 5000),
                PresetPart::Sweep {
                    config: PairedTrialConfig::new(n_coin_spec(16, 0.3, None), 1000, 0),
                    axis: "rho".into(),
                    values: vec![0.3, 0.15],
                    ratio_band: Some((1.4, 2.8)),
                },
            ],
        ),
        preset(
            "c10",
            "approximately replicable 32-coin tester at slack 4 versus slack 1",
            vec![PresetPart::Sweep {
                config: PairedTrialConfig::new(n_coin_spec(32, 0.2, Some(4)), 5000, 0)
                    .with_slack(4),
                axis: "slack".into(),
                values: vec![4.0, 1.0],
                ratio_band: Some((2.0, f64::INFINITY)),
            }],
        ),
        preset(
            "c11",
            "pseudo-maximum soundness with one planted top coin and with a planted block",
            vec![
                paired(pseudo_max_spec(1), 1000),
                paired(pseudo_max_spec(11), 1000),
            ],
        ),
        preset(
            "c12",
            "good-string search around the adaptive coin tester",
            vec![PresetPart::Check(Check::GoodString {
                p0: 0.3,
                q0: 0.6,
                rho: 0.2,
                delta: 0.05,
                verify_pairs: 200,
            })],
        ),
        preset(
            "c13",
            "bias-shift equations and l-infinity learning by binary search",
            vec![
                PresetPart::Check(Check::BiasShift { pairs: 100 }),
                paired(
                    AlgorithmSpec::LinfLearn {
                        n: 8,
                        eps: 0.125,
                        rho: 0.3,
                        delta: 0.05,
                        biases: VectorGen::Uniform { lo: 0.0, hi: 1.0 },
                    },
                    1000,
                ),
            ],
        ),
    ]
}

pub fn preset(id: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| Error::UnknownAlgorithm(id.to_string()))
}

/// Runs every part of `preset`, optionally overriding trial counts and seeds.
pub fn run_preset(
    preset: &Preset,
    trials: Option<usize>,
    seed: Option<u64>,
) -> Result<PresetOutcome> {
    let adjust = |c: &PairedTrialConfig| PairedTrialConfig {
        trials: trials.unwrap_or(c.trials),
        seed: seed.unwrap_or(c.seed),
        ..c.clone()
    };
    let mut parts = Vec::with_capacity(preset.parts.len());
    for part in &preset.parts {
        parts.push(match part {
            PresetPart::Paired(c) => PartOutcome::Paired(run_paired(&adjust(c))?),
            PresetPart::Sweep {
                config,
                axis,
                values,
                ratio_band,
            } => {
                let reports = sweep(&adjust(config), axis, values)?;
                let ratios: Vec<f64> = reports
                    .windows(2)
                    .map(|w| w[1].samples.mean / w[0].samples.mean)
                    .collect();
                let out_of_band = ratio_band
                    .is_some_and(|(lo, hi)| ratios.iter().any(|r| !(lo..=hi).contains(r)));
                let rows: Vec<(f64, TrialReport)> = values
                    .iter()
                    .copied()
                    .zip(reports.iter().cloned())
                    .collect();
                PartOutcome::Sweep {
                    axis: axis.clone(),
                    values: values.clone(),
                    fail: out_of_band || reports.iter().any(|r| r.fail),
                    csv: sweep_csv(axis, &rows),
                    reports,
                    ratios,
                    ratio_band: *ratio_band,
                }
            }
            PresetPart::Check(check) => PartOutcome::Check(run_check(check, seed.unwrap_or(0))?),
        });
    }
    Ok(PresetOutcome {
        id: preset.id.clone(),
        fail: parts.iter().any(PartOutcome::fail),
        parts,
    })
}

/// Applies `axis = value` to every configuration in `preset`.
pub fn override_parameter(preset: &Preset, axis: &str, value: f64) -> Result<Preset> {
    let parts = preset
        .parts
        .iter()
        .map(|p| {
            Ok(match p {
                PresetPart::Paired(c) => PresetPart::Paired(with_parameter(c, axis, value)?),
                other => other.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Preset {
        parts,
        ..preset.clone()
    })
}

pub fn run_check(check: &Check, seed: u64) -> Result<CheckReport> {
    match *check {
        Check::Cvp {
            bases_per_dim,
            targets,
        } => cvp_check(bases_per_dim, targets, seed),
        Check::GoodString {
            p0,
            q0,
            rho,
            delta,
            verify_pairs,
        } => good_string_check(p0, q0, rho, delta, verify_pairs, seed),
        Check::BiasShift { pairs } => Ok(bias_shift_check(pairs, seed)),
    }
}

/// Exhaustive closest-vector search over the coefficient box implied by
/// `|z_i - (B^-1 t)_i| <= |row_i(B^-1)| * d`, with `d` an upper bound on the distance.
fn brute_force_cvp(rows: &DMatrix<f64>, target: &DVector<f64>) -> Vec<i64> {
    let basis = rows.transpose();
    let inv = basis.clone().try_inverse().expect("non-singular basis");
    let real = &inv * target;
    let rounded: Vec<i64> = real.iter().map(|x| x.round() as i64).collect();
    let point = |z: &[i64]| &basis * DVector::from_iterator(z.len(), z.iter().map(|&c| c as f64));
    let bound = (point(&rounded) - target).norm() + 1e-9;
    let n = rows.nrows();
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|i| {
            let w = inv.row(i).norm() * bound;
            ((real[i] - w).floor() as i64, (real[i] + w).ceil() as i64)
        })
        .collect();
    let mut z: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut all = Vec::new();
    loop {
        all.push(((point(&z) - target).norm_squared(), z.clone()));
        let mut i = n;
        loop {
            if i == 0 {
                let best = all.iter().map(|(d, _)| *d).fold(f64::INFINITY, f64::min);
                return all
                    .into_iter()
                    .filter(|(d, _)| *d <= best + TIE_TOLERANCE)
                    .map(|(_, z)| z)
                    .min()
                    .expect("non-empty box");
            }
            i -= 1;
            if z[i] < ranges[i].1 {
                z[i] += 1;
                break;
            }
            z[i] = ranges[i].0;
        }
    }
}

fn cvp_check(bases_per_dim: usize, targets: usize, seed: u64) -> Result<CheckReport> {
    let mut rand = SharedRandomness::new(seed).derive(7);
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for n in 2..=4 {
        let mut built = 0;
        while built < bases_per_dim {
            let rows = DMatrix::from_fn(n, n, |_, _| rand.uniform(-1.0, 1.0).expect("valid range"));
            if rows.determinant().abs() < 0.2 {
                continue;
            }
            built += 1;
            let lattice = lattice_preprocess(&rows, f64::INFINITY)?;
            for _ in 0..targets {
                let t = DVector::from_fn(n, |_, _| rand.uniform(-3.0, 3.0).expect("valid range"));
                compared += 1;
                if lattice.closest(&t).coefficients != brute_force_cvp(&rows, &t) {
                    mismatches += 1;
                }
            }
        }
    }
    let hex = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 3f64.sqrt() / 2.0]);
    let hex = lattice_preprocess(&hex, f64::INFINITY)?;
    let ratio = hex.mu() / hex.lambda();
    let ratio_error = (ratio - 2.0 / 3f64.sqrt()).abs();
    Ok(CheckReport {
        check: "cvp".into(),
        fail: mismatches > 0 || ratio_error > 1e-4,
        details: serde_json::json!({
            "compared": compared,
            "mismatches": mismatches,
            "hexagonal_mu_over_lambda": ratio,
            "hexagonal_ratio_error": ratio_error,
        }),
    })
}

fn good_string_check(
    p0: f64,
    q0: f64,
    rho: f64,
    delta: f64,
    verify_pairs: usize,
    seed: u64,
) -> Result<CheckReport> {
    const META_TRIALS: u64 = 500;
    let tester = AdaptiveCoinTester::new(CoinProblemParams::new(p0, q0, rho / 9.0, delta)?);
    let root = SharedRandomness::new(seed).derive(12);
    let mut found = 0u64;
    let mut min_agreement = 1.0f64;
    for m in 0..META_TRIALS {
        let mut rand = root.derive(m);
        let p = rand.uniform(p0, q0)?;
        let run = |r: u64, s: u64| {
            let mut coin = Bernoulli::new(p, s).expect("bias in range");
            tester.run(&mut coin, &mut SharedRandomness::new(r)).verdict
        };
        if let Ok(g) = find_good_string(run, rho, delta, 3.0, &mut rand) {
            found += 1;
            let agree = (0..verify_pairs)
                .filter(|_| {
                    let (a, b) = (rand.next_u64(), rand.next_u64());
                    run(g.seed, a) == run(g.seed, b)
                })
                .count();
            min_agreement = min_agreement.min(agree as f64 / verify_pairs.max(1) as f64);
        }
    }
    let found_rate = found as f64 / META_TRIALS as f64;
    Ok(CheckReport {
        check: "good_string".into(),
        fail: found_rate < 1.0 - 3.0 * delta || min_agreement < 1.0 - 3.0 * rho,
        details: serde_json::json!({
            "meta_trials": META_TRIALS,
            "found_rate": found_rate,
            "min_verified_agreement": min_agreement,
        }),
    })
}

fn bias_shift_check(pairs: usize, seed: u64) -> CheckReport {
    let mut rand = SharedRandomness::new(seed).derive(13);
    let mut worst_residual = 0.0f64;
    let mut out_of_range = 0usize;
    for _ in 0..pairs {
        let width = 0.01 + 0.2 * rand.unit();
        let a = (1.0 - width) / 2.0 * rand.unit();
        let b = a + width;
        let (h, t) = bias_shift(a, b);
        let low = a * h + (1.0 - a) * t - (0.5 - width / 4.0);
        let high = b * h + (1.0 - b) * t - (0.5 + width / 4.0);
        worst_residual = worst_residual.max(low.abs()).max(high.abs());
        if !(h > 0.0 && h < 1.0 && t > 0.0 && t < 1.0) {
            out_of_range += 1;
        }
    }
    CheckReport {
        check: "bias_shift".into(),
        fail: worst_residual > 1e-12 || out_of_range > 0,
        details: serde_json::json!({
            "pairs": pairs,
            "worst_residual": worst_residual,
            "out_of_range": out_of_range,
        }),
    }
}

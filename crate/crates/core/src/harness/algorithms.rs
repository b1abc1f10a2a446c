//! Registry of algorithms runnable under the paired-trial protocol.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::instances::{ScalarGen, VectorDist, VectorGen};
use super::report::Targets;
use super::{Execution, Experiment, TrialRecord, TrialSeeds};
use crate::coin::{AdaptiveCoinTester, CoinProblemParams, Verdict};
use crate::compose::{
    approx_n_coin_test, linf_learn_by_search_with, n_coin_test, LinfLearnConfig, NCoinConfig,
};
use crate::error::{Error, Result};
use crate::heavyhitters::{adaptive_heavy_hitters, HeavyHitterParams};
use crate::maxid::{pseudo_max, PseudoMaxParams};
use crate::meanest::{replicable_mean, MeanEstParams, Norm};
use crate::randomness::{Bernoulli, Discrete, SharedRandomness};
use crate::statq::{adaptive_stat_query, StatQueryParams};
use crate::tiling::{replicable_round, RoundingParams, TilingDescriptor, TilingOracle};

/// Algorithm identifiers accepted by [`AlgorithmSpec`].
pub const ALGORITHMS: &[&str] = &[
    "coin_test",
    "stat_query",
    "heavy_hitters",
    "n_coin",
    "linf_learn",
    "rounding",
    "mean_est",
    "pseudo_max",
];

fn default_c_q() -> f64 {
    10.0
}

fn default_factor() -> f64 {
    1.0
}

/// Algorithm id, parameters and instance generator of a paired experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    CoinTest {
        p0: f64,
        q0: f64,
        rho: f64,
        delta: f64,
        bias: ScalarGen,
    },
    StatQuery {
        tau: f64,
        rho: f64,
        delta: f64,
        /// Bias of the Bernoulli population; the query is the identity.
        bias: ScalarGen,
    },
    HeavyHitters {
        atoms: BTreeMap<String, f64>,
        v: f64,
        eps: f64,
        rho: f64,
        delta: f64,
    },
    NCoin {
        n: usize,
        p0: f64,
        q0: f64,
        rho: f64,
        delta: f64,
        /// Approximate variant with this slack.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slack: Option<usize>,
        biases: VectorGen,
    },
    LinfLearn {
        n: usize,
        eps: f64,
        rho: f64,
        delta: f64,
        biases: VectorGen,
    },
    Rounding {
        n: usize,
        eps: f64,
        rho: f64,
        tiling: TilingDescriptor,
        /// Distance between the paired inputs; defaults to `0.1 sqrt(N) eps rho / A`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distance: Option<f64>,
        #[serde(default = "default_c_q")]
        c_q: f64,
    },
    MeanEst {
        norm: Norm,
        n: usize,
        /// `eps` for l2, `gamma` for l-infinity.
        accuracy: f64,
        rho: f64,
        delta: f64,
        tiling: TilingDescriptor,
        dist: VectorDist,
        /// An execution errs when its distance to the mean exceeds `error_factor * accuracy`.
        #[serde(default = "default_factor")]
        error_factor: f64,
    },
    PseudoMax {
        n: usize,
        k: usize,
        eps: f64,
        rho: f64,
        delta: f64,
        biases: VectorGen,
    },
}

impl AlgorithmSpec {
    pub fn id(&self) -> &'static str {
        match self {
            AlgorithmSpec::CoinTest { .. } => "coin_test",
            AlgorithmSpec::StatQuery { .. } => "stat_query",
            AlgorithmSpec::HeavyHitters { .. } => "heavy_hitters",
            AlgorithmSpec::NCoin { .. } => "n_coin",
            AlgorithmSpec::LinfLearn { .. } => "linf_learn",
            AlgorithmSpec::Rounding { .. } => "rounding",
            AlgorithmSpec::MeanEst { .. } => "mean_est",
            AlgorithmSpec::PseudoMax { .. } => "pseudo_max",
        }
    }

    /// Parses a JSON spec, reporting unregistered ids as [`Error::UnknownAlgorithm`].
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let id = value
            .get("algorithm")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Parse("missing `algorithm` field".into()))?;
        if !ALGORITHMS.contains(&id) {
            return Err(Error::UnknownAlgorithm(id.to_string()));
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Validates the parameters and builds anything shared by all trials.
    pub fn prepare(&self) -> Result<Prepared> {
        let kind = match self {
            AlgorithmSpec::CoinTest {
                p0, q0, rho, delta, ..
            } => PreparedKind::Coin(AdaptiveCoinTester::new(CoinProblemParams::new(
                *p0, *q0, *rho, *delta,
            )?)),
            AlgorithmSpec::StatQuery {
                tau, rho, delta, ..
            } => PreparedKind::StatQuery(StatQueryParams::new(*tau, *rho, *delta)?),
            AlgorithmSpec::HeavyHitters {
                atoms,
                v,
                eps,
                rho,
                delta,
            } => {
                Discrete::new(atoms.clone().into_iter().collect(), 0)?;
                PreparedKind::HeavyHitters(HeavyHitterParams::new(*v, *eps, *rho, *delta)?)
            }
            AlgorithmSpec::NCoin {
                n,
                p0,
                q0,
                rho,
                delta,
                ..
            } => {
                if *n == 0 {
                    return Err(Error::InvalidParameter(
                        "at least one coin is required".into(),
                    ));
                }
                PreparedKind::NCoin(CoinProblemParams::new(*p0, *q0, *rho, *delta)?)
            }
            AlgorithmSpec::LinfLearn {
                n, eps, rho, delta, ..
            } => {
                if *n == 0
                    || !(*eps > 0.0 && *eps < 1.0)
                    || !(*rho > 0.0 && *rho < 1.0)
                    || !(*delta > 0.0 && *delta < 1.0)
                {
                    return Err(Error::InvalidParameter(
                        "need N >= 1 and eps, rho, delta in (0, 1)".into(),
                    ));
                }
                PreparedKind::LinfLearn
            }
            AlgorithmSpec::Rounding {
                n,
                eps,
                rho,
                tiling,
                distance,
                c_q,
            } => {
                let oracle = tiling.build(*n)?;
                let params = RoundingParams::with_constant(*n, *eps, *rho, *c_q)?;
                let d = distance
                    .unwrap_or(0.1 * (*n as f64).sqrt() * eps * rho / oracle.surface_area());
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "distance must be non-negative, got {d}"
                    )));
                }
                PreparedKind::Rounding {
                    oracle,
                    params,
                    distance: d,
                }
            }
            AlgorithmSpec::MeanEst {
                norm,
                n,
                accuracy,
                rho,
                delta,
                tiling,
                ..
            } => {
                let oracle = tiling.build(*n)?;
                let params = match norm {
                    Norm::L2 => MeanEstParams::l2(*n, *accuracy, *rho, *delta, oracle)?,
                    Norm::Linf => MeanEstParams::linf(*n, *accuracy, *rho, *delta, oracle)?,
                };
                PreparedKind::MeanEst(Box::new(params))
            }
            AlgorithmSpec::PseudoMax {
                n,
                k,
                eps,
                rho,
                delta,
                ..
            } => PreparedKind::PseudoMax(PseudoMaxParams::new(*n, *k, *eps, *rho, *delta)?),
        };
        Ok(Prepared {
            spec: self.clone(),
            kind,
        })
    }
}

#[derive(Debug, Clone)]
enum PreparedKind {
    Coin(AdaptiveCoinTester),
    StatQuery(StatQueryParams),
    HeavyHitters(HeavyHitterParams),
    NCoin(CoinProblemParams),
    LinfLearn,
    Rounding {
        oracle: TilingOracle,
        params: RoundingParams,
        distance: f64,
    },
    MeanEst(Box<MeanEstParams>),
    PseudoMax(PseudoMaxParams),
}

/// A validated [`AlgorithmSpec`], ready to run trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    spec: AlgorithmSpec,
    kind: PreparedKind,
}

fn coins(biases: &[f64], seed: u64) -> Result<Vec<Bernoulli>> {
    let root = SharedRandomness::new(seed);
    biases
        .iter()
        .enumerate()
        .map(|(i, &p)| Bernoulli::new(p, root.derive(i as u64).seed()))
        .collect()
}

fn set_difference<T: Ord>(a: &[T], b: &[T]) -> usize {
    let a: BTreeSet<&T> = a.iter().collect();
    let b: BTreeSet<&T> = b.iter().collect();
    a.symmetric_difference(&b).count()
}

fn coin_correct(verdict_accept: bool, p: f64, p0: f64, q0: f64) -> bool {
    if p <= p0 {
        !verdict_accept
    } else if p >= q0 {
        verdict_accept
    } else {
        true
    }
}

fn distance(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match norm {
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    }
}

fn differs(a: &[f64], b: &[f64]) -> usize {
    usize::from(a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()))
}

fn execution(
    samples: u64,
    correct: bool,
    cap_breached: bool,
    internal: &SharedRandomness,
) -> Execution {
    Execution {
        samples,
        correct,
        cap_breached,
        stream: internal.checksum(),
    }
}

impl Prepared {
    pub fn spec(&self) -> &AlgorithmSpec {
        &self.spec
    }

    fn run(&self, seeds: &TrialSeeds) -> Result<TrialRecord> {
        let mut inst = seeds.instance.clone();
        match (&self.spec, &self.kind) {
            (AlgorithmSpec::CoinTest { p0, q0, bias, .. }, PreparedKind::Coin(tester)) => {
                let p = bias.draw(&mut inst)?;
                let mut runs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut coin = Bernoulli::new(p, seed)?;
                    let mut r = seeds.internal.clone();
                    let out = tester.run(&mut coin, &mut r);
                    let accept = out.verdict == Verdict::Accept;
                    runs.push((
                        out.verdict,
                        execution(
                            out.samples_used,
                            coin_correct(accept, p, *p0, *q0),
                            false,
                            &r,
                        ),
                    ));
                }
                let labels = [verdict_label(runs[0].0), verdict_label(runs[1].0)];
                Ok(TrialRecord {
                    difference: usize::from(runs[0].0 != runs[1].0),
                    executions: [runs[0].1, runs[1].1],
                    labels: Some(labels),
                })
            }
            (AlgorithmSpec::StatQuery { tau, bias, .. }, PreparedKind::StatQuery(params)) => {
                let p = bias.draw(&mut inst)?;
                let mut values = [0.0; 2];
                let mut execs = Vec::with_capacity(2);
                for (k, &seed) in seeds.samples.iter().enumerate() {
                    let mut coin = Bernoulli::new(p, seed)?;
                    let mut r = seeds.internal.clone();
                    let out = adaptive_stat_query(&mut coin, params, &mut r);
                    values[k] = out.value;
                    execs.push(execution(
                        out.samples_used,
                        (out.value - p).abs() <= *tau,
                        false,
                        &r,
                    ));
                }
                Ok(TrialRecord {
                    difference: differs(&values[..1], &values[1..]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (AlgorithmSpec::HeavyHitters { atoms, .. }, PreparedKind::HeavyHitters(params)) => {
                let atoms: Vec<(String, f64)> = atoms.clone().into_iter().collect();
                let mut sets = Vec::with_capacity(2);
                let mut execs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut source = Discrete::new(atoms.clone(), seed)?;
                    let mut r = seeds.internal.clone();
                    let out = adaptive_heavy_hitters(&mut source, params, &mut r);
                    let sound = out
                        .set
                        .iter()
                        .all(|x| source.mass(x) >= params.v - params.eps);
                    let complete = atoms
                        .iter()
                        .filter(|(_, m)| *m >= params.v + params.eps)
                        .all(|(x, _)| out.set.contains(x));
                    execs.push(execution(out.samples_used, sound && complete, false, &r));
                    sets.push(out.set);
                }
                Ok(TrialRecord {
                    difference: set_difference(&sets[0], &sets[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (
                AlgorithmSpec::NCoin {
                    n,
                    p0,
                    q0,
                    slack,
                    biases,
                    ..
                },
                PreparedKind::NCoin(params),
            ) => {
                let p = biases.generate(*n, &mut inst)?;
                let mut outs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut sources = coins(&p, seed)?;
                    let out = match slack {
                        Some(r) => approx_n_coin_test(&mut sources, params, *r, &seeds.internal)?,
                        None => n_coin_test(&mut sources, params, &seeds.internal)?,
                    };
                    outs.push(out);
                }
                let execs: Vec<Execution> = outs
                    .iter()
                    .map(|o| {
                        let correct = p.iter().enumerate().all(|(i, &b)| {
                            coin_correct(o.accepted.binary_search(&i).is_ok(), b, *p0, *q0)
                        });
                        execution(o.total_samples, correct, o.cap_breached, &seeds.internal)
                    })
                    .collect();
                Ok(TrialRecord {
                    difference: outs[0].symmetric_difference(&outs[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (
                AlgorithmSpec::LinfLearn {
                    n,
                    eps,
                    rho,
                    delta,
                    biases,
                },
                PreparedKind::LinfLearn,
            ) => {
                let p = biases.generate(*n, &mut inst)?;
                let mut estimates = Vec::with_capacity(2);
                let mut execs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut sources = coins(&p, seed)?;
                    let out = linf_learn_by_search_with(
                        &mut sources,
                        *eps,
                        *rho,
                        *delta,
                        &LinfLearnConfig::default(),
                        &seeds.internal,
                    )?;
                    let correct = distance(&out.estimate, &p, Norm::Linf) <= *eps;
                    execs.push(execution(
                        out.samples_used,
                        correct,
                        out.cap_breaches > 0,
                        &seeds.internal,
                    ));
                    estimates.push(out.estimate);
                }
                Ok(TrialRecord {
                    difference: differs(&estimates[0], &estimates[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (
                AlgorithmSpec::Rounding { n, .. },
                PreparedKind::Rounding {
                    oracle,
                    params,
                    distance: gap,
                },
            ) => {
                let u: Vec<f64> = (0..*n)
                    .map(|_| inst.uniform(-1.0, 1.0))
                    .collect::<Result<_>>()?;
                let dir: Vec<f64> = (0..*n).map(|_| inst.standard_normal()).collect();
                let norm = dir
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                let v: Vec<f64> = u
                    .iter()
                    .zip(&dir)
                    .map(|(a, d)| a + gap * d / norm)
                    .collect();
                let mut outputs = Vec::with_capacity(2);
                let mut execs = Vec::with_capacity(2);
                for input in [&u, &v] {
                    let mut r = seeds.internal.clone();
                    let out = replicable_round(input, oracle, params, &mut r)?;
                    let correct = distance(&out.value, input, Norm::L2) <= params.eps;
                    execs.push(execution(0, correct, false, &r));
                    outputs.push(out.value);
                }
                Ok(TrialRecord {
                    difference: differs(&outputs[0], &outputs[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (
                AlgorithmSpec::MeanEst {
                    n,
                    norm,
                    accuracy,
                    dist,
                    error_factor,
                    ..
                },
                PreparedKind::MeanEst(params),
            ) => {
                let means = dist.means().generate(*n, &mut inst)?;
                let mut estimates = Vec::with_capacity(2);
                let mut execs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut source = dist.source(&means, seed)?;
                    let out = replicable_mean(&mut *source, params, &seeds.internal)?;
                    let correct = distance(&out.estimate, &means, *norm) <= error_factor * accuracy;
                    execs.push(execution(out.samples_used, correct, false, &seeds.internal));
                    estimates.push(out.estimate);
                }
                Ok(TrialRecord {
                    difference: differs(&estimates[0], &estimates[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            (AlgorithmSpec::PseudoMax { n, eps, biases, .. }, PreparedKind::PseudoMax(params)) => {
                let p = biases.generate(*n, &mut inst)?;
                let p_max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sets = Vec::with_capacity(2);
                let mut execs = Vec::with_capacity(2);
                for &seed in &seeds.samples {
                    let mut sources = coins(&p, seed)?;
                    let out = pseudo_max(&mut sources, params, &seeds.internal)?;
                    let correct = out.set.iter().all(|&i| p[i] >= p_max - 6.0 * eps);
                    execs.push(execution(out.samples_used, correct, false, &seeds.internal));
                    sets.push(out.set);
                }
                Ok(TrialRecord {
                    difference: set_difference(&sets[0], &sets[1]),
                    executions: [execs[0], execs[1]],
                    labels: None,
                })
            }
            _ => unreachable!("prepared kind always matches its spec"),
        }
    }
}

fn verdict_label(v: Verdict) -> String {
    match v {
        Verdict::Accept => "accept".into(),
        Verdict::Reject => "reject".into(),
    }
}

impl Experiment for Prepared {
    fn name(&self) -> String {
        self.spec.id().to_string()
    }

    fn parameters(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).unwrap_or(serde_json::Value::Null)
    }

    fn constants(&self) -> BTreeMap<String, f64> {
        let mut c = BTreeMap::new();
        match &self.kind {
            PreparedKind::Coin(t) => {
                c.insert("sample_constant".into(), t.sample_constant);
            }
            PreparedKind::NCoin(_) => {
                c.insert("cap_constant".into(), NCoinConfig::default().cap_constant);
            }
            PreparedKind::LinfLearn => {
                let cfg = LinfLearnConfig::default();
                c.insert("round_constant".into(), cfg.round_constant);
                c.insert("cap_constant".into(), cfg.n_coin.cap_constant);
            }
            PreparedKind::Rounding {
                params, distance, ..
            } => {
                c.insert("c_q".into(), params.c_q);
                c.insert("pair_distance".into(), *distance);
            }
            PreparedKind::MeanEst(p) => {
                c.insert("sample_constant".into(), p.constant);
                c.insert("c_q".into(), p.c_q);
            }
            PreparedKind::StatQuery(_)
            | PreparedKind::HeavyHitters(_)
            | PreparedKind::PseudoMax(_) => {}
        }
        c
    }

    fn targets(&self) -> Targets {
        let (rho, delta) = match &self.spec {
            AlgorithmSpec::CoinTest { rho, delta, .. }
            | AlgorithmSpec::StatQuery { rho, delta, .. }
            | AlgorithmSpec::HeavyHitters { rho, delta, .. }
            | AlgorithmSpec::NCoin { rho, delta, .. }
            | AlgorithmSpec::LinfLearn { rho, delta, .. }
            | AlgorithmSpec::MeanEst { rho, delta, .. }
            | AlgorithmSpec::PseudoMax { rho, delta, .. } => (*rho, Some(*delta)),
            AlgorithmSpec::Rounding { rho, .. } => (*rho, Some(0.0)),
        };
        Targets {
            non_replication: Some(rho),
            error: delta,
        }
    }

    fn trial(&self, seeds: &TrialSeeds) -> Result<TrialRecord> {
        self.run(seeds)
    }
}

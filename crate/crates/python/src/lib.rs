//! Python bindings for `replicore`.
//!
//! Structured results come back as plain dicts and lists. Coins are either a
//! bias (simulated with a seeded Bernoulli source) or any zero-argument Python
//! callable returning a truthy value for heads.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use replicore::coin::{adaptive_coin_test, simple_coin_test, CoinProblemParams};
use replicore::compose::{approx_n_coin_test, linf_learn_by_search, n_coin_test};
use replicore::harness::presets::{preset, presets};
use replicore::harness::{run_paired, sweep, PairedTrialConfig};
use replicore::heavyhitters::{adaptive_heavy_hitters, HeavyHitterParams};
use replicore::maxid::{pseudo_max as run_pseudo_max, PseudoMaxParams};
use replicore::meanest::{replicable_mean, MeanEstParams};
use replicore::randomness::{Bernoulli, Coin, Discrete, Gaussian, ProductBernoulli, VectorSource};
use replicore::statq::{adaptive_stat_query, StatQueryParams};
use replicore::tiling::{self, lattice_preprocess, RoundingParams, TilingDescriptor, TilingOracle};

create_exception!(pyreplicore, ReplicoreError, PyValueError);

fn err(e: replicore::Error) -> PyErr {
    ReplicoreError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| ReplicoreError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        obj.py()
            .import("json")?
            .call_method1("dumps", (obj,))?
            .extract()?
    };
    serde_json::from_str(&text).map_err(|e| ReplicoreError::new_err(e.to_string()))
}

/// Coin backed by a Python callable. The first exception is kept and re-raised
/// once the algorithm returns.
struct PyCoin<'py> {
    f: Bound<'py, PyAny>,
    consumed: u64,
    error: Option<PyErr>,
}

impl Coin for PyCoin<'_> {
    fn flip(&mut self) -> bool {
        if self.error.is_some() {
            return false;
        }
        self.consumed += 1;
        match self.f.call0().and_then(|v| v.is_truthy()) {
            Ok(b) => b,
            Err(e) => {
                self.error = Some(e);
                false
            }
        }
    }

    fn consumed(&self) -> u64 {
        self.consumed
    }
}

fn with_coin<'py, R>(
    bias: Option<f64>,
    coin: Option<Bound<'py, PyAny>>,
    sample_seed: u64,
    run: impl FnOnce(&mut dyn Coin) -> replicore::Result<R>,
) -> PyResult<R> {
    match (bias, coin) {
        (Some(p), None) => {
            let mut c = Bernoulli::new(p, sample_seed).map_err(err)?;
            run(&mut c).map_err(err)
        }
        (None, Some(f)) => {
            let mut c = PyCoin {
                f,
                consumed: 0,
                error: None,
            };
            let out = run(&mut c);
            match c.error.take() {
                Some(e) => Err(e),
                None => out.map_err(err),
            }
        }
        _ => Err(PyValueError::new_err(
            "pass exactly one of `bias` and `coin`",
        )),
    }
}

fn bernoulli_coins(biases: &[f64], sample_seed: u64) -> PyResult<Vec<Bernoulli>> {
    let root = replicore::SharedRandomness::new(sample_seed);
    biases
        .iter()
        .enumerate()
        .map(|(i, &p)| Bernoulli::new(p, root.derive(i as u64).seed()).map_err(err))
        .collect()
}

fn build_tiling(tiling: Option<&Bound<'_, PyAny>>, dim: usize) -> PyResult<TilingOracle> {
    let desc = match tiling {
        Some(t) => from_py(t)?,
        None => TilingDescriptor::cube(),
    };
    desc.build(dim).map_err(err)
}

/// Replicable adaptive coin test. Returns the verdict, sample count,
/// terminating round and the shared threshold.
#[pyfunction]
#[pyo3(signature = (p0, q0, rho, delta, bias=None, *, coin=None, seed=0, sample_seed=1, adaptive=true))]
#[allow(clippy::too_many_arguments)]
fn coin_test<'py>(
    py: Python<'py>,
    p0: f64,
    q0: f64,
    rho: f64,
    delta: f64,
    bias: Option<f64>,
    coin: Option<Bound<'py, PyAny>>,
    seed: u64,
    sample_seed: u64,
    adaptive: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let params = CoinProblemParams::new(p0, q0, rho, delta).map_err(err)?;
    let mut rand = replicore::SharedRandomness::new(seed);
    let out = with_coin(bias, coin, sample_seed, |c| {
        Ok(if adaptive {
            adaptive_coin_test(c, &params, &mut rand)
        } else {
            simple_coin_test(c, &params, &mut rand)
        })
    })?;
    to_py(py, &out)
}

/// Replicable estimate of a coin's bias to within `tau`.
#[pyfunction]
#[pyo3(signature = (tau, rho, delta, bias=None, *, coin=None, seed=0, sample_seed=1))]
#[allow(clippy::too_many_arguments)]
fn stat_query<'py>(
    py: Python<'py>,
    tau: f64,
    rho: f64,
    delta: f64,
    bias: Option<f64>,
    coin: Option<Bound<'py, PyAny>>,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = StatQueryParams::new(tau, rho, delta).map_err(err)?;
    let mut rand = replicore::SharedRandomness::new(seed);
    let out = with_coin(bias, coin, sample_seed, |c| {
        Ok(adaptive_stat_query(c, &params, &mut rand))
    })?;
    to_py(py, &out)
}

/// Heavy hitters of a finite distribution given as `{atom: mass}`.
#[pyfunction]
#[pyo3(signature = (dist, v, eps, rho, delta, *, seed=0, sample_seed=1))]
#[allow(clippy::too_many_arguments)]
fn heavy_hitters<'py>(
    py: Python<'py>,
    dist: BTreeMap<String, f64>,
    v: f64,
    eps: f64,
    rho: f64,
    delta: f64,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = HeavyHitterParams::new(v, eps, rho, delta).map_err(err)?;
    let mut source = Discrete::new(dist.into_iter().collect(), sample_seed).map_err(err)?;
    let mut rand = replicore::SharedRandomness::new(seed);
    to_py(py, &adaptive_heavy_hitters(&mut source, &params, &mut rand))
}

/// Tests every coin in `biases`; with `slack` the paired outputs only need to
/// agree on all but `slack - 1` coins.
#[pyfunction]
#[pyo3(signature = (biases, p0, q0, rho, delta, *, slack=None, seed=0, sample_seed=1))]
#[allow(clippy::too_many_arguments)]
fn n_coin<'py>(
    py: Python<'py>,
    biases: Vec<f64>,
    p0: f64,
    q0: f64,
    rho: f64,
    delta: f64,
    slack: Option<usize>,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = CoinProblemParams::new(p0, q0, rho, delta).map_err(err)?;
    let mut coins = bernoulli_coins(&biases, sample_seed)?;
    let rand = replicore::SharedRandomness::new(seed);
    let out = match slack {
        Some(r) => approx_n_coin_test(&mut coins, &params, r, &rand),
        None => n_coin_test(&mut coins, &params, &rand),
    }
    .map_err(err)?;
    to_py(py, &out)
}

/// Learns all biases to within `eps` in sup norm.
#[pyfunction]
#[pyo3(signature = (biases, eps, rho, delta, *, seed=0, sample_seed=1))]
fn linf_learn<'py>(
    py: Python<'py>,
    biases: Vec<f64>,
    eps: f64,
    rho: f64,
    delta: f64,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut coins = bernoulli_coins(&biases, sample_seed)?;
    let rand = replicore::SharedRandomness::new(seed);
    let out = linf_learn_by_search(&mut coins, eps, rho, delta, &rand).map_err(err)?;
    to_py(py, &out)
}

/// Replicable mean of a product Bernoulli (`family="bernoulli"`) or unit
/// Gaussian distribution. `accuracy` is `eps` for l2 and `gamma` for linf.
/// `tiling` is a descriptor dict or JSON string; the default is the cube tiling.
#[pyfunction]
#[pyo3(signature = (means, accuracy, rho, delta, *, norm="l2", family="gaussian", tiling=None, seed=0, sample_seed=1))]
#[allow(clippy::too_many_arguments)]
fn mean_estimate<'py>(
    py: Python<'py>,
    means: Vec<f64>,
    accuracy: f64,
    rho: f64,
    delta: f64,
    norm: &str,
    family: &str,
    tiling: Option<Bound<'py, PyAny>>,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let dim = means.len();
    let oracle = build_tiling(tiling.as_ref(), dim)?;
    let params = match norm {
        "l2" => MeanEstParams::l2(dim, accuracy, rho, delta, oracle),
        "linf" => MeanEstParams::linf(dim, accuracy, rho, delta, oracle),
        other => return Err(PyValueError::new_err(format!("unknown norm `{other}`"))),
    }
    .map_err(err)?;
    let mut source: Box<dyn VectorSource> = match family {
        "gaussian" => Box::new(Gaussian::new(means, sample_seed)),
        "bernoulli" => Box::new(ProductBernoulli::new(&means, sample_seed).map_err(err)?),
        other => return Err(PyValueError::new_err(format!("unknown family `{other}`"))),
    };
    let rand = replicore::SharedRandomness::new(seed);
    let out = replicable_mean(source.as_mut(), &params, &rand).map_err(err)?;
    to_py(py, &out)
}

/// Rounds `point` to a nearby tile center chosen with the shared randomness.
#[pyfunction]
#[pyo3(signature = (point, eps, rho, *, tiling=None, seed=0))]
fn replicable_round<'py>(
    py: Python<'py>,
    point: Vec<f64>,
    eps: f64,
    rho: f64,
    tiling: Option<Bound<'py, PyAny>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let oracle = build_tiling(tiling.as_ref(), point.len())?;
    let params = RoundingParams::new(point.len(), eps, rho).map_err(err)?;
    let mut rand = replicore::SharedRandomness::new(seed);
    let out = tiling::replicable_round(&point, &oracle, &params, &mut rand).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("value", out.value)?;
    d.set_item("fell_back", out.fell_back)?;
    Ok(d)
}

/// Replicable pseudo-maximum: a small set of coins containing near-maximal ones.
#[pyfunction]
#[pyo3(signature = (biases, k, eps, rho, delta, *, seed=0, sample_seed=1))]
#[allow(clippy::too_many_arguments)]
fn pseudo_max<'py>(
    py: Python<'py>,
    biases: Vec<f64>,
    k: usize,
    eps: f64,
    rho: f64,
    delta: f64,
    seed: u64,
    sample_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let params = PseudoMaxParams::new(biases.len(), k, eps, rho, delta).map_err(err)?;
    let mut coins = bernoulli_coins(&biases, sample_seed)?;
    let rand = replicore::SharedRandomness::new(seed);
    let out = run_pseudo_max(&mut coins, &params, &rand).map_err(err)?;
    to_py(py, &out)
}

/// `(id, description)` for every bundled preset.
#[pyfunction]
fn list_presets() -> Vec<(String, String)> {
    presets()
        .into_iter()
        .map(|p| (p.id, p.description))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (id, trials=None, seed=None))]
fn run_preset<'py>(
    py: Python<'py>,
    id: &str,
    trials: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = preset(id).map_err(err)?;
    let out = py
        .detach(|| replicore::harness::presets::run_preset(&p, trials, seed))
        .map_err(err)?;
    to_py(py, &out)
}

/// Runs a paired-trial configuration given as a dict or JSON string.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, config: Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PairedTrialConfig = from_py(&config)?;
    let report = py.detach(|| run_paired(&cfg)).map_err(err)?;
    to_py(py, &report)
}

/// Runs a configuration once per value of the dotted parameter path `axis`.
#[pyfunction]
fn sweep_config<'py>(
    py: Python<'py>,
    config: Bound<'py, PyAny>,
    axis: &str,
    values: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PairedTrialConfig = from_py(&config)?;
    let reports = py.detach(|| sweep(&cfg, axis, &values)).map_err(err)?;
    to_py(py, &reports)
}

/// Seeded shared random stream.
#[pyclass(name = "SharedRandomness")]
struct PySharedRandomness(replicore::SharedRandomness);

#[pymethods]
impl PySharedRandomness {
    #[new]
    fn new(seed: u64) -> Self {
        PySharedRandomness(replicore::SharedRandomness::new(seed))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    fn derive(&self, label: u64) -> Self {
        PySharedRandomness(self.0.derive(label))
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn unit(&mut self) -> f64 {
        self.0.unit()
    }

    /// `(seed, words consumed)`; equal checksums mean identical stream use.
    fn checksum(&self) -> (u64, u128) {
        self.0.checksum()
    }
}

/// Preprocessed lattice spanned by the rows of `basis`.
#[pyclass(name = "Lattice")]
struct PyLattice(replicore::tiling::Lattice);

#[pymethods]
impl PyLattice {
    #[new]
    fn new(basis: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = basis.len();
        if n == 0 || basis.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(
                "basis must be a non-empty square matrix",
            ));
        }
        let m = DMatrix::from_row_iterator(n, n, basis.into_iter().flatten());
        lattice_preprocess(&m, f64::INFINITY)
            .map(PyLattice)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Packing radius.
    #[getter]
    fn packing_radius(&self) -> f64 {
        self.0.lambda()
    }

    /// Covering radius.
    #[getter]
    fn covering_radius(&self) -> f64 {
        self.0.mu()
    }

    #[getter]
    fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    #[getter]
    fn relevant_vectors(&self) -> Vec<Vec<f64>> {
        self.0
            .relevant_vectors()
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }

    /// Closest lattice point as `(coefficients, point)`.
    fn closest(&self, x: Vec<f64>) -> PyResult<(Vec<i64>, Vec<f64>)> {
        self.check(&x)?;
        let p = self.0.closest(&DVector::from_vec(x));
        Ok((p.coefficients, p.point.iter().copied().collect()))
    }

    fn distance(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.0.distance(&DVector::from_vec(x)))
    }
}

impl PyLattice {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.0.dim() {
            return Err(PyValueError::new_err(format!(
                "expected a point of dimension {}, got {}",
                self.0.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

#[pymodule]
pub fn pyreplicore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReplicoreError", m.py().get_type::<ReplicoreError>())?;
    m.add(
        "GENERATOR_VERSION",
        replicore::randomness::GENERATOR_VERSION,
    )?;
    m.add_class::<PySharedRandomness>()?;
    m.add_class::<PyLattice>()?;
    m.add_function(wrap_pyfunction!(coin_test, m)?)?;
    m.add_function(wrap_pyfunction!(stat_query, m)?)?;
    m.add_function(wrap_pyfunction!(heavy_hitters, m)?)?;
    m.add_function(wrap_pyfunction!(n_coin, m)?)?;
    m.add_function(wrap_pyfunction!(linf_learn, m)?)?;
    m.add_function(wrap_pyfunction!(mean_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(replicable_round, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_max, m)?)?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_config, m)?)?;
    Ok(())
}

//! Randomized rounding through a rotated, shifted, wrapped tiling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TilingOracle;
use crate::error::{ensure, Error, Result};
use crate::randomness::SharedRandomness;

/// Coordinate-wise `((x + q) mod 2q) - q`, with outputs in `[-q, q)`.
pub fn wrap(x: &[f64], q: f64) -> Vec<f64> {
    assert!(q > 0.0, "wrap half-width must be positive");
    x.iter()
        .map(|&v| {
            let w = (v + q).rem_euclid(2.0 * q) - q;
            if w >= q {
                -q
            } else {
                w
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingParams {
    pub dim: usize,
    pub eps: f64,
    pub rho: f64,
    pub c_q: f64,
}

impl RoundingParams {
    pub fn new(dim: usize, eps: f64, rho: f64) -> Result<Self> {
        Self::with_constant(dim, eps, rho, 10.0)
    }

    pub fn with_constant(dim: usize, eps: f64, rho: f64, c_q: f64) -> Result<Self> {
        ensure(dim > 0, || "dimension must be positive".into())?;
        let root = (dim as f64).sqrt();
        ensure(eps > 0.0 && eps < root, || {
            format!("eps must lie in (0, {root}), got {eps}")
        })?;
        ensure(rho > 0.0 && rho < 1.0, || {
            format!("rho must lie in (0, 1), got {rho}")
        })?;
        ensure(c_q >= 10.0, || {
            format!("wrap constant must be at least 10, got {c_q}")
        })?;
        Ok(RoundingParams { dim, eps, rho, c_q })
    }

    /// Wrap half-width.
    pub fn q(&self) -> f64 {
        let n = self.dim as f64;
        self.c_q * (n.powf(1.5) + n * self.eps / self.rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub value: Vec<f64>,
    /// The rounded point moved more than `eps` and the input was returned instead.
    pub fell_back: bool,
}

fn check_input(u: &[f64], tiling: &TilingOracle, params: &RoundingParams) -> Result<()> {
    let n = params.dim;
    if u.len() != n || tiling.dim() != n {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: input {}, tiling {}, params {n}",
            u.len(),
            tiling.dim()
        )));
    }
    if let Some(x) = u.iter().find(|x| !(x.abs() <= n as f64)) {
        return Err(Error::Domain(format!(
            "coordinate {x} lies outside [-{n}, {n}]"
        )));
    }
    Ok(())
}

/// Rounds `u` with a given rotation and offset.
pub fn round_with_transform(
    u: &[f64],
    tiling: &TilingOracle,
    params: &RoundingParams,
    rotation: &DMatrix<f64>,
    offset: &[f64],
) -> Result<RoundOutcome> {
    check_input(u, tiling, params)?;
    let q = params.q();
    let eps = params.eps;
    let uv = DVector::from_column_slice(u);
    let ru = rotation * &uv;
    let shifted: Vec<f64> = ru.iter().zip(offset).map(|(a, b)| a + b).collect();
    let v = wrap(&shifted, q);
    let scaled: Vec<f64> = v.iter().map(|x| x / eps).collect();
    let tv: Vec<f64> = tiling.membership(&scaled).iter().map(|x| x * eps).collect();
    let back: Vec<f64> = tv.iter().zip(offset).map(|(a, b)| a - b).collect();
    let ubar = rotation.transpose() * DVector::from_vec(wrap(&back, q));
    if (&ubar - &uv).norm() <= eps {
        Ok(RoundOutcome {
            value: ubar.iter().copied().collect(),
            fell_back: false,
        })
    } else {
        Ok(RoundOutcome {
            value: u.to_vec(),
            fell_back: true,
        })
    }
}

/// Replicable rounding: the rotation and offset come from the shared stream.
/// The output is always within `eps` of `u`.
pub fn replicable_round(
    u: &[f64],
    tiling: &TilingOracle,
    params: &RoundingParams,
    rand: &mut SharedRandomness,
) -> Result<RoundOutcome> {
    check_input(u, tiling, params)?;
    let rotation = rand.haar_rotation(params.dim)?;
    let offset = rand.uniform_cube(params.dim, params.q())?;
    round_with_transform(u, tiling, params, &rotation, &offset)
}

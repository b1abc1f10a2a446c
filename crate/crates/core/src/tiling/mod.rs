//! Tilings of R^N with deterministic membership oracles, and the replicable
//! rounding scheme built on them.

pub mod lattice;
pub mod rounding;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use lattice::{lattice_preprocess, Lattice, LatticePoint, MAX_LATTICE_DIM};
pub use rounding::{replicable_round, round_with_transform, wrap, RoundOutcome, RoundingParams};

/// Largest admissible cell radius.
pub const MAX_CELL_RADIUS: f64 = 0.1;

type LabelFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Cells {
    Cube { side: f64 },
    Voronoi(Arc<Lattice>),
    Custom(Arc<LabelFn>),
}

/// A tiling of R^N given by its membership oracle and declared parameters.
#[derive(Clone)]
pub struct TilingOracle {
    dim: usize,
    gamma: f64,
    surface_area: f64,
    cell_radius: f64,
    cells: Cells,
}

impl fmt::Debug for TilingOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TilingOracle")
            .field("kind", &self.kind())
            .field("dim", &self.dim)
            .field("gamma", &self.gamma)
            .field("surface_area", &self.surface_area)
            .field("cell_radius", &self.cell_radius)
            .finish()
    }
}

/// Axis-aligned cubes of side `side`, labelled by their centers.
pub fn cube_tiling(dim: usize, side: f64) -> Result<TilingOracle> {
    ensure(dim > 0, || "dimension must be positive".into())?;
    let max_side = 2.0 * MAX_CELL_RADIUS / (dim as f64).sqrt();
    ensure(side > 0.0 && side <= max_side * (1.0 + 1e-12), || {
        format!("cube side must lie in (0, {max_side}], got {side}")
    })?;
    Ok(TilingOracle {
        dim,
        gamma: 0.0,
        surface_area: 2.0 * dim as f64 / side,
        cell_radius: side * (dim as f64).sqrt() / 2.0,
        cells: Cells::Cube { side },
    })
}

/// Largest cube side with cell radius at most [`MAX_CELL_RADIUS`].
pub fn default_cube_side(dim: usize) -> f64 {
    2.0 * MAX_CELL_RADIUS / (dim as f64).sqrt()
}

/// Voronoi cells of `lattice`, rescaled so the covering radius is `radius`.
pub fn voronoi_tiling_with_radius(lattice: &Lattice, radius: f64) -> Result<TilingOracle> {
    ensure(radius > 0.0 && radius <= MAX_CELL_RADIUS, || {
        format!("covering radius must lie in (0, {MAX_CELL_RADIUS}], got {radius}")
    })?;
    let scaled = lattice.scaled(radius / lattice.mu())?;
    Ok(TilingOracle {
        dim: scaled.dim(),
        gamma: 0.0,
        surface_area: scaled.dim() as f64 / scaled.lambda(),
        cell_radius: scaled.mu(),
        cells: Cells::Voronoi(Arc::new(scaled)),
    })
}

/// Voronoi cells of `lattice` at covering radius [`MAX_CELL_RADIUS`].
pub fn voronoi_tiling(lattice: &Lattice) -> Result<TilingOracle> {
    voronoi_tiling_with_radius(lattice, MAX_CELL_RADIUS)
}

impl TilingOracle {
    /// Wraps a user-supplied deterministic oracle with declared parameters.
    pub fn custom<F>(
        dim: usize,
        gamma: f64,
        surface_area: f64,
        cell_radius: f64,
        membership: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        ensure(dim > 0, || "dimension must be positive".into())?;
        ensure((0.0..1.0).contains(&gamma), || {
            format!("gamma must lie in [0, 1), got {gamma}")
        })?;
        ensure(surface_area > 0.0, || {
            format!("surface area must be positive, got {surface_area}")
        })?;
        ensure(cell_radius > 0.0 && cell_radius <= MAX_CELL_RADIUS, || {
            format!("cell radius must lie in (0, {MAX_CELL_RADIUS}], got {cell_radius}")
        })?;
        Ok(TilingOracle {
            dim,
            gamma,
            surface_area,
            cell_radius,
            cells: Cells::Custom(Arc::new(membership)),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared uncovered fraction.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Declared normalized surface area.
    pub fn surface_area(&self) -> f64 {
        self.surface_area
    }

    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    pub fn kind(&self) -> &'static str {
        match self.cells {
            Cells::Cube { .. } => "cube",
            Cells::Voronoi(_) => "lattice",
            Cells::Custom(_) => "custom",
        }
    }

    /// Label of the cell containing `x`.
    pub fn membership(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        match &self.cells {
            Cells::Cube { side } => x
                .iter()
                .map(|&v| side * ((v / side).floor() + 0.5))
                .collect(),
            Cells::Voronoi(l) => l
                .closest(&DVector::from_column_slice(x))
                .point
                .iter()
                .copied()
                .collect(),
            Cells::Custom(f) => f(x),
        }
    }
}

/// Majority vote over repeated queries of a randomized membership oracle.
pub struct MajorityOracle<F> {
    oracle: F,
    repeats: usize,
}

impl<F: FnMut(&[f64]) -> Vec<f64>> MajorityOracle<F> {
    /// Uses `2 ceil(log2(1/delta)) + 1` queries per label.
    pub fn new(oracle: F, delta: f64) -> Result<Self> {
        ensure(delta > 0.0 && delta < 1.0, || {
            format!("delta must lie in (0, 1), got {delta}")
        })?;
        Ok(MajorityOracle {
            oracle,
            repeats: 2 * (1.0 / delta).log2().ceil() as usize + 1,
        })
    }

    pub fn repeats(&self) -> usize {
        self.repeats
    }

    /// Most frequent answer; ties go to the lexicographically smallest label.
    pub fn label(&mut self, x: &[f64]) -> Vec<f64> {
        let mut seen: Vec<(Vec<f64>, usize)> = Vec::new();
        for _ in 0..self.repeats {
            let v = (self.oracle)(x);
            match seen.iter_mut().find(|(w, _)| *w == v) {
                Some((_, c)) => *c += 1,
                None => seen.push((v, 1)),
            }
        }
        seen.into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| lex_f64(&b.0, &a.0)))
            .map(|(v, _)| v)
            .expect("at least one query")
    }
}

fn lex_f64(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(a.len().cmp(&b.len()))
}

/// Parses a basis: one row per line, whitespace-separated decimals.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_basis(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: `{tok}` is not a number", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("basis file has no rows".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Parse(format!(
            "basis must be square: row {} has {} entries, expected {n}",
            bad + 1,
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn read_basis(path: &Path) -> Result<DMatrix<f64>> {
    parse_basis(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TilingKind {
    Cube,
    Lattice,
}

/// JSON description of a tiling.
///
/// For cubes `scale` is the cell side (default the largest admissible); for
/// lattices it is the covering radius after renormalization (default 0.1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingDescriptor {
    pub kind: TilingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl TilingDescriptor {
    pub fn cube() -> Self {
        TilingDescriptor {
            kind: TilingKind::Cube,
            basis_path: None,
            scale: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the tiling in dimension `dim`; lattice bases must match it.
    pub fn build(&self, dim: usize) -> Result<TilingOracle> {
        match self.kind {
            TilingKind::Cube => {
                cube_tiling(dim, self.scale.unwrap_or_else(|| default_cube_side(dim)))
            }
            TilingKind::Lattice => {
                let path = self.basis_path.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("lattice tiling needs basis_path".into())
                })?;
                let basis = read_basis(path)?;
                if basis.nrows() != dim {
                    return Err(Error::InvalidParameter(format!(
                        "basis has dimension {}, expected {dim}",
                        basis.nrows()
                    )));
                }
                let lattice = lattice_preprocess(&basis, f64::INFINITY)?;
                voronoi_tiling_with_radius(&lattice, self.scale.unwrap_or(MAX_CELL_RADIUS))
            }
        }
    }
}

//! Full-rank lattices in small dimension: enumeration, exact closest vectors,
//! packing and covering radii, Voronoi-relevant vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest dimension accepted for lattice tilings.
pub const MAX_LATTICE_DIM: usize = 6;

/// Squared distances closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

const GRID_RESOLUTION: usize = 20;
const GRID_POINT_CAP: usize = 200_000;
const RANDOM_PROBES: usize = 10_000;
const PROBE_SEED: u64 = 0x6c61_7474_6963_6573;

/// A lattice point together with its integer coefficients in the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coefficients: Vec<i64>,
    pub point: DVector<f64>,
}

/// A preprocessed lattice. The basis vectors are the columns of [`Lattice::basis`].
#[derive(Debug, Clone)]
pub struct Lattice {
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    relevant: Vec<DVector<f64>>,
    lambda: f64,
    mu: f64,
}

/// Preprocesses the lattice spanned by the rows of `basis`.
///
/// Computes the packing radius, the Voronoi-relevant vectors, and the
/// covering radius: the largest vertex norm of the Voronoi cell reached from
/// a grid over the fundamental parallelepiped plus random probes.
/// `radius_budget` bounds the enumeration radius and must cover `2 mu`; pass
/// `f64::INFINITY` for no bound.
pub fn lattice_preprocess(basis: &DMatrix<f64>, radius_budget: f64) -> Result<Lattice> {
    let n = basis.nrows();
    if n != basis.ncols() || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "basis must be a non-empty square matrix, got {}x{}",
            basis.nrows(),
            basis.ncols()
        )));
    }
    if n > MAX_LATTICE_DIM {
        return Err(Error::Dimension {
            found: n,
            max: MAX_LATTICE_DIM,
        });
    }
    if basis.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "basis entries must be finite".into(),
        ));
    }
    let mut lattice = Lattice::from_columns(basis.transpose())?;
    lattice.lambda = lattice.shortest_norm() / 2.0;
    // twice the covering radius is at most the norm of the basis sum of squares
    let reach = lattice.basis.norm() * (1.0 + 1e-9);
    lattice.relevant = lattice.find_relevant(reach.min(radius_budget));
    lattice.mu = lattice.estimate_covering_radius();
    let needed = 2.0 * lattice.mu;
    if needed > radius_budget * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "radius budget {radius_budget} is below twice the covering radius {needed}"
        )));
    }
    Ok(lattice)
}

impl Lattice {
    fn from_columns(basis: DMatrix<f64>) -> Result<Self> {
        let scale: f64 = basis.column_iter().map(|c| c.norm()).product();
        let det = basis.determinant();
        if !(scale > 0.0) || det.abs() <= 1e-10 * scale {
            return Err(Error::SingularBasis(format!(
                "determinant {det} is numerically zero"
            )));
        }
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularBasis("basis is not invertible".into()))?;
        let qr = basis.clone().qr();
        Ok(Lattice {
            q: qr.q(),
            r: qr.r(),
            basis,
            inverse,
            relevant: Vec::new(),
            lambda: 0.0,
            mu: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Basis vectors as columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Packing radius: half the shortest nonzero vector length.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Covering radius.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn relevant_vectors(&self) -> &[DVector<f64>] {
        &self.relevant
    }

    pub fn determinant(&self) -> f64 {
        self.basis.determinant().abs()
    }

    /// The lattice `c L`, with radii and relevant vectors scaled accordingly.
    pub fn scaled(&self, c: f64) -> Result<Lattice> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {c}"
            )));
        }
        let mut out = Lattice::from_columns(&self.basis * c)?;
        out.lambda = self.lambda * c;
        out.mu = self.mu * c;
        out.relevant = self.relevant.iter().map(|w| w * c).collect();
        Ok(out)
    }

    pub fn point(&self, coefficients: &[i64]) -> DVector<f64> {
        let c = DVector::from_iterator(coefficients.len(), coefficients.iter().map(|&x| x as f64));
        &self.basis * c
    }

    /// All lattice points with squared distance to `target` at most `bound_sq`.
    pub fn enumerate(&self, target: &DVector<f64>, bound_sq: f64) -> Vec<(Vec<i64>, f64)> {
        let n = self.dim();
        let y = self.q.transpose() * target;
        let mut coeffs = vec![0i64; n];
        let mut out = Vec::new();
        self.enumerate_level(n, &y, 0.0, bound_sq, &mut coeffs, &mut out);
        out
    }

    fn enumerate_level(
        &self,
        level: usize,
        y: &DVector<f64>,
        partial: f64,
        bound_sq: f64,
        coeffs: &mut Vec<i64>,
        out: &mut Vec<(Vec<i64>, f64)>,
    ) {
        if level == 0 {
            out.push((coeffs.clone(), partial));
            return;
        }
        let i = level - 1;
        let n = self.dim();
        let tail: f64 = ((i + 1)..n)
            .map(|j| self.r[(i, j)] * coeffs[j] as f64)
            .sum();
        let rii = self.r[(i, i)];
        let center = (y[i] - tail) / rii;
        let room = bound_sq - partial;
        if room < 0.0 {
            return;
        }
        let half = room.sqrt() / rii.abs();
        let lo = (center - half).ceil() as i64;
        let hi = (center + half).floor() as i64;
        for c in lo..=hi {
            let diff = rii * (c as f64 - center);
            let next = partial + diff * diff;
            if next <= bound_sq {
                coeffs[i] = c;
                self.enumerate_level(level - 1, y, next, bound_sq, coeffs, out);
            }
        }
        coeffs[i] = 0;
    }

    /// Exact closest lattice vector to `target`.
    ///
    /// Squared distances within [`TIE_TOLERANCE`] of the minimum tie; ties go
    /// to the lexicographically smallest coefficient vector.
    pub fn closest(&self, target: &DVector<f64>) -> LatticePoint {
        let babai: Vec<i64> = (&self.inverse * target)
            .iter()
            .map(|x| x.round() as i64)
            .collect();
        let start = (self.point(&babai) - target).norm_squared();
        let bound = start * (1.0 + 1e-9) + TIE_TOLERANCE;
        let mut found: Vec<(Vec<i64>, f64)> = self
            .enumerate(target, bound)
            .into_iter()
            .map(|(c, _)| {
                let d = (self.point(&c) - target).norm_squared();
                (c, d)
            })
            .collect();
        if found.is_empty() {
            found.push((babai.clone(), start));
        }
        let best = found.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
        let coefficients = found
            .into_iter()
            .filter(|(_, d)| *d <= best + TIE_TOLERANCE)
            .map(|(c, _)| c)
            .min()
            .expect("non-empty");
        let point = self.point(&coefficients);
        LatticePoint {
            coefficients,
            point,
        }
    }

    /// Euclidean distance from `x` to the lattice.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        (self.closest(x).point - x).norm()
    }

    fn shortest_norm(&self) -> f64 {
        let zero = DVector::zeros(self.dim());
        let bound = self
            .basis
            .column_iter()
            .map(|c| c.norm_squared())
            .fold(f64::INFINITY, f64::min)
            * (1.0 + 1e-9);
        self.enumerate(&zero, bound)
            .into_iter()
            .filter(|(c, _)| c.iter().any(|&x| x != 0))
            .map(|(c, _)| self.point(&c).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn estimate_covering_radius(&self) -> f64 {
        let n = self.dim();
        let mut per_axis = GRID_RESOLUTION;
        while per_axis > 2 && per_axis.pow(n as u32) > GRID_POINT_CAP {
            per_axis -= 1;
        }
        let total = per_axis.pow(n as u32);
        // offsets into the cell of the origin, scored by their norm
        let mut scored: Vec<(f64, DVector<f64>)> = Vec::with_capacity(total + RANDOM_PROBES);
        let mut push = |x: DVector<f64>| {
            let offset = &x - self.closest(&x).point;
            scored.push((offset.norm(), offset));
        };
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let frac = DVector::from_iterator(n, idx.iter().map(|&k| k as f64 / per_axis as f64));
            push(&self.basis * frac);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        for _ in 0..RANDOM_PROBES {
            push(&self.basis * DVector::from_fn(n, |_, _| rng.random::<f64>()));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = scored[0].0;
        for (_, x) in scored.iter().take(8 * n) {
            let v = self.walk_to_vertex(x.clone());
            best = best.max(self.distance(&v));
        }
        best
    }

    /// Moves a point of the Voronoi cell of the origin to a vertex without
    /// decreasing its norm, following the faces cut out by the relevant vectors.
    fn walk_to_vertex(&self, mut x: DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let facets: Vec<(DVector<f64>, f64)> = self
            .relevant
            .iter()
            .map(|w| (w.clone(), w.norm_squared() / 2.0))
            .collect();
        for _ in 0..2 * n + 2 {
            let mut ortho: Vec<DVector<f64>> = Vec::new();
            for (w, h) in &facets {
                if h - x.dot(w) <= 1e-10 * h {
                    let mut r = w.clone();
                    for o in &ortho {
                        r -= o * o.dot(w);
                    }
                    if r.norm() > 1e-9 * w.norm() {
                        ortho.push(r.normalize());
                    }
                }
            }
            if ortho.len() >= n {
                break;
            }
            let project = |v: &DVector<f64>| {
                let mut r = v.clone();
                for o in &ortho {
                    r -= o * o.dot(v);
                }
                r
            };
            let mut d = project(&x);
            if d.norm() <= 1e-12 * (1.0 + x.norm()) {
                // norm is stationary on this face; any direction inside it increases it
                d = (0..n)
                    .map(|k| {
                        let mut e = DVector::zeros(n);
                        e[k] = 1.0;
                        project(&e)
                    })
                    .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                    .expect("dimension is positive");
                if x.dot(&d) < 0.0 {
                    d = -d;
                }
            }
            let step = facets
                .iter()
                .filter_map(|(w, h)| {
                    let rate = d.dot(w);
                    (rate > 1e-15 * d.norm() * w.norm()).then(|| ((h - x.dot(w)) / rate).max(0.0))
                })
                .fold(f64::INFINITY, f64::min);
            if !step.is_finite() {
                break;
            }
            x += d * step;
        }
        x
    }

    fn find_relevant(&self, reach: f64) -> Vec<DVector<f64>> {
        let zero = DVector::zeros(self.dim());
        let mut out: Vec<(Vec<i64>, DVector<f64>)> = Vec::new();
        for (c, _) in self.enumerate(&zero, reach * reach) {
            if c.iter().all(|&x| x == 0) {
                continue;
            }
            let w = self.point(&c);
            let half = &w * 0.5;
            let r2 = half.norm_squared();
            let ties = self
                .enumerate(&half, r2 * (1.0 + 1e-9) + TIE_TOLERANCE)
                .len();
            if ties == 2 {
                out.push((c, w));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out.into_iter().map(|(_, w)| w).collect()
    }
}

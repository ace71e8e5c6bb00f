//! Dimension partitioning and per-sub-space grids.
//!
//! The search grid on the full domain is the cross product of the sub-space
//! grids. It is never materialized: a point of the full grid is addressed by
//! one row index per sub-space and assembled on demand.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BofipError, Result};

/// Closed interval `[lo, hi]` bounding one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Point at fraction `u` of the interval, `u` in `[0, 1]`.
    pub fn lerp(&self, u: f64) -> f64 {
        self.lo + self.width() * u
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(BofipError::config(format!(
                "dimension {dim} has invalid bounds [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Disjoint index sets covering `0..d`, one per sub-space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePartition {
    index_sets: Vec<Vec<usize>>,
    bounds: Vec<Interval>,
}

impl SubspacePartition {
    /// Cuts a uniformly random permutation of the dimensions into `p`
    /// contiguous blocks. Blocks get `ceil(d/p)` or `floor(d/p)` dimensions,
    /// the larger ones first. Indices inside a block are sorted.
    pub fn random<R: Rng + ?Sized>(bounds: Vec<Interval>, p: usize, rng: &mut R) -> Result<Self> {
        let d = bounds.len();
        if p == 0 || p > d {
            return Err(BofipError::config(format!(
                "sub-space count {p} must be in 1..={d}"
            )));
        }
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);

        let (base, extra) = (d / p, d % p);
        let mut index_sets = Vec::with_capacity(p);
        let mut start = 0;
        for i in 0..p {
            let len = base + usize::from(i < extra);
            let mut set = perm[start..start + len].to_vec();
            set.sort_unstable();
            index_sets.push(set);
            start += len;
        }
        Self::from_sets(index_sets, bounds)
    }

    /// Builds a partition from explicit index sets, checking the cover invariants.
    pub fn from_sets(index_sets: Vec<Vec<usize>>, bounds: Vec<Interval>) -> Result<Self> {
        let d = bounds.len();
        if d == 0 {
            return Err(BofipError::config("dimension must be positive"));
        }
        for (k, b) in bounds.iter().enumerate() {
            b.validate(k)?;
        }
        if index_sets.is_empty() || index_sets.len() > d {
            return Err(BofipError::config(format!(
                "sub-space count {} must be in 1..={d}",
                index_sets.len()
            )));
        }
        let mut seen = vec![false; d];
        for (i, set) in index_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(BofipError::config(format!("sub-space {i} is empty")));
            }
            for &k in set {
                if k >= d {
                    return Err(BofipError::config(format!(
                        "sub-space {i} references dimension {k} >= {d}"
                    )));
                }
                if std::mem::replace(&mut seen[k], true) {
                    return Err(BofipError::config(format!(
                        "dimension {k} appears in more than one sub-space"
                    )));
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(BofipError::config(format!(
                "dimension {k} is not covered by any sub-space"
            )));
        }
        Ok(SubspacePartition { index_sets, bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.index_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_sets.is_empty()
    }

    pub fn index_sets(&self) -> &[Vec<usize>] {
        &self.index_sets
    }

    pub fn indices(&self, subspace: usize) -> &[usize] {
        &self.index_sets[subspace]
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn subspace_bounds(&self, subspace: usize) -> impl Iterator<Item = Interval> + '_ {
        self.index_sets[subspace].iter().map(|&k| self.bounds[k])
    }
}

/// How sub-space grid rows are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Lattice for one-dimensional sub-spaces, latin hypercube otherwise.
    #[default]
    Auto,
    UniformLattice,
    LatinHypercube,
}

impl std::str::FromStr for GridScheme {
    type Err = BofipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(GridScheme::Auto),
            "uniform-lattice" | "lattice" => Ok(GridScheme::UniformLattice),
            "latin-hypercube" | "lhs" => Ok(GridScheme::LatinHypercube),
            other => Err(BofipError::config(format!("unknown grid scheme '{other}'"))),
        }
    }
}

/// `n_g` candidate locations of one sub-space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceGrid {
    subspace_id: usize,
    dims: usize,
    points: Vec<f64>,
}

impl SubspaceGrid {
    pub fn build<R: Rng + ?Sized>(
        partition: &SubspacePartition,
        subspace_id: usize,
        n_g: usize,
        scheme: GridScheme,
        rng: &mut R,
    ) -> Result<Self> {
        if n_g < 2 {
            return Err(BofipError::config(format!(
                "grid size {n_g} must be at least 2"
            )));
        }
        if subspace_id >= partition.len() {
            return Err(BofipError::OutOfBounds {
                what: "sub-space",
                index: subspace_id,
                len: partition.len(),
            });
        }
        let bounds: Vec<Interval> = partition.subspace_bounds(subspace_id).collect();
        let dims = bounds.len();
        let scheme = match scheme {
            GridScheme::Auto if dims == 1 => GridScheme::UniformLattice,
            GridScheme::Auto => GridScheme::LatinHypercube,
            s => s,
        };
        let points = match scheme {
            GridScheme::UniformLattice => lattice(&bounds, n_g),
            _ => latin_hypercube(&bounds, n_g, rng),
        };
        Ok(SubspaceGrid {
            subspace_id,
            dims,
            points,
        })
    }

    /// Grid with explicit rows; rows must be unique and share one width.
    pub fn from_rows(subspace_id: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dims == 0 {
            return Err(BofipError::config("grid needs at least one non-empty row"));
        }
        if rows.iter().any(|r| r.len() != dims) {
            return Err(BofipError::config("grid rows have mixed widths"));
        }
        for (a, ra) in rows.iter().enumerate() {
            if rows[..a].iter().any(|rb| rb == ra) {
                return Err(BofipError::Input(format!("grid row {a} is duplicated")));
            }
        }
        Ok(SubspaceGrid {
            subspace_id,
            dims,
            points: rows.concat(),
        })
    }

    pub fn subspace_id(&self) -> usize {
        self.subspace_id
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.points[j * self.dims..(j + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dims)
    }

    /// Row whose coordinates equal `coords` exactly.
    pub fn find_row(&self, coords: &[f64]) -> Option<usize> {
        self.rows().position(|r| r == coords)
    }
}

fn lattice(bounds: &[Interval], n_g: usize) -> Vec<f64> {
    let dims = bounds.len();
    // smallest level count whose full factorial reaches n_g
    let mut levels = 2usize;
    while (levels as u128).pow(dims as u32) < n_g as u128 {
        levels += 1;
    }
    let step = (levels - 1) as f64;
    let mut points = Vec::with_capacity(n_g * dims);
    let mut digits = vec![0usize; dims];
    for _ in 0..n_g {
        for (k, b) in bounds.iter().enumerate() {
            points.push(b.lo + b.width() * digits[k] as f64 / step);
        }
        // odometer, last dimension fastest
        for k in (0..dims).rev() {
            digits[k] += 1;
            if digits[k] < levels {
                break;
            }
            digits[k] = 0;
        }
    }
    points
}

fn latin_hypercube<R: Rng + ?Sized>(bounds: &[Interval], n_g: usize, rng: &mut R) -> Vec<f64> {
    let dims = bounds.len();
    let mut points = vec![0.0; n_g * dims];
    let mut strata: Vec<usize> = (0..n_g).collect();
    for (k, b) in bounds.iter().enumerate() {
        strata.shuffle(rng);
        for (j, &s) in strata.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / n_g as f64;
            points[j * dims + k] = b.lerp(u.min(1.0));
        }
    }
    points
}

/// A point of the implied full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePoint {
    pub indices: Vec<usize>,
    pub coords: Vec<f64>,
}

/// A partition together with one grid per sub-space.
#[derive(Debug, Clone)]
pub struct Domain {
    partition: SubspacePartition,
    grids: Vec<SubspaceGrid>,
}

impl Domain {
    /// Builds one grid of `grid_size` rows per sub-space.
    pub fn build<R: Rng + ?Sized>(
        partition: SubspacePartition,
        grid_size: usize,
        scheme: GridScheme,
        rng: &mut R,
    ) -> Result<Self> {
        let grids = (0..partition.len())
            .map(|i| SubspaceGrid::build(&partition, i, grid_size, scheme, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Domain { partition, grids })
    }

    pub fn from_parts(partition: SubspacePartition, grids: Vec<SubspaceGrid>) -> Result<Self> {
        if grids.len() != partition.len() {
            return Err(BofipError::config(format!(
                "{} grids for {} sub-spaces",
                grids.len(),
                partition.len()
            )));
        }
        for (i, g) in grids.iter().enumerate() {
            if g.dims() != partition.indices(i).len() {
                return Err(BofipError::config(format!(
                    "grid {i} has width {} but sub-space has {} dimensions",
                    g.dims(),
                    partition.indices(i).len()
                )));
            }
            for row in g.rows() {
                if !row
                    .iter()
                    .zip(partition.subspace_bounds(i))
                    .all(|(&v, b)| b.contains(v))
                {
                    return Err(BofipError::config(format!(
                        "grid {i} has a row outside the bounds"
                    )));
                }
            }
        }
        Ok(Domain { partition, grids })
    }

    pub fn partition(&self) -> &SubspacePartition {
        &self.partition
    }

    pub fn grids(&self) -> &[SubspaceGrid] {
        &self.grids
    }

    pub fn grid(&self, i: usize) -> &SubspaceGrid {
        &self.grids[i]
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn subspaces(&self) -> usize {
        self.partition.len()
    }

    /// Number of points in the implied full grid, `None` on overflow.
    pub fn composite_size(&self) -> Option<u128> {
        self.grids
            .iter()
            .try_fold(1u128, |acc, g| acc.checked_mul(g.len() as u128))
    }

    /// Number of stored coordinates, `sum_i n_g^i * d^i`.
    pub fn stored_values(&self) -> usize {
        self.grids.iter().map(|g| g.len() * g.dims()).sum()
    }

    /// Assembles the full-dimensional point selected by one row per sub-space.
    pub fn compose(&self, indices: &[usize]) -> Result<CompositePoint> {
        let mut coords = vec![0.0; self.dim()];
        self.compose_into(indices, &mut coords)?;
        Ok(CompositePoint {
            indices: indices.to_vec(),
            coords,
        })
    }

    pub fn compose_into(&self, indices: &[usize], coords: &mut [f64]) -> Result<()> {
        if indices.len() != self.subspaces() {
            return Err(BofipError::config(format!(
                "{} row indices for {} sub-spaces",
                indices.len(),
                self.subspaces()
            )));
        }
        for (i, &row) in indices.iter().enumerate() {
            let grid = &self.grids[i];
            if row >= grid.len() {
                return Err(BofipError::OutOfBounds {
                    what: "grid row",
                    index: row,
                    len: grid.len(),
                });
            }
            for (&k, &v) in self.partition.indices(i).iter().zip(grid.row(row)) {
                coords[k] = v;
            }
        }
        Ok(())
    }

    /// Inverse of [`compose`](Self::compose): the row per sub-space that
    /// reproduces `coords`, or `None` if the point is not on the grid.
    pub fn decompose(&self, coords: &[f64]) -> Option<Vec<usize>> {
        if coords.len() != self.dim() {
            return None;
        }
        let mut scratch = Vec::new();
        (0..self.subspaces())
            .map(|i| {
                scratch.clear();
                scratch.extend(self.partition.indices(i).iter().map(|&k| coords[k]));
                self.grids[i].find_row(&scratch)
            })
            .collect()
    }
}

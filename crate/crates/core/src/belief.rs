//! Probability vectors over grid cells and the elementary operations on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ZeroMassError;

/// Tolerance on the total mass of a valid [`Belief`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance under which two masses count as tied for MAP extraction.
pub const MAP_TIE_TOLERANCE: f64 = 1e-12;

/// A cell of an `H × W` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub row: usize,
    pub col: usize,
}

impl GridIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Row-major flat index for a grid of the given width.
    pub const fn flatten(self, width: usize) -> usize {
        self.row * width + self.col
    }

    pub const fn unflatten(flat: usize, width: usize) -> Self {
        Self {
            row: flat / width,
            col: flat % width,
        }
    }

    pub fn chebyshev(self, other: GridIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

/// A probability mass function over the cells of a grid, stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    mass: Vec<f64>,
}

impl Belief {
    /// Uniform distribution over `cells` cells.
    pub fn uniform(cells: usize) -> Self {
        assert!(cells > 0, "a belief needs at least one cell");
        Self {
            mass: vec![1.0 / cells as f64; cells],
        }
    }

    /// All mass on a single cell.
    pub fn dirac(cells: usize, at: usize) -> Self {
        assert!(at < cells, "dirac cell {at} outside {cells} cells");
        let mut mass = vec![0.0; cells];
        mass[at] = 1.0;
        Self { mass }
    }

    /// Wraps a vector that is already a probability distribution.
    ///
    /// Returns `None` if any entry is negative or not finite, or the total
    /// deviates from one by more than [`NORMALIZATION_TOLERANCE`].
    pub fn from_probabilities(mass: Vec<f64>) -> Option<Self> {
        if mass.is_empty() || mass.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            return None;
        }
        let total: f64 = mass.iter().sum();
        ((total - 1.0).abs() <= NORMALIZATION_TOLERANCE).then_some(Self { mass })
    }

    pub(crate) fn from_raw_unchecked(mass: Vec<f64>) -> Self {
        Self { mass }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;

    fn index(&self, cell: usize) -> &f64 {
        &self.mass[cell]
    }
}

/// Scales a non-negative vector to unit mass.
pub fn normalize(raw: Vec<f64>) -> Result<Belief, ZeroMassError> {
    debug_assert!(raw.iter().all(|&p| p >= 0.0), "negative mass in {raw:?}");
    let total: f64 = raw.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(ZeroMassError);
    }
    let mut mass = raw;
    for p in &mut mass {
        *p /= total;
    }
    Ok(Belief { mass })
}

/// Shannon entropy in bits. Zero-mass cells contribute nothing.
pub fn entropy(bel: &Belief) -> f64 {
    -bel.mass
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// 1-Wasserstein distance between `bel` and a point mass at `truth` under the
/// Chebyshev ground metric, i.e. the expected Chebyshev distance to `truth`.
pub fn w1_to_dirac(bel: &Belief, width: usize, truth: GridIndex) -> f64 {
    bel.mass
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(flat, &p)| p * GridIndex::unflatten(flat, width).chebyshev(truth) as f64)
        .sum()
}

/// Flat index of a maximum-mass cell. Cells within [`MAP_TIE_TOLERANCE`] of the
/// maximum are tied and one of them is drawn uniformly from `rng`.
///
/// A draw is consumed from `rng` only when there is an actual tie.
pub fn map_estimate_flat<R: Rng + ?Sized>(bel: &Belief, rng: &mut R) -> usize {
    let max = bel.mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = bel
        .mass
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= max - MAP_TIE_TOLERANCE)
        .map(|(i, _)| i)
        .collect();
    match tied.as_slice() {
        [only] => *only,
        _ => tied[rng.gen_range(0..tied.len())],
    }
}

pub fn map_estimate<R: Rng + ?Sized>(bel: &Belief, width: usize, rng: &mut R) -> GridIndex {
    GridIndex::unflatten(map_estimate_flat(bel, rng), width)
}

//! Patch-resolution grids: raw non-negative score maps and normalized
//! attention grids.

use crate::error::{Error, Result};

/// Row-major `rows×cols` grid of scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("grid must have at least one cell"));
        }
        if rows * cols != values.len() {
            return Err(Error::shape(format!(
                "{}x{} grid needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("grid contains non-finite values"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tolerance on `Σ = 1` for [`AttentionGrid`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Non-negative grid that sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGrid(Grid);

impl AttentionGrid {
    /// Scales a non-negative grid so that it sums to one.
    pub fn normalize(grid: Grid) -> Result<Self> {
        if grid.values.iter().any(|v| *v < 0.0) {
            return Err(Error::contract("attention scores must be non-negative"));
        }
        let total = grid.sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("grid has zero total mass".into()));
        }
        let values = grid.values.iter().map(|v| v / total).collect();
        Ok(Self(Grid { values, ..grid }))
    }

    /// Accepts a grid that already satisfies the invariants.
    pub fn from_normalized(grid: Grid) -> Result<Self> {
        if grid.values.iter().any(|v| *v < 0.0) {
            return Err(Error::contract("attention scores must be non-negative"));
        }
        let total = grid.sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::contract(format!("attention grid sums to {}", total)));
        }
        Ok(Self(grid))
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self(Grid::filled(rows, cols, 1.0 / (rows * cols) as f64))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }
}

impl std::ops::Deref for AttentionGrid {
    type Target = Grid;

    fn deref(&self) -> &Grid {
        &self.0
    }
}

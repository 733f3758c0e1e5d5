//! Max-min window selection and patch pasting.
//!
//! A window of `h×w` patches is identified by its center `(i, j)`; its
//! top-left patch is `(i - ⌊h/2⌋, j - ⌊w/2⌋)`. Centers are restricted so the
//! window stays inside the grid, and ties go to the first center in
//! row-major order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::Image;

/// Lower and upper bound of the window-scale draw.
pub const DELTA_RANGE: (f64, f64) = (0.25, 0.75);

/// Window extents for scale `delta`: `⌊δ·H/P⌋ × ⌊δ·W/P⌋`, at least one patch each.
pub fn window_for_delta(delta: f64, height: usize, width: usize, patch: usize) -> (usize, usize) {
    let h = (delta * (height / patch) as f64).floor() as usize;
    let w = (delta * (width / patch) as f64).floor() as usize;
    (h.max(1), w.max(1))
}

/// Draws `δ ~ Uniform(0.25, 0.75)` once and derives `(δ, h, w)` from it.
pub fn sample_window<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    patch: usize,
) -> (f64, usize, usize) {
    let delta = rng.gen_range(DELTA_RANGE.0..DELTA_RANGE.1);
    let (h, w) = window_for_delta(delta, height, width, patch);
    (delta, h, w)
}

/// Inclusive prefix sums over a grid.
#[derive(Clone, Debug)]
pub struct SummedAreaTable {
    rows: usize,
    cols: usize,
    // (rows+1)×(cols+1), zero first row and column
    table: Vec<f64>,
}

impl SummedAreaTable {
    pub fn new(grid: &Grid) -> Self {
        let (rows, cols) = (grid.rows(), grid.cols());
        let stride = cols + 1;
        let mut table = vec![0.0; (rows + 1) * stride];
        for i in 0..rows {
            let mut row_sum = 0.0;
            for j in 0..cols {
                row_sum += grid.get(i, j);
                table[(i + 1) * stride + j + 1] = table[i * stride + j + 1] + row_sum;
            }
        }
        Self { rows, cols, table }
    }

    /// `S[i, j] = Σ_{p ≤ i, q ≤ j} grid[p, q]`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.table[(i + 1) * (self.cols + 1) + j + 1]
    }

    /// Sum over rows `top..top+h` and columns `left..left+w`.
    pub fn rect_sum(&self, top: usize, left: usize, h: usize, w: usize) -> f64 {
        let s = self.cols + 1;
        let (b, r) = (top + h, left + w);
        self.table[b * s + r] - self.table[top * s + r] - self.table[b * s + left]
            + self.table[top * s + left]
    }

    pub fn total(&self) -> f64 {
        self.table[self.rows * (self.cols + 1) + self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

pub fn integral_grid(grid: &Grid) -> SummedAreaTable {
    SummedAreaTable::new(grid)
}

/// Grid position of a window's center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Center {
    pub i: usize,
    pub j: usize,
}

impl Center {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    /// Top-left patch of an `h×w` window centered here.
    pub fn top_left(self, h: usize, w: usize) -> (usize, usize) {
        (self.i - h / 2, self.j - w / 2)
    }
}

fn check_window(rows: usize, cols: usize, h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || h > rows || w > cols {
        return Err(Error::contract(format!(
            "{}x{} window does not fit a {}x{} grid",
            h, w, rows, cols
        )));
    }
    Ok(())
}

/// Whether an `h×w` window centered at `c` lies inside a `rows×cols` grid.
pub fn window_fits(c: Center, h: usize, w: usize, rows: usize, cols: usize) -> bool {
    c.i >= h / 2 && c.j >= w / 2 && c.i - h / 2 + h <= rows && c.j - w / 2 + w <= cols
}

/// Relative margin below which two window sums count as tied.
const TIE_REL: f64 = 1e-12;

fn select_center(grid: &Grid, h: usize, w: usize, maximize: bool) -> Result<Center> {
    check_window(grid.rows(), grid.cols(), h, w)?;
    let sat = SummedAreaTable::new(grid);
    let tol = TIE_REL * sat.total().abs().max(f64::MIN_POSITIVE);
    let mut best = Center::new(h / 2, w / 2);
    let mut best_sum = sat.rect_sum(0, 0, h, w);
    for top in 0..=grid.rows() - h {
        for left in 0..=grid.cols() - w {
            let s = sat.rect_sum(top, left, h, w);
            let better = if maximize {
                s > best_sum + tol
            } else {
                s < best_sum - tol
            };
            if better {
                best_sum = s;
                best = Center::new(top + h / 2, left + w / 2);
            }
        }
    }
    Ok(best)
}

/// Center of the `h×w` window with the largest sum.
pub fn select_max_center(grid: &Grid, h: usize, w: usize) -> Result<Center> {
    select_center(grid, h, w, true)
}

/// Center of the `h×w` window with the smallest sum.
pub fn select_min_center(grid: &Grid, h: usize, w: usize) -> Result<Center> {
    select_center(grid, h, w, false)
}

/// Sum of `grid` over the `h×w` window centered at `c`.
pub fn window_sum(sat: &SummedAreaTable, c: Center, h: usize, w: usize) -> Result<f64> {
    if !window_fits(c, h, w, sat.rows(), sat.cols()) {
        return Err(Error::contract(format!(
            "window {}x{} at ({}, {}) leaves the grid",
            h, w, c.i, c.j
        )));
    }
    let (top, left) = c.top_left(h, w);
    Ok(sat.rect_sum(top, left, h, w))
}

/// Full record of one mix: window scale, both centers and the label ratios.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixPlan {
    pub delta: f64,
    pub h: usize,
    pub w: usize,
    pub source: Center,
    pub target: Center,
    pub lambda_r: f64,
    pub lambda_a: f64,
    pub lambda: f64,
}

impl MixPlan {
    /// Checks window bounds and ratio ranges against a `rows×cols` grid.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        check_window(rows, cols, self.h, self.w)?;
        for c in [self.source, self.target] {
            if !window_fits(c, self.h, self.w, rows, cols) {
                return Err(Error::contract(format!(
                    "window {}x{} at ({}, {}) leaves the {}x{} grid",
                    self.h, self.w, c.i, c.j, rows, cols
                )));
            }
        }
        for (name, v) in [
            ("lambda_r", self.lambda_r),
            ("lambda_a", self.lambda_a),
            ("lambda", self.lambda),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{} = {} outside [0, 1]", name, v)));
            }
        }
        Ok(())
    }
}

/// Binary patch-resolution mask of the pasted window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchMask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl PatchMask {
    pub fn window(rows: usize, cols: usize, c: Center, h: usize, w: usize) -> Self {
        let (top, left) = c.top_left(h, w);
        let mut cells = vec![false; rows * cols];
        for i in top..top + h {
            for j in left..left + w {
                cells[i * cols + j] = true;
            }
        }
        Self { rows, cols, cells }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.cols + j]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Pixel-level mask (`P×P` upsampling), row-major `H×W`.
    pub fn upsample(&self, patch: usize) -> Vec<bool> {
        let width = self.cols * patch;
        let mut out = vec![false; self.rows * patch * width];
        for y in 0..self.rows * patch {
            for x in 0..width {
                out[y * width + x] = self.get(y / patch, x / patch);
            }
        }
        out
    }
}

/// Starts from `x_b` and overwrites the target window with the source window of `x_a`.
pub fn paste(x_a: &Image, x_b: &Image, plan: &MixPlan, patch: usize) -> Result<(Image, PatchMask)> {
    if x_a.dims() != x_b.dims() {
        return Err(Error::shape(format!(
            "cannot mix {:?} with {:?}",
            x_a.dims(),
            x_b.dims()
        )));
    }
    let (height, width, _) = x_a.dims();
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::config("patch does not divide image"));
    }
    let (rows, cols) = (height / patch, width / patch);
    check_window(rows, cols, plan.h, plan.w)?;
    for c in [plan.source, plan.target] {
        if !window_fits(c, plan.h, plan.w, rows, cols) {
            return Err(Error::contract(format!(
                "window {}x{} at ({}, {}) leaves the {}x{} grid",
                plan.h, plan.w, c.i, c.j, rows, cols
            )));
        }
    }
    let (st, sl) = plan.source.top_left(plan.h, plan.w);
    let (tt, tl) = plan.target.top_left(plan.h, plan.w);
    let mut mixed = x_b.clone();
    for p in 0..plan.h {
        for q in 0..plan.w {
            mixed.copy_block(
                x_a,
                (st + p) * patch,
                (sl + q) * patch,
                (tt + p) * patch,
                (tl + q) * patch,
                patch,
            );
        }
    }
    let mask = PatchMask::window(rows, cols, plan.target, plan.h, plan.w);
    Ok((mixed, mask))
}

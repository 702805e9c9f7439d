use serde::{Deserialize, Serialize};

use super::gaussian::HessianCiResult;
use super::table::ci_gap;
use crate::error::{Error, Result};

/// Evenly spaced axis `lo, lo + step, …` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub step: f64,
    pub points: usize,
}

impl GridAxis {
    /// `points` nodes spanning `[lo, hi]` inclusive.
    pub fn span(lo: f64, hi: f64, points: usize) -> Self {
        GridAxis {
            lo,
            step: (hi - lo) / (points - 1) as f64,
            points,
        }
    }

    /// `points` nodes centred on `center` with spacing `step`.
    pub fn centered(center: f64, step: f64, points: usize) -> Self {
        GridAxis {
            lo: center - step * ((points - 1) / 2) as f64,
            step,
            points,
        }
    }

    pub fn node(&self, idx: usize) -> f64 {
        self.lo + self.step * idx as f64
    }
}

/// A (possibly unnormalised) density tabulated on a rectangular grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    axes: Vec<GridAxis>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn from_fn(axes: Vec<GridAxis>, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        if axes.iter().any(|a| a.points < 3 || a.step.is_nan() || a.step <= 0.0) {
            return Err(Error::Configuration("every grid axis needs ≥ 3 points and a positive step".into()));
        }
        let shape: Vec<usize> = axes.iter().map(|a| a.points).collect();
        let cells: usize = shape.iter().product();
        let mut values = Vec::with_capacity(cells);
        let mut index = vec![0usize; axes.len()];
        let mut point = vec![0.0; axes.len()];
        for _ in 0..cells {
            for (d, axis) in axes.iter().enumerate() {
                point[d] = axis.node(index[d]);
            }
            values.push(density(&point));
            for pos in (0..axes.len()).rev() {
                index[pos] += 1;
                if index[pos] < shape[pos] {
                    break;
                }
                index[pos] = 0;
            }
        }
        if let Some(idx) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Configuration(format!("density value at cell {idx} is negative or non-finite")));
        }
        Ok(GridDensity { axes, values })
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.points + i)
    }

    pub fn center(&self) -> Vec<usize> {
        self.axes.iter().map(|a| (a.points - 1) / 2).collect()
    }

    fn log_at(&self, index: &[usize]) -> Result<f64> {
        let v = self.values[self.offset(index)];
        if v <= 0.0 {
            return Err(Error::Support(format!("grid cell {index:?}")));
        }
        Ok(v.ln())
    }

    /// `-∂_a ∂_b ln p` at a grid node by central differences.
    pub fn surprisal_hessian(&self, at: &[usize], a: usize, b: usize) -> Result<f64> {
        if at.len() != self.axes.len() || a >= self.axes.len() || b >= self.axes.len() {
            return Err(Error::Index("grid index or axis out of range".into()));
        }
        for &axis in &[a, b] {
            if at[axis] == 0 || at[axis] + 1 >= self.axes[axis].points {
                return Err(Error::Index(format!("node {at:?} has no neighbours along axis {axis}")));
            }
        }
        let moved = |moves: &[(usize, isize)]| -> Vec<usize> {
            let mut idx = at.to_vec();
            for &(axis, d) in moves {
                idx[axis] = (idx[axis] as isize + d) as usize;
            }
            idx
        };
        let (ha, hb) = (self.axes[a].step, self.axes[b].step);
        let second = if a == b {
            (self.log_at(&moved(&[(a, 1)]))? - 2.0 * self.log_at(at)? + self.log_at(&moved(&[(a, -1)]))?) / (ha * ha)
        } else {
            (self.log_at(&moved(&[(a, 1), (b, 1)]))? - self.log_at(&moved(&[(a, 1), (b, -1)]))?
                - self.log_at(&moved(&[(a, -1), (b, 1)]))?
                + self.log_at(&moved(&[(a, -1), (b, -1)]))?)
                / (4.0 * ha * hb)
        };
        Ok(-second)
    }

    /// `max |p(x | y, z) - p(x | y)|` treating the normalised grid as a pmf.
    pub fn ci_gap(&self, x: &[usize], y: &[usize], z: &[usize]) -> f64 {
        let total: f64 = self.values.iter().sum();
        let pmf: Vec<f64> = self.values.iter().map(|v| v / total).collect();
        ci_gap(&pmf, &self.shape(), x, y, z)
    }
}

/// Hessian/independence comparison for axes `a` and `b` of a grid density.
///
/// The Hessian entry is a finite difference of `-ln p` at `at` (the centre
/// node by default); independence is `a ⊥ b | other axes` on the grid pmf.
pub fn grid_hessian_ci_equivalence(
    density: &GridDensity,
    a: usize,
    b: usize,
    at: Option<&[usize]>,
    tol: f64,
) -> Result<HessianCiResult> {
    if a == b {
        return Err(Error::Configuration("axes must differ".into()));
    }
    let center = density.center();
    let at = at.unwrap_or(&center);
    let hessian_entry = density.surprisal_hessian(at, a, b)?;
    let rest: Vec<usize> = (0..density.axes.len()).filter(|&d| d != a && d != b).collect();
    let gap = density.ci_gap(&[a], &rest, &[b]);
    let hessian_zero = hessian_entry.abs() <= tol;
    let ci_holds = gap <= tol;
    Ok(HessianCiResult {
        hessian_entry,
        hessian_zero,
        ci_gap: gap,
        ci_holds,
        agree: hessian_zero == ci_holds,
    })
}

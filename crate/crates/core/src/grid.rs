//! Spatial grids and grid-sampled fields.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::problem::ControlGrid;

/// Uniform 1-D grid on `[x_lo, x_hi]` with `n >= 3` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_lo: f64,
    x_hi: f64,
    n: usize,
}

impl SpatialGrid {
    pub fn new(x_lo: f64, x_hi: f64, n: usize) -> Result<Self, SolveError> {
        if !(x_lo.is_finite() && x_hi.is_finite() && x_lo < x_hi) {
            return Err(SolveError::input("grid", format!("need finite x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        if n < 3 {
            return Err(SolveError::input("grid", format!("need at least 3 nodes, got {n}")));
        }
        Ok(SpatialGrid { x_lo, x_hi, n })
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.x_hi - self.x_lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_hi
        } else {
            self.x_lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the nearest node; states outside the box map to the end nodes.
    #[inline]
    pub fn nearest(&self, x: f64) -> usize {
        self.locator().nearest(x)
    }

    /// Precomputed form of [`Self::nearest`] for hot loops.
    pub fn locator(&self) -> NodeLocator {
        NodeLocator { x_lo: self.x_lo, inv_h: 1.0 / self.spacing(), last: self.n - 1 }
    }

    /// Cell index `i` and weight `w` with `x ~ (1-w) x_i + w x_{i+1}`,
    /// clamped to the box.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.x_lo) / self.spacing();
        if s <= 0.0 {
            (0, 0.0)
        } else if s >= (self.n - 1) as f64 {
            (self.n - 2, 1.0)
        } else {
            let i = (s.floor() as usize).min(self.n - 2);
            (i, s - i as f64)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.x_lo <= x && x <= self.x_hi
    }

    /// True when node `i` lies within one spacing of some breakpoint.
    pub fn near_breakpoint(&self, i: usize, breakpoints: &[f64]) -> bool {
        let x = self.node(i);
        let h = self.spacing() * (1.0 + 1e-9);
        breakpoints.iter().any(|b| (x - b).abs() <= h)
    }
}

/// Value function sampled at the nodes of a grid.
/// Nearest-node lookup on a uniform grid.
#[derive(Clone, Copy, Debug)]
pub struct NodeLocator {
    x_lo: f64,
    inv_h: f64,
    last: usize,
}

impl NodeLocator {
    #[inline]
    pub fn nearest(&self, x: f64) -> usize {
        let s = (x - self.x_lo) * self.inv_h;
        if !(s > 0.0) {
            return 0;
        }
        // truncation of s + 1/2 rounds half up for s > 0 and saturates
        ((s + 0.5) as usize).min(self.last)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl ValueField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self, SolveError> {
        if values.len() != grid.len() {
            return Err(SolveError::input("values", format!("expected {} values, got {}", grid.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SolveError::input("values", format!("non-finite value at node {i}")));
        }
        Ok(ValueField { grid, values })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Result<Self, SolveError> {
        ValueField::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Result<Self, SolveError> {
        ValueField::new(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The field shifted by a constant.
    pub fn shifted(&self, c: f64) -> ValueField {
        ValueField { grid: self.grid, values: self.values.iter().map(|v| v + c).collect() }
    }

    /// First derivative: central differences inside, one-sided at the ends.
    pub fn dv(&self, i: usize) -> f64 {
        let v = &self.values;
        let h = self.grid.spacing();
        let n = v.len();
        if i == 0 {
            (v[1] - v[0]) / h
        } else if i == n - 1 {
            (v[n - 1] - v[n - 2]) / h
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        }
    }

    /// Second derivative: central differences inside, copied from the
    /// neighbouring interior node at the ends.
    pub fn d2v(&self, i: usize) -> f64 {
        let n = self.values.len();
        let j = i.clamp(1, n - 2);
        let v = &self.values;
        let h = self.grid.spacing();
        (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ValueField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Linear interpolation, clamped to the end values outside the box.
    pub fn interpolate(&self, x: f64) -> f64 {
        let (i, w) = self.grid.locate(x);
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    /// Node arrays of `v`, `Dv`, `D^2 v` for repeated interpolation.
    pub fn derivatives(&self) -> FieldDerivatives {
        let n = self.values.len();
        FieldDerivatives {
            grid: self.grid,
            v: self.values.clone(),
            dv: (0..n).map(|i| self.dv(i)).collect(),
            d2v: (0..n).map(|i| self.d2v(i)).collect(),
        }
    }
}

/// Precomputed `v`, `Dv`, `D^2 v` at the grid nodes.
#[derive(Clone, Debug)]
pub struct FieldDerivatives {
    grid: SpatialGrid,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub d2v: Vec<f64>,
}

impl FieldDerivatives {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Linearly interpolated `(v, Dv, D^2 v)` at `x`, clamped to the box.
    #[inline]
    pub fn at(&self, x: f64) -> (f64, f64, f64) {
        let (i, w) = self.grid.locate(x);
        let lerp = |a: &[f64]| (1.0 - w) * a[i] + w * a[i + 1];
        (lerp(&self.v), lerp(&self.dv), lerp(&self.d2v))
    }
}

/// Piecewise-constant feedback law: control index per node, looked up at
/// the nearest node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    grid: SpatialGrid,
    controls: ControlGrid,
    indices: Vec<usize>,
}

impl FeedbackPolicy {
    pub fn new(grid: SpatialGrid, controls: ControlGrid, indices: Vec<usize>) -> Result<Self, SolveError> {
        if indices.len() != grid.len() {
            return Err(SolveError::input("policy", format!("expected {} indices, got {}", grid.len(), indices.len())));
        }
        if let Some(i) = indices.iter().position(|&j| j >= controls.len()) {
            return Err(SolveError::input("policy", format!("control index out of range at node {i}")));
        }
        Ok(FeedbackPolicy { grid, controls, indices })
    }

    pub fn constant(grid: SpatialGrid, controls: ControlGrid, index: usize) -> Result<Self, SolveError> {
        FeedbackPolicy::new(grid, controls, vec![index; grid.len()])
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn controls(&self) -> &ControlGrid {
        &self.controls
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn control_at_node(&self, i: usize) -> f64 {
        self.controls.get(self.indices[i])
    }

    /// `psi(x)`: control of the nearest node, total on the real line.
    #[inline]
    pub fn lookup(&self, x: f64) -> f64 {
        self.control_at_node(self.grid.nearest(x))
    }
}

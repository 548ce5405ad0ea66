//! Node-centred box grids, nodal fields and the finite-difference operators
//! shared by every solver.
//!
//! The lattice includes the boundary nodes, `h_i = L_i / (n_i - 1)`, and
//! storage is flat with axis 0 varying fastest. Homogeneous Neumann data is
//! realised by even reflection across the boundary nodes; every operator is
//! paired with its adjoint under the trapezoidal inner product
//! `<f, g> = sum_i w_i f_i g_i`.

mod field;
mod helmholtz;
mod ops;
mod stencil;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use field::{ScalarField, VectorField};
pub use helmholtz::NeumannHelmholtz;
pub use ops::{
    advect, advect_adjoint, divergence, divergence_adjoint, flux_divergence,
    flux_divergence_adjoint, gradient, gradient_adjoint, integrate, laplacian_neumann, norm,
    FieldNorm, NormKind,
};

/// Default cap on the total node count of a grid.
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

/// Minimum node count per axis.
pub const MIN_NODES_PER_AXIS: usize = 4;

/// Axis-aligned box `prod [0, L_i]` sampled at `n_i` nodes per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a shared grid with the default node cap.
    pub fn new(extents: &[f64], nodes: &[usize]) -> Result<Arc<Grid>> {
        Self::with_cap(extents, nodes, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(extents: &[f64], nodes: &[usize], cap: usize) -> Result<Arc<Grid>> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if nodes.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "{} node counts for {dim} extents",
                nodes.len()
            )));
        }
        for (axis, (&l, &n)) in extents.iter().zip(nodes).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("extent {l} on axis {axis}")));
            }
            if n < MIN_NODES_PER_AXIS {
                return Err(Error::InvalidGrid(format!(
                    "{n} nodes on axis {axis}, need at least {MIN_NODES_PER_AXIS}"
                )));
            }
        }
        let total = nodes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidGrid("node count overflows".into()))?;
        if total > cap {
            return Err(Error::InvalidGrid(format!(
                "{total} nodes exceed the cap of {cap}"
            )));
        }

        let spacing: Vec<f64> = extents
            .iter()
            .zip(nodes)
            .map(|(&l, &n)| l / (n - 1) as f64)
            .collect();
        let mut strides = Vec::with_capacity(dim);
        let mut s = 1;
        for &n in nodes {
            strides.push(s);
            s *= n;
        }

        let mut grid = Grid {
            extents: extents.to_vec(),
            nodes: nodes.to_vec(),
            spacing,
            strides,
            weights: Vec::new(),
        };
        let axis_w: Vec<Vec<f64>> = (0..dim).map(|a| grid.axis_weights(a)).collect();
        grid.weights = (0..total)
            .map(|idx| {
                let c = grid.coords(idx);
                (0..dim).map(|a| axis_w[a][c[a]]).product()
            })
            .collect();
        Ok(Arc::new(grid))
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Measure of the box, `|Omega|`.
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoidal quadrature weights, one per node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// One-dimensional trapezoidal weights along `axis`.
    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        let n = self.nodes[axis];
        let h = self.spacing[axis];
        (0..n)
            .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
            .collect()
    }

    /// Multi-index of a flat node index; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for (a, (&s, &n)) in self.strides.iter().zip(&self.nodes).enumerate() {
            c[a] = (idx / s) % n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Physical position of a node; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = c[a] as f64 * self.spacing[a];
        }
        x
    }

    /// Whether the node lies on a face normal to `axis`.
    pub fn on_face(&self, idx: usize, axis: usize) -> bool {
        let c = (idx / self.strides[axis]) % self.nodes[axis];
        c == 0 || c == self.nodes[axis] - 1
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        (0..self.dim()).any(|a| self.on_face(idx, a))
    }

    /// Flat indices of the first node of every grid line along `axis`.
    pub fn line_starts(&self, axis: usize) -> Vec<usize> {
        let s = self.strides[axis];
        let n = self.nodes[axis];
        (0..self.len()).filter(|&i| (i / s) % n == 0).collect()
    }

    /// Same lattice (extents and node counts) as `other`.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || (self.nodes == other.nodes && self.extents == other.extents)
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("zero time steps".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Time of node `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

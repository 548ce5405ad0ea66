use std::sync::Arc;

use super::Grid;
use crate::error::{Error, Result};

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                f(&x[..d])
            })
            .collect();
        ScalarField {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("value count differs from node count"));
        }
        Ok(ScalarField {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.grid.same_as(&other.grid)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert!(self.same_grid(other));
        ScalarField {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert!(self.same_grid(x));
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    /// Quadrature inner product `sum_i w_i f_i g_i`.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        debug_assert!(self.same_grid(other));
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

/// `d` scalar components on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: &[f64]) -> Result<Self> {
        if c.len() != grid.dim() {
            return Err(Error::GridMismatch("vector constant has wrong dimension"));
        }
        Ok(VectorField {
            components: c.iter().map(|&ci| ScalarField::constant(grid, ci)).collect(),
        })
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or(Error::GridMismatch("vector field needs components"))?;
        let grid = Arc::clone(first.grid());
        if components.len() != grid.dim() {
            return Err(Error::GridMismatch("component count differs from dimension"));
        }
        if components.iter().any(|c| !c.grid().same_as(&grid)) {
            return Err(Error::GridMismatch("components on different grids"));
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(ScalarField::is_finite)
    }

    pub fn same_grid(&self, other: &VectorField) -> bool {
        self.grid().same_as(other.grid())
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn lin_comb(&self, a: f64, other: &VectorField, b: f64) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| x.lin_comb(a, y, b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        for (s, c) in self.components.iter_mut().zip(&x.components) {
            s.axpy(a, c);
        }
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        self.map_components(|c| c.scaled(a))
    }

    /// Each component multiplied pointwise by `s`.
    pub fn scale_by(&self, s: &ScalarField) -> VectorField {
        self.map_components(|c| c.mul(s))
    }

    /// Pointwise dot product with another vector field.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid());
        for (a, b) in self.components.iter().zip(&other.components) {
            for ((o, &x), &y) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
                *o += x * y;
            }
        }
        out
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        self.dot(self).map(f64::sqrt)
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(ScalarField::max_abs)
            .fold(0.0, f64::max)
    }

    /// Sets every component to zero on all boundary nodes.
    pub fn zero_boundary(&mut self) {
        let grid = Arc::clone(self.grid());
        for c in &mut self.components {
            for (i, v) in c.values_mut().iter_mut().enumerate() {
                if grid.on_boundary(i) {
                    *v = 0.0;
                }
            }
        }
    }

    /// Sets component `a` to zero on the faces normal to axis `a`.
    pub fn zero_normal_boundary(&mut self) {
        let grid = Arc::clone(self.grid());
        for (a, c) in self.components.iter_mut().enumerate() {
            for (i, v) in c.values_mut().iter_mut().enumerate() {
                if grid.on_face(i, a) {
                    *v = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_uses_trapezoid_weights() {
        let g = Grid::new(&[1.0, 1.0], &[5, 5]).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert!((one.inner(&one) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vector_components_share_grid() {
        let g1 = Grid::new(&[1.0, 1.0], &[5, 5]).unwrap();
        let g2 = Grid::new(&[1.0, 1.0], &[6, 5]).unwrap();
        let r = VectorField::from_components(vec![ScalarField::zeros(&g1), ScalarField::zeros(&g2)]);
        assert!(r.is_err());
    }

    #[test]
    fn normal_boundary_zeroing_keeps_tangential() {
        let g = Grid::new(&[1.0, 1.0], &[4, 4]).unwrap();
        let mut v = VectorField::constant(&g, &[1.0, 1.0]).unwrap();
        v.zero_normal_boundary();
        // node (0, 1) lies on an x-face only
        let i = g.index(&[0, 1]);
        assert_eq!(v.component(0).values()[i], 0.0);
        assert_eq!(v.component(1).values()[i], 1.0);
    }
}

use super::stencil::Stencil1d;
use super::{ScalarField, VectorField};
use crate::error::{Error, Result};

/// Nodal gradient: central differences inside, second-order one-sided on
/// the boundary nodes.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let comps = (0..grid.dim())
        .map(|a| {
            let st = Stencil1d::gradient(grid.nodes()[a], grid.spacing()[a]);
            let mut out = ScalarField::zeros(grid);
            st.apply_along(grid, a, f.values(), out.values_mut(), false);
            out
        })
        .collect();
    VectorField::from_components(comps).expect("components built on one grid")
}

/// Sum of per-component differences; boundary nodes use the half-cell
/// difference so that `integrate(divergence(g))` equals the net boundary flux.
pub fn divergence(g: &VectorField) -> ScalarField {
    let grid = g.grid();
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim() {
        let st = Stencil1d::divergence(grid.nodes()[a], grid.spacing()[a]);
        st.apply_along(grid, a, g.component(a).values(), out.values_mut(), true);
    }
    out
}

/// Divergence of a flux whose normal component is forced to vanish on the
/// boundary (no-flux closure). Integrates to zero exactly.
pub fn flux_divergence(g: &VectorField) -> ScalarField {
    let mut flux = g.clone();
    flux.zero_normal_boundary();
    divergence(&flux)
}

/// Neumann Laplacian with even-reflection ghost nodes.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim() {
        let st = Stencil1d::laplacian(grid.nodes()[a], grid.spacing()[a]);
        st.apply_along(grid, a, f.values(), out.values_mut(), true);
    }
    out
}

/// Trapezoidal quadrature over the box.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid()
        .weights()
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v)
        .sum()
}

/// `v . grad(f)` pointwise.
pub fn advect(v: &VectorField, f: &ScalarField) -> Result<ScalarField> {
    if !v.grid().same_as(f.grid()) {
        return Err(Error::GridMismatch("advect: velocity and field grids differ"));
    }
    Ok(v.dot(&gradient(f)))
}

/// Adjoint of [`gradient`] under the quadrature inner product.
pub fn gradient_adjoint(g: &VectorField) -> ScalarField {
    let grid = g.grid();
    let mut out = ScalarField::zeros(grid);
    for a in 0..grid.dim() {
        let st = Stencil1d::gradient(grid.nodes()[a], grid.spacing()[a])
            .weighted_adjoint(&grid.axis_weights(a));
        st.apply_along(grid, a, g.component(a).values(), out.values_mut(), true);
    }
    out
}

/// Adjoint of [`divergence`] under the quadrature inner product.
pub fn divergence_adjoint(q: &ScalarField) -> VectorField {
    let grid = q.grid();
    let comps = (0..grid.dim())
        .map(|a| {
            let st = Stencil1d::divergence(grid.nodes()[a], grid.spacing()[a])
                .weighted_adjoint(&grid.axis_weights(a));
            let mut out = ScalarField::zeros(grid);
            st.apply_along(grid, a, q.values(), out.values_mut(), false);
            out
        })
        .collect();
    VectorField::from_components(comps).expect("components built on one grid")
}

/// Adjoint of [`flux_divergence`].
pub fn flux_divergence_adjoint(q: &ScalarField) -> VectorField {
    let mut out = divergence_adjoint(q);
    out.zero_normal_boundary();
    out
}

/// Adjoint of `f -> v . grad(f)` applied to `q`.
pub fn advect_adjoint(v: &VectorField, q: &ScalarField) -> Result<ScalarField> {
    if !v.grid().same_as(q.grid()) {
        return Err(Error::GridMismatch("advect_adjoint: grids differ"));
    }
    Ok(gradient_adjoint(&v.scale_by(q)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    Linf,
    L3,
}

/// Quadrature norms of scalar and vector fields.
pub trait FieldNorm {
    fn norm(&self, kind: NormKind) -> f64;
}

impl FieldNorm for ScalarField {
    fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.inner(self).sqrt(),
            NormKind::Linf => self.max_abs(),
            NormKind::L3 => integrate(&self.map(|v| v.abs().powi(3))).cbrt(),
            NormKind::H1 => {
                let g = gradient(self);
                (self.inner(self) + g.inner(&g)).sqrt()
            }
        }
    }
}

impl FieldNorm for VectorField {
    fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.inner(self).sqrt(),
            NormKind::Linf => self.magnitude().max(),
            NormKind::L3 => integrate(&self.magnitude().map(|v| v.powi(3))).cbrt(),
            NormKind::H1 => {
                let grad_sq: f64 = self
                    .components()
                    .iter()
                    .map(|c| {
                        let g = gradient(c);
                        g.inner(&g)
                    })
                    .sum();
                (self.inner(self) + grad_sq).sqrt()
            }
        }
    }
}

pub fn norm<F: FieldNorm + ?Sized>(f: &F, kind: NormKind) -> f64 {
    f.norm(kind)
}

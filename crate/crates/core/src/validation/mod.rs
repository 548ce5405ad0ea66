//! Reference implementations used to check the fast solvers.
//!
//! Dense operators are assembled entry by entry from the stencil formulas
//! and the kernel function itself; nothing here calls the stencil tables,
//! the kernel lattice or the spectral Helmholtz solver.

mod suite;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{gradient, Grid, ScalarField, VectorField};
use crate::kernel::Kernel;
use crate::state::{ControlTrajectory, MaterialLaw};

pub use suite::{run_suite, CheckResult, SuiteOptions};

/// Node budget of the O(N^2) oracles.
pub const DENSE_NODE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub label: String,
    pub matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.len() != self.matrix.ncols() {
            return Err(Error::Validation(format!("{}: size mismatch", self.label)));
        }
        let out = &self.matrix * DVector::from_column_slice(f.values());
        ScalarField::from_values(f.grid(), out.as_slice().to_vec())
    }

    /// Adjoint under the trapezoid-weighted inner product, `W^-1 M^T W`.
    pub fn weighted_transpose(&self, grid: &Grid) -> DenseOperator {
        let w = grid.weights();
        let mut m = self.matrix.transpose();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] *= w[j] / w[i];
            }
        }
        DenseOperator {
            label: format!("{}*", self.label),
            matrix: m,
        }
    }
}

fn guard(grid: &Grid) -> Result<()> {
    if grid.len() > DENSE_NODE_LIMIT {
        return Err(Error::Validation(format!(
            "dense oracle limited to {DENSE_NODE_LIMIT} nodes, grid has {}",
            grid.len()
        )));
    }
    Ok(())
}

/// Node index shifted by `delta` along `axis`.
fn shifted(grid: &Grid, idx: usize, axis: usize, delta: isize) -> usize {
    (idx as isize + delta * grid.strides()[axis] as isize) as usize
}

fn assemble(grid: &Grid, label: &str, row: impl Fn(usize, &mut Vec<(usize, f64)>)) -> DenseOperator {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    let mut entries = Vec::new();
    for i in 0..n {
        entries.clear();
        row(i, &mut entries);
        for &(j, c) in &entries {
            m[(i, j)] += c;
        }
    }
    DenseOperator {
        label: label.to_string(),
        matrix: m,
    }
}

/// Partial derivative along `axis`: central inside, second-order one-sided
/// at the two end nodes.
pub fn dense_gradient(grid: &Grid, axis: usize) -> Result<DenseOperator> {
    guard(grid)?;
    let n = grid.nodes()[axis];
    let h = grid.spacing()[axis];
    Ok(assemble(grid, &format!("d/dx{axis}"), |i, e| {
        let k = grid.coords(i)[axis];
        let at = |d: isize| shifted(grid, i, axis, d);
        if k == 0 {
            e.extend([(at(0), -1.5 / h), (at(1), 2.0 / h), (at(2), -0.5 / h)]);
        } else if k == n - 1 {
            e.extend([(at(0), 1.5 / h), (at(-1), -2.0 / h), (at(-2), 0.5 / h)]);
        } else {
            e.extend([(at(1), 0.5 / h), (at(-1), -0.5 / h)]);
        }
    }))
}

/// One axis of the divergence: central inside, half-cell differences at the
/// ends. With `flux` set the values on the two faces normal to `axis` are
/// treated as zero.
pub fn dense_divergence(grid: &Grid, axis: usize, flux: bool) -> Result<DenseOperator> {
    guard(grid)?;
    let n = grid.nodes()[axis];
    let h = grid.spacing()[axis];
    Ok(assemble(grid, &format!("div{axis}"), |i, e| {
        let k = grid.coords(i)[axis];
        let at = |d: isize| shifted(grid, i, axis, d);
        let mut push = |j: usize, c: f64| {
            let kj = grid.coords(j)[axis];
            if !(flux && (kj == 0 || kj == n - 1)) {
                e.push((j, c));
            }
        };
        if k == 0 {
            push(at(1), 1.0 / h);
            push(at(0), -1.0 / h);
        } else if k == n - 1 {
            push(at(0), 1.0 / h);
            push(at(-1), -1.0 / h);
        } else {
            push(at(1), 0.5 / h);
            push(at(-1), -0.5 / h);
        }
    }))
}

/// Neumann Laplacian by even reflection of ghost nodes.
pub fn dense_laplacian(grid: &Grid) -> Result<DenseOperator> {
    guard(grid)?;
    Ok(assemble(grid, "laplacian", |i, e| {
        for axis in 0..grid.dim() {
            let n = grid.nodes()[axis];
            let h2 = grid.spacing()[axis].powi(2);
            let k = grid.coords(i)[axis];
            let at = |d: isize| shifted(grid, i, axis, d);
            let left = if k == 0 { at(1) } else { at(-1) };
            let right = if k == n - 1 { at(-1) } else { at(1) };
            e.extend([(left, 1.0 / h2), (right, 1.0 / h2), (i, -2.0 / h2)]);
        }
    }))
}

/// `C_ij = w_j k(|x_i - x_j|)` with the self-interaction from the kernel's
/// cell value.
pub fn dense_convolution_operator(kernel: &Kernel) -> Result<DenseOperator> {
    let grid = kernel.grid();
    guard(grid)?;
    let spec = kernel.spec();
    let diag = spec.self_value(grid.spacing());
    let w = grid.weights();
    Ok(assemble(grid, "convolution", |i, e| {
        let xi = grid.position(i);
        for j in 0..grid.len() {
            let k = if i == j {
                diag
            } else {
                let xj = grid.position(j);
                let r = (0..grid.dim()).map(|a| (xi[a] - xj[a]).powi(2)).sum::<f64>().sqrt();
                spec.eval(r)
            };
            e.push((j, w[j] * k));
        }
    }))
}

/// Direct quadrature `sum_j w_j k(|x_i - x_j|) z_j`.
pub fn dense_convolution(kernel: &Kernel, z: &ScalarField) -> Result<ScalarField> {
    if !z.grid().same_as(kernel.grid()) {
        return Err(Error::GridMismatch("dense convolution"));
    }
    guard(z.grid())?;
    let grid = z.grid();
    let spec = kernel.spec();
    let diag = spec.self_value(grid.spacing());
    let w = grid.weights();
    let vals = (0..grid.len())
        .map(|i| {
            let xi = grid.position(i);
            let mut acc = 0.0;
            for j in 0..grid.len() {
                let k = if i == j {
                    diag
                } else {
                    let xj = grid.position(j);
                    let r = (0..grid.dim()).map(|a| (xi[a] - xj[a]).powi(2)).sum::<f64>().sqrt();
                    spec.eval(r)
                };
                acc += w[j] * k * z.values()[j];
            }
            acc
        })
        .collect();
    ScalarField::from_values(grid, vals)
}

fn diag(f: &ScalarField) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(f.values()))
}

fn col(f: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

/// Dense versions of the three time steppers for one grid, kernel and `dt`.
pub struct DenseStepper {
    grid: Arc<Grid>,
    law: MaterialLaw,
    dt: f64,
    grad: Vec<DMatrix<f64>>,
    flux_div: Vec<DMatrix<f64>>,
    conv: DMatrix<f64>,
    helmholtz: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseStepper {
    pub fn new(kernel: &Kernel, law: MaterialLaw, dt: f64) -> Result<Self> {
        let grid = kernel.grid().clone();
        guard(&grid)?;
        let d = grid.dim();
        let grad = (0..d)
            .map(|a| dense_gradient(&grid, a).map(|o| o.matrix))
            .collect::<Result<Vec<_>>>()?;
        let flux_div = (0..d)
            .map(|a| dense_divergence(&grid, a, true).map(|o| o.matrix))
            .collect::<Result<Vec<_>>>()?;
        let lap = dense_laplacian(&grid)?.matrix;
        let n = grid.len();
        let h = DMatrix::identity(n, n) - lap * (dt * law.c0);
        Ok(DenseStepper {
            conv: dense_convolution_operator(kernel)?.matrix,
            grid,
            law,
            dt,
            grad,
            flux_div,
            helmholtz: h.lu(),
        })
    }

    fn solve(&self, rhs: DVector<f64>) -> Result<ScalarField> {
        let x = self
            .helmholtz
            .solve(&rhs)
            .ok_or_else(|| Error::Validation("singular Helmholtz matrix".into()))?;
        ScalarField::from_values(&self.grid, x.as_slice().to_vec())
    }

    fn nonlocal_potential(&self, phi: &ScalarField) -> DVector<f64> {
        &self.conv * col(&phi.map(|p| 1.0 - 2.0 * p))
    }

    /// `(I + dt A)` of the linearized step for background `(phi, v)`.
    fn explicit_linear(&self, phi: &ScalarField, v: &VectorField) -> DMatrix<f64> {
        let n = self.grid.len();
        let law = self.law;
        let w = self.nonlocal_potential(phi);
        let m = diag(&phi.map(|s| law.mobility(s)));
        let dm = phi.map(|s| law.mobility_prime(s));
        let mut a = DMatrix::zeros(n, n);
        for ax in 0..self.grid.dim() {
            let dw = &self.grad[ax] * &w;
            let coef = DMatrix::from_diagonal(&dw.component_mul(&col(&dm)));
            a += &self.flux_div[ax] * coef;
            a -= &self.flux_div[ax] * &m * &self.grad[ax] * &self.conv * 2.0;
            a -= diag(v.component(ax)) * &self.grad[ax];
        }
        DMatrix::identity(n, n) + a * self.dt
    }

    pub fn state_step(&self, phi: &ScalarField, v: &VectorField) -> Result<ScalarField> {
        let law = self.law;
        let w = self.nonlocal_potential(phi);
        let m = col(&phi.map(|s| law.mobility(s)));
        let p = col(phi);
        let mut rhs = p.clone();
        for ax in 0..self.grid.dim() {
            let flux = (&self.grad[ax] * &w).component_mul(&m);
            rhs += (&self.flux_div[ax] * flux) * self.dt;
            rhs -= (&self.grad[ax] * &p).component_mul(&col(v.component(ax))) * self.dt;
        }
        self.solve(rhs)
    }

    /// Homogeneous linearized step `H^-1 (I + dt A)` as a matrix.
    pub fn linearized_matrix(&self, phi: &ScalarField, v: &VectorField) -> Result<DMatrix<f64>> {
        let e = self.explicit_linear(phi, v);
        self.helmholtz
            .solve(&e)
            .ok_or_else(|| Error::Validation("singular Helmholtz matrix".into()))
    }

    pub fn linearized_step(
        &self,
        xi: &ScalarField,
        phi: &ScalarField,
        v: &VectorField,
        h: &VectorField,
    ) -> Result<ScalarField> {
        let mut rhs = self.explicit_linear(phi, v) * col(xi);
        for ax in 0..self.grid.dim() {
            rhs -= (&self.grad[ax] * col(phi)).component_mul(&col(h.component(ax))) * self.dt;
        }
        self.solve(rhs)
    }

    /// Homogeneous adjoint step, the weighted transpose `W^-1 L^T W` of
    /// [`Self::linearized_matrix`].
    pub fn adjoint_matrix(&self, phi: &ScalarField, v: &VectorField) -> Result<DMatrix<f64>> {
        let l = DenseOperator {
            label: "linearized".into(),
            matrix: self.linearized_matrix(phi, v)?,
        };
        Ok(l.weighted_transpose(&self.grid).matrix)
    }

    pub fn adjoint_step(
        &self,
        p_next: &ScalarField,
        phi: &ScalarField,
        v: &VectorField,
        source: &ScalarField,
    ) -> Result<ScalarField> {
        let out = self.adjoint_matrix(phi, v)? * col(p_next) + col(source) * self.dt;
        ScalarField::from_values(&self.grid, out.as_slice().to_vec())
    }
}

/// Matrix of a linear map on nodal fields, one unit vector per column.
pub fn matrix_of(grid: &Arc<Grid>, f: impl Fn(&ScalarField) -> Result<ScalarField>) -> Result<DMatrix<f64>> {
    guard(grid)?;
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = ScalarField::zeros(grid);
    for j in 0..n {
        e.values_mut()[j] = 1.0;
        let c = f(&e)?;
        e.values_mut()[j] = 0.0;
        for (i, &x) in c.values().iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    Ok(m)
}

/// `(J(v + eps h) - J(v - eps h)) / (2 eps)`.
pub fn fd_directional(
    j: impl Fn(&ControlTrajectory) -> Result<f64>,
    v: &ControlTrajectory,
    h: &ControlTrajectory,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {eps}")));
    }
    let plus = j(&v.lin_comb(1.0, h, eps))?;
    let minus = j(&v.lin_comb(1.0, h, -eps))?;
    Ok((plus - minus) / (2.0 * eps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    /// Root-mean-square deviation from the fitted line in log space.
    pub residual: f64,
}

/// Least-squares slope of `log(error)` against `log(scale)`.
pub fn order_fit(points: &[(f64, f64)]) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(Error::Validation(format!("order fit needs 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(s, e)| !(s > 0.0 && e > 0.0 && e.is_finite())) {
        return Err(Error::Validation("order fit needs positive scales and errors".into()));
    }
    if points.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::Validation("order fit scales must strictly decrease".into()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(OrderFit {
        points: points.to_vec(),
        slope,
        residual,
    })
}

/// Divergence-free field from potentials: `(d2 psi, -d1 psi)` in 2D, the
/// curl of `(A1, A2, A3)` in 3D. Discretely divergence-free when the
/// potentials vanish within three nodes of the boundary.
pub fn curl_field(potentials: &[ScalarField]) -> Result<VectorField> {
    let grid = potentials
        .first()
        .ok_or_else(|| Error::InvalidParameter("no potentials".into()))?
        .grid()
        .clone();
    match (grid.dim(), potentials.len()) {
        (2, 1) => {
            let g = gradient(&potentials[0]);
            VectorField::from_components(vec![g.component(1).clone(), g.component(0).scaled(-1.0)])
        }
        (3, 3) => {
            let g: Vec<VectorField> = potentials.iter().map(gradient).collect();
            let c = |a: usize, b: usize, i: usize, j: usize| g[a].component(i).sub(g[b].component(j));
            VectorField::from_components(vec![c(2, 1, 1, 2), c(0, 2, 2, 0), c(1, 0, 0, 1)])
        }
        (d, k) => Err(Error::InvalidParameter(format!(
            "curl needs 1 potential in 2D or 3 in 3D, got {k} in {d}D"
        ))),
    }
}

/// Window equal to zero within `margin` nodes of every face and smooth inside.
pub fn interior_window(grid: &Arc<Grid>, margin: usize) -> ScalarField {
    let grid = grid.clone();
    ScalarField::from_fn(&grid, |x| {
        (0..grid.dim())
            .map(|a| {
                let pad = margin as f64 * grid.spacing()[a];
                let s = (x[a] - pad) / (grid.extents()[a] - 2.0 * pad);
                if (0.0..=1.0).contains(&s) {
                    (std::f64::consts::PI * s).sin().powi(3)
                } else {
                    0.0
                }
            })
            .product()
    })
}

/// Random smooth field: a few random Fourier modes.
pub fn random_smooth(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, modes: usize) -> ScalarField {
    let d = grid.dim();
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..modes)
        .map(|_| {
            let k = (0..d)
                .map(|a| rng.gen_range(0..4) as f64 * std::f64::consts::PI / grid.extents()[a])
                .collect();
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, ph, c)| c * ((0..d).map(|a| k[a] * x[a]).sum::<f64>() + ph).cos())
            .sum()
    })
}

/// Random divergence-free, boundary-vanishing field with `max |v| = amp`.
pub fn random_solenoidal(grid: &Arc<Grid>, amp: f64, seed: u64) -> Result<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = interior_window(grid, 3);
    let count = if grid.dim() == 2 { 1 } else { 3 };
    let pots: Vec<ScalarField> = (0..count)
        .map(|_| random_smooth(grid, &mut rng, 4).mul(&window))
        .collect();
    let v = curl_field(&pots)?;
    let peak = v.max_abs();
    Ok(if peak > 0.0 { v.scaled(amp / peak) } else { v })
}

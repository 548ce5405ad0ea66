//! Nonlocal interaction operator.
//!
//! `apply_conv(z)(x_i) = sum_j w_j k(|x_i - x_j|) z_j` is a linear (not
//! circular) convolution over the box, evaluated with zero-padded FFTs. The
//! kernel is tabulated on the displacement lattice `(2 n_i - 1)` per axis.

mod local_limit;
mod spec;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, Grid, ScalarField, VectorField};

pub use local_limit::{local_limit_energy, sigma_constant};
pub use spec::KernelSpec;

/// A kernel tabulated on a grid, ready for fast convolution.
pub struct Kernel {
    spec: KernelSpec,
    grid: Arc<Grid>,
    table: Vec<f64>,
    table_dims: Vec<usize>,
    fft_dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    spectrum: Vec<Complex64>,
    k0: f64,
    kbar: f64,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("spec", &self.spec)
            .field("nodes", &self.grid.nodes())
            .field("k0", &self.k0)
            .field("kbar", &self.kbar)
            .finish()
    }
}

/// Smallest 2^a 3^b 5^c 7^d not below `n`.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5, 7] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("smooth sizes are unbounded")
}

impl Kernel {
    /// Tabulates `spec` on the displacement lattice of `grid` and computes
    /// `k0 = int int k` and `kbar = sup_x int |k|`.
    pub fn build(spec: &KernelSpec, grid: &Arc<Grid>) -> Result<Kernel> {
        spec.validate(grid)?;
        let d = grid.dim();
        let table_dims: Vec<usize> = grid.nodes().iter().map(|&n| 2 * n - 1).collect();
        let table_len: usize = table_dims.iter().product();
        let self_value = spec.self_value(grid.spacing());
        let mut table = Vec::with_capacity(table_len);
        for t in 0..table_len {
            let mut rem = t;
            let mut r2 = 0.0;
            for a in 0..d {
                let off = (rem % table_dims[a]) as f64 - (grid.nodes()[a] - 1) as f64;
                rem /= table_dims[a];
                let x = off * grid.spacing()[a];
                r2 += x * x;
            }
            table.push(if r2 == 0.0 { self_value } else { spec.eval(r2.sqrt()) });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel table"));
        }

        let fft_dims: Vec<usize> = table_dims.iter().map(|&m| smooth_size(m)).collect();
        let mut planner = FftPlanner::new();
        let forward = fft_dims.iter().map(|&m| planner.plan_fft_forward(m)).collect();
        let inverse = fft_dims.iter().map(|&m| planner.plan_fft_inverse(m)).collect();

        let mut kernel = Kernel {
            spec: spec.clone(),
            grid: Arc::clone(grid),
            table,
            table_dims,
            fft_dims,
            forward,
            inverse,
            spectrum: Vec::new(),
            k0: 0.0,
            kbar: 0.0,
        };
        kernel.spectrum = kernel.kernel_spectrum();

        // every shipped family is nonnegative, so |k| = k here
        let c1 = kernel.apply_conv(&ScalarField::constant(grid, 1.0))?;
        kernel.k0 = integrate(&c1);
        kernel.kbar = c1.max();
        if !(kernel.k0.is_finite() && kernel.kbar.is_finite()) {
            return Err(Error::Hypothesis {
                clause: "H6",
                detail: "kernel integrals are not finite".into(),
            });
        }
        Ok(kernel)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `int_Omega int_Omega k(|x - y|) dx dy` by quadrature.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// `max_x int_Omega |k(|x - y|)| dy` by quadrature.
    pub fn kbar(&self) -> f64 {
        self.kbar
    }

    /// Table dimensions `(2 n_i - 1)` per axis.
    pub fn table_dims(&self) -> &[usize] {
        &self.table_dims
    }

    /// Kernel value at integer displacement `offset` (lattice units).
    pub fn table_value(&self, offset: &[isize]) -> f64 {
        let mut t = 0;
        let mut stride = 1;
        for (a, &o) in offset.iter().enumerate() {
            let n = self.grid.nodes()[a] as isize;
            debug_assert!(o.abs() < n);
            t += (o + n - 1) as usize * stride;
            stride *= self.table_dims[a];
        }
        self.table[t]
    }

    fn kernel_spectrum(&self) -> Vec<Complex64> {
        let d = self.grid.dim();
        let len: usize = self.fft_dims.iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let table_len = self.table.len();
        for t in 0..table_len {
            let mut rem = t;
            let mut idx = 0;
            let mut stride = 1;
            for a in 0..d {
                let n = self.grid.nodes()[a] as isize;
                let off = (rem % self.table_dims[a]) as isize - (n - 1);
                rem /= self.table_dims[a];
                let m = self.fft_dims[a] as isize;
                idx += (off.rem_euclid(m)) as usize * stride;
                stride *= self.fft_dims[a];
            }
            buf[idx] = Complex64::new(self.table[t], 0.0);
        }
        fft_nd(&mut buf, &self.fft_dims, &self.forward);
        buf
    }

    fn check_grid(&self, g: &Grid) -> Result<()> {
        if self.grid.same_as(g) {
            Ok(())
        } else {
            Err(Error::GridMismatch("field grid differs from kernel grid"))
        }
    }

    /// `x -> int_Omega k(|x - y|) z(y) dy`.
    pub fn apply_conv(&self, z: &ScalarField) -> Result<ScalarField> {
        self.check_grid(z.grid())?;
        let grid = &self.grid;
        let d = grid.dim();
        let len: usize = self.fft_dims.iter().product();
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let place = |i: usize| {
            let c = grid.coords(i);
            let mut idx = 0;
            let mut stride = 1;
            for a in 0..d {
                idx += c[a] * stride;
                stride *= self.fft_dims[a];
            }
            idx
        };
        for (i, (&w, &v)) in grid.weights().iter().zip(z.values()).enumerate() {
            buf[place(i)] = Complex64::new(w * v, 0.0);
        }
        fft_nd(&mut buf, &self.fft_dims, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        fft_nd(&mut buf, &self.fft_dims, &self.inverse);
        let scale = 1.0 / len as f64;
        let values = (0..grid.len()).map(|i| buf[place(i)].re * scale).collect();
        ScalarField::from_values(grid, values)
    }

    /// `K(phi) = int_Omega k(|x - y|) (1 - 2 phi(y)) dy`.
    pub fn apply_k(&self, phi: &ScalarField) -> Result<ScalarField> {
        self.apply_conv(&phi.map(|p| 1.0 - 2.0 * p))
    }

    /// `sum_i d/dx_i (k * g_i)`.
    pub fn apply_conv_vec(&self, g: &VectorField) -> Result<ScalarField> {
        self.check_grid(g.grid())?;
        let mut out = ScalarField::zeros(&self.grid);
        for (a, c) in g.components().iter().enumerate() {
            let conv = self.apply_conv(c)?;
            out.axpy(1.0, gradient(&conv).component(a));
        }
        Ok(out)
    }
}

/// In-place multidimensional FFT, axis 0 fastest.
fn fft_nd(buf: &mut [Complex64], dims: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    let mut stride = 1;
    for (a, &m) in dims.iter().enumerate() {
        let plan = &plans[a];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if a == 0 {
            for line in buf.chunks_exact_mut(m) {
                plan.process_with_scratch(line, &mut scratch);
            }
        } else {
            let block = stride * m;
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            for chunk in buf.chunks_exact_mut(block) {
                for off in 0..stride {
                    for k in 0..m {
                        line[k] = chunk[off + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..m {
                        chunk[off + k * stride] = line[k];
                    }
                }
            }
        }
        stride *= m;
    }
}

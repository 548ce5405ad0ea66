use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Grid, ScalarField};

/// Solver for `(I - a * Lap_N) u = f` with the even-reflection Neumann
/// Laplacian, diagonalised by a type-I cosine transform along each axis.
///
/// The type-I transform of a line of `n` nodes is evaluated as the FFT of
/// its even extension of length `2(n - 1)`; applying it twice scales by
/// `2(n - 1)`.
pub struct NeumannHelmholtz {
    grid: Arc<Grid>,
    coef: f64,
    plans: Vec<Arc<dyn Fft<f64>>>,
    /// `1 / (1 + coef * lambda_k)` per transformed node.
    inv_symbol: Vec<f64>,
}

impl NeumannHelmholtz {
    pub fn new(grid: &Arc<Grid>, coef: f64) -> Self {
        let mut planner = FftPlanner::new();
        let plans = grid
            .nodes()
            .iter()
            .map(|&n| planner.plan_fft_forward(2 * (n - 1)))
            .collect();
        // eigenvalues of -Lap_N per axis
        let axis_eig: Vec<Vec<f64>> = (0..grid.dim())
            .map(|a| {
                let n = grid.nodes()[a];
                let h = grid.spacing()[a];
                (0..n)
                    .map(|k| (2.0 - 2.0 * (PI * k as f64 / (n - 1) as f64).cos()) / (h * h))
                    .collect()
            })
            .collect();
        let norm: f64 = grid.nodes().iter().map(|&n| 2.0 * (n - 1) as f64).product();
        let inv_symbol = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let lam: f64 = (0..grid.dim()).map(|a| axis_eig[a][c[a]]).sum();
                1.0 / ((1.0 + coef * lam) * norm)
            })
            .collect();
        NeumannHelmholtz {
            grid: Arc::clone(grid),
            coef,
            plans,
            inv_symbol,
        }
    }

    pub fn coef(&self) -> f64 {
        self.coef
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Returns `u` with `(I - coef * Lap_N) u = rhs`.
    pub fn solve(&self, rhs: &ScalarField) -> ScalarField {
        debug_assert!(rhs.grid().same_as(&self.grid));
        let mut data = rhs.values().to_vec();
        self.cosine_transform(&mut data);
        for (d, s) in data.iter_mut().zip(&self.inv_symbol) {
            *d *= s;
        }
        self.cosine_transform(&mut data);
        ScalarField::from_values(&self.grid, data).expect("same node count")
    }

    fn cosine_transform(&self, data: &mut [f64]) {
        let grid = &self.grid;
        for axis in 0..grid.dim() {
            let n = grid.nodes()[axis];
            let s = grid.strides()[axis];
            let m = 2 * (n - 1);
            let plan = &self.plans[axis];
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for start in grid.line_starts(axis) {
                for j in 0..n {
                    buf[j] = Complex64::new(data[start + j * s], 0.0);
                }
                for j in 1..n - 1 {
                    buf[m - j] = buf[j];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    data[start + k * s] = buf[k].re;
                }
            }
        }
    }
}

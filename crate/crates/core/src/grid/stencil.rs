use super::Grid;

/// A one-dimensional difference operator stored row by row.
#[derive(Debug, Clone)]
pub(crate) struct Stencil1d {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Stencil1d {
    /// Central differences inside, second-order one-sided at both ends.
    pub fn gradient(n: usize, h: f64) -> Self {
        let c = 0.5 / h;
        let mut rows = Vec::with_capacity(n);
        rows.push(vec![(0, -3.0 * c), (1, 4.0 * c), (2, -c)]);
        for k in 1..n - 1 {
            rows.push(vec![(k - 1, -c), (k + 1, c)]);
        }
        rows.push(vec![(n - 3, c), (n - 2, -4.0 * c), (n - 1, 3.0 * c)]);
        Stencil1d { rows }
    }

    /// Central differences inside, half-cell differences at both ends.
    ///
    /// With the trapezoid weights this is minus the adjoint of the interior
    /// central difference on boundary-vanishing data, and the weighted sum of
    /// its output telescopes to `g[n-1] - g[0]`.
    pub fn divergence(n: usize, h: f64) -> Self {
        let c = 0.5 / h;
        let mut rows = Vec::with_capacity(n);
        rows.push(vec![(0, -1.0 / h), (1, 1.0 / h)]);
        for k in 1..n - 1 {
            rows.push(vec![(k - 1, -c), (k + 1, c)]);
        }
        rows.push(vec![(n - 2, -1.0 / h), (n - 1, 1.0 / h)]);
        Stencil1d { rows }
    }

    /// Three-point second difference with even-reflection ghost nodes.
    pub fn laplacian(n: usize, h: f64) -> Self {
        let c = 1.0 / (h * h);
        let mut rows = Vec::with_capacity(n);
        rows.push(vec![(0, -2.0 * c), (1, 2.0 * c)]);
        for k in 1..n - 1 {
            rows.push(vec![(k - 1, c), (k, -2.0 * c), (k + 1, c)]);
        }
        rows.push(vec![(n - 2, 2.0 * c), (n - 1, -2.0 * c)]);
        Stencil1d { rows }
    }

    /// Adjoint with respect to the weighted inner product `sum w_k a_k b_k`.
    pub fn weighted_adjoint(&self, w: &[f64]) -> Self {
        let mut rows = vec![Vec::new(); self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                rows[j].push((i, w[i] * c / w[j]));
            }
        }
        Stencil1d { rows }
    }

    /// Applies the operator along `axis`, adding into `out` when `accumulate`.
    pub fn apply_along(&self, grid: &Grid, axis: usize, input: &[f64], out: &mut [f64], accumulate: bool) {
        let s = grid.strides()[axis];
        for start in grid.line_starts(axis) {
            for (k, row) in self.rows.iter().enumerate() {
                // difference rows are evaluated relative to the own node so
                // that constants map to an exact zero
                let v: f64 = if difference_row(row) {
                    let x0 = input[start + k * s];
                    row.iter().map(|&(j, c)| c * (input[start + j * s] - x0)).sum()
                } else {
                    row.iter().map(|&(j, c)| c * input[start + j * s]).sum()
                };
                let o = &mut out[start + k * s];
                if accumulate {
                    *o += v;
                } else {
                    *o = v;
                }
            }
        }
    }

    #[cfg(test)]
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, c) in row {
                m[i][j] += c;
            }
        }
        m
    }
}

fn difference_row(row: &[(usize, f64)]) -> bool {
    let sum: f64 = row.iter().map(|&(_, c)| c).sum();
    let mag: f64 = row.iter().map(|&(_, c)| c.abs()).sum();
    sum.abs() <= 1e-12 * mag
}

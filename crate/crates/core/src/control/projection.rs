//! Projection onto box-bounded, divergence-free, boundary-vanishing controls.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, divergence_adjoint, Grid, ScalarField, VectorField};
use crate::state::ControlTrajectory;

/// One side of a componentwise bound.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    Constant(f64),
    Field(ScalarField),
}

impl Bound {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Bound::Constant(c) => *c,
            Bound::Field(f) => f.values()[i],
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        match self {
            Bound::Constant(c) if c.is_nan() => Err(Error::Infeasible("NaN bound".into())),
            Bound::Field(f) if !f.grid().same_as(grid) => Err(Error::GridMismatch("bound field grid")),
            Bound::Field(f) if f.values().iter().any(|v| v.is_nan()) => {
                Err(Error::Infeasible("NaN in bound field".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Dykstra loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionOptions {
    /// Stop when successive iterates differ by less than `tol * max(||v||, 1)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative residual for the inner divergence solve.
    pub inner_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            tol: 1e-10,
            max_iters: 50,
            inner_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConstraints {
    pub lower: Vec<Bound>,
    pub upper: Vec<Bound>,
    pub divergence_free: bool,
    pub div_tol: f64,
    /// Budget for `||v||_{L2 H1} + ||v_t||_{L2 L3}`; reported, never enforced.
    pub norm_budget: Option<f64>,
    pub projection: ProjectionOptions,
}

impl ControlConstraints {
    /// The same constant bounds on every component.
    pub fn boxed(dim: usize, lower: f64, upper: f64, divergence_free: bool) -> Self {
        ControlConstraints {
            lower: vec![Bound::Constant(lower); dim],
            upper: vec![Bound::Constant(upper); dim],
            divergence_free,
            div_tol: 1e-8,
            norm_budget: None,
            projection: ProjectionOptions::default(),
        }
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self::boxed(dim, f64::NEG_INFINITY, f64::INFINITY, false)
    }

    /// Checks feasibility on `grid`, returning the constraints actually used
    /// there (the divergence constraint is dropped in one dimension).
    pub fn resolve(&self, grid: &Grid) -> Result<ControlConstraints> {
        let d = grid.dim();
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Infeasible(format!(
                "{} lower and {} upper bounds for {d} components",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let mut out = self.clone();
        if d == 1 && out.divergence_free {
            log::warn!("divergence-free constraint forces v = 0 in one dimension; disabled");
            out.divergence_free = false;
        }
        for (lo, hi) in out.lower.iter().zip(&out.upper) {
            lo.check(grid)?;
            hi.check(grid)?;
            for i in 0..grid.len() {
                let (l, u) = (lo.at(i), hi.at(i));
                if l > u {
                    return Err(Error::Infeasible(format!("lower bound {l} exceeds upper {u} at node {i}")));
                }
                if out.divergence_free && grid.on_boundary(i) && !(l <= 0.0 && 0.0 <= u) {
                    return Err(Error::Infeasible(format!(
                        "boundary node {i} must admit v = 0 but bounds are [{l}, {u}]"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Whether `0` is admissible for the box at every node.
    fn box_contains_zero(&self, n: usize) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(lo, hi)| (0..n).all(|i| lo.at(i) <= 0.0 && 0.0 <= hi.at(i)))
    }

    pub fn clip(&self, v: &VectorField) -> VectorField {
        let comps = v
            .components()
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let (lo, hi) = (&self.lower[a], &self.upper[a]);
                let vals = c
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| lo.at(i).max(hi.at(i).min(x)))
                    .collect();
                ScalarField::from_values(v.grid(), vals).expect("same grid")
            })
            .collect();
        VectorField::from_components(comps).expect("same grid")
    }

    /// Largest violation of the box over all nodes and components.
    pub fn box_violation(&self, v: &VectorField) -> f64 {
        let mut worst = 0.0f64;
        for (a, c) in v.components().iter().enumerate() {
            for (i, &x) in c.values().iter().enumerate() {
                worst = worst.max(self.lower[a].at(i) - x).max(x - self.upper[a].at(i));
            }
        }
        worst
    }
}

/// Result of [`project_admissible`].
#[derive(Debug, Clone)]
pub struct Projected {
    pub control: ControlTrajectory,
    pub converged: bool,
    /// Largest Dykstra iteration count over the time slices.
    pub iterations: usize,
}

/// Grids up to this many nodes use a cached dense pseudo-inverse for the
/// divergence solve; larger ones fall back to conjugate gradients.
const DENSE_PROJECTION_NODES: usize = 1100;

/// Weighted pseudo-inverse of `B Z B*` as `W^-1/2 S^+ W^1/2`, cached per grid.
type PseudoInverse = Arc<DMatrix<f64>>;

fn pseudo_inverse(grid: &Arc<Grid>) -> PseudoInverse {
    static CACHE: OnceLock<Mutex<HashMap<(Vec<usize>, Vec<u64>), PseudoInverse>>> = OnceLock::new();
    let key = (
        grid.nodes().to_vec(),
        grid.extents().iter().map(|e| e.to_bits()).collect::<Vec<_>>(),
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().expect("projection cache").get(&key) {
        return m.clone();
    }
    let n = grid.len();
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    let mut e = ScalarField::zeros(grid);
    for j in 0..n {
        e.values_mut()[j] = 1.0;
        let col = SolenoidalProjector::normal_op(&e);
        e.values_mut()[j] = 0.0;
        for (i, &c) in col.values().iter().enumerate() {
            s[(i, j)] = sw[i] * c / sw[j];
        }
    }
    // symmetrize away round-off before the eigensolve
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let inv: DVector<f64> = eig
        .eigenvalues
        .map(|l| if l > 1e-11 * top { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    let mut pinv = v * DMatrix::from_diagonal(&inv) * v.transpose();
    for i in 0..n {
        for j in 0..n {
            pinv[(i, j)] *= sw[j] / sw[i];
        }
    }
    let pinv = Arc::new(pinv);
    cache.lock().expect("projection cache").insert(key, pinv.clone());
    pinv
}

/// Exact weighted projection onto `{v : v = 0 on the boundary, div v = 0}`.
///
/// With `Z` the boundary mask and `B` the discrete divergence,
/// `u = Z v - Z B* lambda` where `B Z B* lambda = B Z v`. Small grids solve
/// for `lambda` with a cached pseudo-inverse; large ones use conjugate
/// gradients in the weighted inner product, warm-started from the previous
/// `lambda`.
struct SolenoidalProjector {
    inner_tol: f64,
    max_cg: usize,
    dense: Option<PseudoInverse>,
}

impl SolenoidalProjector {
    fn new(grid: &Arc<Grid>, needed: bool, inner_tol: f64) -> Self {
        SolenoidalProjector {
            inner_tol,
            max_cg: 20 * grid.len() + 100,
            dense: (needed && grid.len() <= DENSE_PROJECTION_NODES).then(|| pseudo_inverse(grid)),
        }
    }

    fn masked_grad_adjoint(lam: &ScalarField) -> VectorField {
        let mut u = divergence_adjoint(lam);
        u.zero_boundary();
        u
    }

    fn normal_op(lam: &ScalarField) -> ScalarField {
        divergence(&Self::masked_grad_adjoint(lam))
    }

    fn project(&self, v: &VectorField, lam: &mut ScalarField) -> VectorField {
        let mut u0 = v.clone();
        u0.zero_boundary();
        let b = divergence(&u0);
        if b.max_abs() == 0.0 {
            return u0;
        }
        match &self.dense {
            Some(pinv) => {
                let x = &**pinv * DVector::from_column_slice(b.values());
                lam.values_mut().copy_from_slice(x.as_slice());
            }
            None => self.cg(&b, lam),
        }
        let mut u = u0.lin_comb(1.0, &Self::masked_grad_adjoint(lam), -1.0);
        // one refinement sweep on the residual divergence
        if let Some(pinv) = &self.dense {
            let r = divergence(&u);
            let x = &**pinv * DVector::from_column_slice(r.values());
            let corr = ScalarField::from_values(v.grid(), x.as_slice().to_vec()).expect("same grid");
            u.axpy(-1.0, &Self::masked_grad_adjoint(&corr));
            lam.axpy(1.0, &corr);
        }
        u
    }

    fn cg(&self, b: &ScalarField, lam: &mut ScalarField) {
        let b_norm = b.inner(b).sqrt();
        let mut r = b.sub(&Self::normal_op(lam));
        let mut p = r.clone();
        let mut rr = r.inner(&r);
        let target = (self.inner_tol * b_norm).powi(2);
        let mut best = (rr, lam.clone(), 0usize);
        for k in 0..self.max_cg {
            if rr <= target || k > best.2 + 200 {
                break;
            }
            let ap = Self::normal_op(&p);
            let pap = p.inner(&ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            lam.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            let rr_new = r.inner(&r);
            if rr_new < 0.25 * best.0 {
                best = (rr_new, lam.clone(), k);
            } else if rr_new < best.0 {
                best.0 = rr_new;
                best.1 = lam.clone();
            }
            p = r.lin_comb(1.0, &p, rr_new / rr);
            rr = rr_new;
        }
        *lam = best.1;
    }
}

fn project_slice(v: &VectorField, cons: &ControlConstraints, solver: &SolenoidalProjector) -> (VectorField, bool, usize) {
    if !cons.divergence_free {
        return (cons.clip(v), true, 1);
    }
    let grid = v.grid();
    let opts = cons.projection;
    let scale = v.inner(v).sqrt().max(1.0);
    let mut lam = ScalarField::zeros(grid);
    // Dykstra with the subspace first; its correction term is not needed
    let mut x = v.clone();
    let mut q = VectorField::zeros(grid);
    let mut y = solver.project(&x, &mut lam);
    let mut converged = false;
    let mut iters = 0;
    for k in 0..opts.max_iters.max(1) {
        iters = k + 1;
        let x_new = cons.clip(&y.lin_comb(1.0, &q, 1.0));
        q = y.lin_comb(1.0, &q, 1.0).lin_comb(1.0, &x_new, -1.0);
        let y_new = solver.project(&x_new, &mut lam);
        let dx = x_new.lin_comb(1.0, &x, -1.0);
        let dy = y_new.lin_comb(1.0, &y, -1.0);
        let gap = x_new.lin_comb(1.0, &y_new, -1.0);
        x = x_new;
        y = y_new;
        let change = dx.inner(&dx).max(dy.inner(&dy)).max(gap.inner(&gap)).sqrt();
        if change <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    // y is solenoidal; pull it into the box along the ray to 0 when possible
    let out = if cons.box_contains_zero(grid.len()) {
        let mut t = 1.0f64;
        for (a, c) in y.components().iter().enumerate() {
            for (i, &val) in c.values().iter().enumerate() {
                let (lo, hi) = (cons.lower[a].at(i), cons.upper[a].at(i));
                if val > hi {
                    t = t.min(hi / val);
                } else if val < lo {
                    t = t.min(lo / val);
                }
            }
        }
        let mut s = y.scaled(t);
        // guard the last ulp
        s = cons.clip(&s);
        s
    } else {
        cons.clip(&y)
    };
    (out, converged, iters)
}

/// Projects every time slice; with the divergence constraint off this is a
/// pointwise clip.
pub fn project_admissible(ctrl: &ControlTrajectory, cons: &ControlConstraints) -> Result<Projected> {
    let cons = cons.resolve(ctrl.grid())?;
    if !ctrl.is_finite() {
        return Err(Error::NonFinite("control passed to projection"));
    }
    let solver = SolenoidalProjector::new(ctrl.grid(), cons.divergence_free, cons.projection.inner_tol);
    let results: Vec<(VectorField, bool, usize)> = ctrl
        .slices()
        .par_iter()
        .map(|v| project_slice(v, &cons, &solver))
        .collect();
    let converged = results.iter().all(|r| r.1);
    let iterations = results.iter().map(|r| r.2).max().unwrap_or(0);
    if !converged {
        log::debug!("control projection stopped after {iterations} iterations without converging");
    }
    let control = ControlTrajectory::new(ctrl.time(), results.into_iter().map(|r| r.0).collect())?;
    Ok(Projected {
        control,
        converged,
        iterations,
    })
}

/// Largest `||div v_n||_{L2}` over the slices.
pub fn max_divergence(ctrl: &ControlTrajectory) -> f64 {
    ctrl.slices()
        .iter()
        .map(|v| {
            let d = divergence(v);
            d.inner(&d).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Largest nodal magnitude on the boundary.
pub fn max_boundary_value(ctrl: &ControlTrajectory) -> f64 {
    let grid = ctrl.grid();
    let mut worst = 0.0f64;
    for v in ctrl.slices() {
        for c in v.components() {
            for (i, &x) in c.values().iter().enumerate() {
                if grid.on_boundary(i) {
                    worst = worst.max(x.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::test_util::swirl;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng, amp: f64) -> VectorField {
        let comps = (0..g.dim())
            .map(|_| {
                let vals = (0..g.len()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
                ScalarField::from_values(g, vals).unwrap()
            })
            .collect();
        VectorField::from_components(comps).unwrap()
    }

    #[test]
    fn pure_box_matches_formula() {
        let g = Grid::new(&[1.0, 1.0], &[9, 9]).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let v = VectorField::from_components(vec![
            ScalarField::from_fn(&g, |x| 3.0 * (5.0 * x[0]).sin()),
            ScalarField::from_fn(&g, |x| 3.0 * (4.0 * x[1]).cos()),
        ])
        .unwrap();
        let c = ControlTrajectory::steady(time, v.clone());
        let cons = ControlConstraints::boxed(2, -1.0, 1.0, false);
        let out = project_admissible(&c, &cons).unwrap();
        for a in 0..2 {
            for (o, i) in out.control.slice(1).component(a).values().iter().zip(v.component(a).values()) {
                assert_eq!(*o, (-1.0f64).max(1.0f64.min(*i)));
            }
        }
    }

    #[test]
    fn admissible_input_is_fixed() {
        let g = Grid::new(&[1.0, 1.0], &[16, 16]).unwrap();
        let time = TimeGrid::new(1.0, 2).unwrap();
        let c = ControlTrajectory::steady(time, swirl(&g, 0.05));
        let cons = ControlConstraints::boxed(2, -1.0, 1.0, true);
        assert!(cons.box_violation(c.slice(0)) <= 0.0);
        let out = project_admissible(&c, &cons).unwrap();
        let diff = out.control.lin_comb(1.0, &c, -1.0).norm();
        assert!(diff <= 1e-10 * c.norm(), "{diff}");
    }

    #[test]
    fn random_input_lands_in_set() {
        let g = Grid::new(&[1.0, 1.0], &[16, 16]).unwrap();
        let time = TimeGrid::new(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = ControlTrajectory::new(time, (0..3).map(|_| random_field(&g, &mut rng, 2.0)).collect()).unwrap();
        let cons = ControlConstraints::boxed(2, -0.5, 0.5, true);
        let out = project_admissible(&c, &cons).unwrap();
        for v in out.control.slices() {
            assert!(cons.box_violation(v) <= 0.0);
        }
        assert!(max_divergence(&out.control) <= 1e-8);
        assert_eq!(max_boundary_value(&out.control), 0.0);
        // no random admissible point is closer to the input
        let best = out.control.lin_comb(1.0, &c, -1.0).norm();
        for _ in 0..100 {
            let r = ControlTrajectory::new(time, (0..3).map(|_| random_field(&g, &mut rng, 0.5)).collect()).unwrap();
            let adm = project_admissible(&r, &cons).unwrap().control;
            assert!(adm.lin_comb(1.0, &c, -1.0).norm() >= best - 1e-9);
        }
    }

    #[test]
    fn infeasible_boxes_rejected() {
        let g = Grid::new(&[1.0, 1.0], &[8, 8]).unwrap();
        let time = TimeGrid::new(1.0, 1).unwrap();
        let c = ControlTrajectory::zeros(&g, time);
        let bad = ControlConstraints::boxed(2, 1.0, -1.0, false);
        assert!(matches!(project_admissible(&c, &bad), Err(Error::Infeasible(_))));
        let off_zero = ControlConstraints::boxed(2, 0.1, 1.0, true);
        assert!(matches!(project_admissible(&c, &off_zero), Err(Error::Infeasible(_))));
    }

    #[test]
    fn one_dimensional_flag_dropped() {
        let g = Grid::new(&[1.0], &[10]).unwrap();
        let cons = ControlConstraints::boxed(1, -1.0, 1.0, true);
        assert!(!cons.resolve(&g).unwrap().divergence_free);
    }
}

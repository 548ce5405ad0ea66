use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    dense_convolution, fd_directional, interior_window, matrix_of, order_fit, random_smooth,
    random_solenoidal, DenseStepper,
};
use crate::adjoint::{retreat_adjoint, Targets};
use crate::control::{
    max_divergence, project_admissible, ControlConstraints, CostWeights, Problem,
};
use crate::error::Result;
use crate::grid::{Grid, ScalarField, TimeGrid, VectorField};
use crate::kernel::{Kernel, KernelSpec};
use crate::linearized::{advance_linearized, solve_linearized};
use crate::state::{solve, suggest_time_step, ControlTrajectory, MaterialLaw, StateOptions, StatePropagator};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn at_least(name: &'static str, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name,
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub extents: Vec<f64>,
    pub kernel: KernelSpec,
    pub law: MaterialLaw,
    pub seed: u64,
}

fn rel(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.sub(b);
    d.inner(&d).sqrt() / b.inner(b).sqrt().max(1e-300)
}

fn small_grid(extents: &[f64]) -> Result<Arc<Grid>> {
    let n = match extents.len() {
        1 => 32,
        2 => 12,
        _ => 8,
    };
    Grid::new(extents, &vec![n; extents.len()])
}

fn control_field(grid: &Arc<Grid>, amp: f64, seed: u64) -> Result<VectorField> {
    if grid.dim() == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth(grid, &mut rng, 3).mul(&interior_window(grid, 3));
        let peak = f.max_abs().max(1e-300);
        VectorField::from_components(vec![f.scaled(amp / peak)])
    } else {
        random_solenoidal(grid, amp, seed)
    }
}

/// Oracle comparisons on a small instance built from `opts`.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<CheckResult>> {
    let grid = small_grid(&opts.extents)?;
    let kernel = Kernel::build(&opts.kernel, &grid)?;
    let law = opts.law;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();

    let z = random_smooth(&grid, &mut rng, 5);
    out.push(CheckResult::at_most(
        "convolution_vs_dense",
        rel(&kernel.apply_conv(&z)?, &dense_convolution(&kernel, &z)?),
        1e-12,
    ));

    let phi = ScalarField::from_fn(&grid, |x| {
        0.5 + 0.2 * (0..x.len()).map(|a| (PI * x[a] / opts.extents[a]).cos()).product::<f64>()
    });
    let v = if grid.dim() == 1 {
        VectorField::zeros(&grid)
    } else {
        control_field(&grid, 0.5, opts.seed ^ 1)?
    };
    let h = control_field(&grid, 1.0, opts.seed ^ 2)?;
    let dt = suggest_time_step(&grid, law, &kernel, v.max_abs()).min(1e-3);
    let prop = StatePropagator::new(law, &kernel, dt)?;
    let dense = DenseStepper::new(&kernel, law, dt)?;
    let w = kernel.apply_k(&phi)?;

    out.push(CheckResult::at_most(
        "state_step_vs_dense",
        rel(&prop.advance(&phi, &v)?, &dense.state_step(&phi, &v)?),
        1e-11,
    ));
    let xi = random_smooth(&grid, &mut rng, 4);
    out.push(CheckResult::at_most(
        "linearized_step_vs_dense",
        rel(
            &advance_linearized(&prop, &xi, &phi, &w, &v, &h)?,
            &dense.linearized_step(&xi, &phi, &v, &h)?,
        ),
        1e-11,
    ));
    let q = random_smooth(&grid, &mut rng, 4);
    let src = random_smooth(&grid, &mut rng, 2);
    out.push(CheckResult::at_most(
        "adjoint_step_vs_dense",
        rel(
            &retreat_adjoint(&prop, &q, &phi, &w, &v, &src)?.0,
            &dense.adjoint_step(&q, &phi, &v, &src)?,
        ),
        1e-11,
    ));

    // weighted transpose identity between the fast steps
    let zero = VectorField::zeros(&grid);
    let zs = ScalarField::zeros(&grid);
    let lin = matrix_of(&grid, |e| advance_linearized(&prop, e, &phi, &w, &v, &zero))?;
    let adj = matrix_of(&grid, |e| Ok(retreat_adjoint(&prop, e, &phi, &w, &v, &zs)?.0))?;
    let wts = grid.weights();
    let n = grid.len();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let a = wts[i] * lin[(i, j)];
            let b = wts[j] * adj[(j, i)];
            worst = worst.max((a - b).abs());
            scale = scale.max(a.abs());
        }
    }
    out.push(CheckResult::at_most("transpose_identity", worst / scale, 1e-12));

    // trajectory-level checks
    let steps = 20;
    let time = TimeGrid::new(steps as f64 * dt, steps)?;
    let ctrl = ControlTrajectory::steady(time, v.clone());
    let dir = ControlTrajectory::steady(time, h.clone());
    let state_opts = StateOptions::default();
    let traj = solve(&phi, &ctrl, law, &kernel, &state_opts)?;
    out.push(CheckResult::at_most(
        "mass_drift",
        traj.mass_drift() / grid.volume(),
        1e-10,
    ));

    let problem = Problem {
        phi0: phi.clone(),
        law,
        kernel: &kernel,
        targets: Targets::constant(
            ScalarField::constant(&grid, 0.45),
            ScalarField::from_fn(&grid, |x| 0.5 + 0.1 * (PI * x[0] / opts.extents[0]).sin()),
        ),
        weights: CostWeights::new(1.0, 1.0, 1e-3)?,
        constraints: ControlConstraints::unconstrained(grid.dim()),
        state_options: state_opts,
    };
    let (_, grad) = problem.cost_and_gradient(&ctrl)?;
    let analytic = grad.inner(&dir);
    let fd = fd_directional(|c| problem.cost(c), &ctrl, &dir, 1e-4)?;
    out.push(CheckResult::at_most(
        "gradient_vs_fd",
        (analytic - fd).abs() / analytic.abs().max(1e-300),
        1e-5,
    ));

    let lin_traj = solve_linearized(&traj, &ctrl, &dir, law, &kernel)?;
    let mut points = Vec::new();
    for eps in [1e-2, 3e-3, 1e-3] {
        let pert = solve(&phi, &ctrl.lin_comb(1.0, &dir, eps), law, &kernel, &state_opts)?;
        let err = pert
            .phi
            .iter()
            .zip(&traj.phi)
            .zip(&lin_traj.xi)
            .map(|((a, b), x)| {
                let r = a.sub(b).lin_comb(1.0, x, -eps);
                r.inner(&r).sqrt()
            })
            .fold(0.0, f64::max);
        points.push((eps, err));
    }
    out.push(CheckResult::at_least("taylor_order", order_fit(&points)?.slope, 1.9));

    if grid.dim() > 1 {
        let cons = ControlConstraints::boxed(grid.dim(), -0.5, 0.5, true);
        let noisy = ControlTrajectory::steady(
            TimeGrid::new(1.0, 2)?,
            VectorField::from_components(
                (0..grid.dim()).map(|_| random_smooth(&grid, &mut rng, 6)).collect(),
            )?,
        );
        let p = project_admissible(&noisy, &cons)?.control;
        out.push(CheckResult::at_most("projection_divergence", max_divergence(&p), 1e-8));
        let box_err = p
            .slices()
            .iter()
            .map(|s| cons.box_violation(s))
            .fold(0.0, f64::max);
        out.push(CheckResult::at_most("projection_box", box_err, 0.0));
        let again = project_admissible(&p, &cons)?.control;
        out.push(CheckResult::at_most(
            "projection_idempotent",
            again.lin_comb(1.0, &p, -1.0).norm(),
            1e-10,
        ));
    }
    Ok(out)
}

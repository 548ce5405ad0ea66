//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one `PASS`/`FAIL` line.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nlch_core::adjoint::{retreat_adjoint, Targets, TrackingTarget};
use nlch_core::control::{
    max_boundary_value, max_divergence, project_admissible, projected_gradient,
    vi_residual, ControlConstraints, CostWeights, OptimizerOptions, Problem,
};
use nlch_core::grid::{Grid, ScalarField, TimeGrid, VectorField};
use nlch_core::kernel::{local_limit_energy, Kernel, KernelSpec};
use nlch_core::linearized::{advance_linearized, solve_linearized};
use nlch_core::state::{
    solve, stability_ratio, suggest_time_step, ControlTrajectory, MaterialLaw, StateOptions,
    StatePropagator, StateTrajectory,
};
use nlch_core::validation::{
    dense_convolution, fd_directional, matrix_of, order_fit, random_smooth, random_solenoidal,
    DenseStepper,
};
use nlch_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { passed, detail })
}

fn square(n: usize) -> Arc<Grid> {
    Grid::new(&[1.0, 1.0], &[n, n]).unwrap()
}

fn gaussian() -> KernelSpec {
    KernelSpec::Gaussian { amplitude: 2.0, width: 0.03 }
}

fn law() -> MaterialLaw {
    MaterialLaw::new(1.0).unwrap()
}

fn cosine(grid: &Arc<Grid>, amp: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| 0.5 + amp * (PI * x[0]).cos())
}

/// Off-centre profile so that a centred eddy actually moves material.
fn lopsided(grid: &Arc<Grid>) -> ScalarField {
    ScalarField::from_fn(grid, |x| 0.5 + 0.2 * (PI * x[0]).cos() + 0.1 * (PI * x[1]).cos() * (2.0 * PI * x[0]).sin())
}

fn rel(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.sub(b);
    d.inner(&d).sqrt() / b.inner(b).sqrt()
}

/// Swirling control that is already admissible for the box `[-1, 1]`.
fn admissible_swirl(grid: &Arc<Grid>, time: TimeGrid, amp: f64, seed: u64) -> ControlTrajectory {
    let v = random_solenoidal(grid, amp, seed).unwrap();
    let cons = ControlConstraints::boxed(grid.dim(), -1.0, 1.0, true);
    project_admissible(&ControlTrajectory::steady(time, v), &cons).unwrap().control
}

fn c1_convolution() -> Result<Verdict> {
    let specs = [
        gaussian(),
        KernelSpec::Mollifier { amplitude: 1.0, radius: 0.4 },
        KernelSpec::Newton { kappa: 0.5, cutoff: 0.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for grid in [square(16), Grid::new(&[1.0, 1.0, 1.0], &[8, 8, 8])?] {
        for spec in &specs {
            let kernel = Kernel::build(spec, &grid)?;
            let z = ScalarField::from_values(&grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            worst = worst.max(rel(&kernel.apply_conv(&z)?, &dense_convolution(&kernel, &z)?));
        }
    }
    verdict(worst <= 1e-12, format!("max relative L2 error {worst:.2e} (limit 1e-12) over 3 kernels on 16^2 and 8^3"))
}

fn run_32(ctrl_amp: f64) -> Result<(StateTrajectory, f64)> {
    let grid = square(32);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let dt = suggest_time_step(&grid, law(), &kernel, ctrl_amp).min(1e-3);
    let time = TimeGrid::new(200.0 * dt, 200)?;
    let ctrl = if ctrl_amp == 0.0 {
        ControlTrajectory::zeros(&grid, time)
    } else {
        admissible_swirl(&grid, time, ctrl_amp, 3)
    };
    let traj = solve(&cosine(&grid, 0.3), &ctrl, law(), &kernel, &StateOptions::default())?;
    Ok((traj, grid.volume()))
}

fn c2_mass() -> Result<Verdict> {
    let (traj, volume) = run_32(0.0)?;
    let drift = traj.mass_drift();
    verdict(
        drift <= 1e-10 * volume,
        format!("max |mass drift| {drift:.2e} over {} steps (limit 1e-10 |Omega|)", traj.time.steps()),
    )
}

fn c3_separation() -> Result<Verdict> {
    let (traj, _) = match run_32(0.8) {
        Err(e @ Error::SeparationViolation { .. }) => return verdict(false, e.to_string()),
        other => other?,
    };
    let c0 = law().c0;
    let (mut lo, mut hi, mut m_lo, mut m_hi) = (1.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for phi in &traj.phi {
        lo = lo.min(phi.min());
        hi = hi.max(phi.max());
        let m = phi.map(|s| law().mobility(s));
        m_lo = m_lo.min(m.min());
        m_hi = m_hi.max(m.max());
    }
    let ok = lo > 0.0 && hi < 1.0 && m_lo > 0.0 && m_hi <= c0 / 4.0;
    verdict(
        ok,
        format!("phi in [{lo:.4}, {hi:.4}], mobility in [{m_lo:.4}, {m_hi:.4}] over 200 steps with |v| <= 0.8"),
    )
}

fn c4_fixed_point() -> Result<Verdict> {
    let grid = square(16);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.1, 100)?;
    let ctrl = admissible_swirl(&grid, time, 1.0, 4);
    let traj = solve(&ScalarField::constant(&grid, 0.5), &ctrl, law(), &kernel, &StateOptions::default())?;
    let dev = traj.phi.iter().map(|p| p.map(|s| s - 0.5).max_abs()).fold(0.0, f64::max);
    verdict(dev <= 1e-13, format!("max |phi - 1/2| = {dev:.2e} over 100 steps (limit 1e-13)"))
}

fn c5_taylor() -> Result<Verdict> {
    let grid = square(16);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.02, 20)?;
    let ctrl = admissible_swirl(&grid, time, 0.5, 5);
    let dir = ControlTrajectory::steady(time, random_solenoidal(&grid, 1.0, 6)?);
    let phi0 = lopsided(&grid);
    let opts = StateOptions::default();
    let base = solve(&phi0, &ctrl, law(), &kernel, &opts)?;
    let lin = solve_linearized(&base, &ctrl, &dir, law(), &kernel)?;
    let dt = time.dt();
    let mut points = Vec::new();
    for eps in [1e-2, 3e-3, 1e-3] {
        let pert = solve(&phi0, &ctrl.lin_comb(1.0, &dir, eps), law(), &kernel, &opts)?;
        let sq: f64 = (0..=time.steps())
            .map(|n| {
                let r = pert.phi[n].sub(&base.phi[n]).lin_comb(1.0, &lin.xi[n], -eps);
                dt * r.inner(&r)
            })
            .sum();
        points.push((eps, sq.sqrt()));
    }
    let fit = order_fit(&points)?;
    verdict(
        fit.slope >= 1.9,
        format!(
            "remainder slope {:.3} (limit >= 1.9), remainders {:.2e} {:.2e} {:.2e}",
            fit.slope, points[0].1, points[1].1, points[2].1
        ),
    )
}

fn c6_transpose() -> Result<Verdict> {
    let grid = square(10);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phi = random_smooth(&grid, &mut rng, 5).map(|s| 0.5 + 0.1 * s);
    let v = random_solenoidal(&grid, 0.7, 7)?;
    let dt = 1e-3;
    let dense = DenseStepper::new(&kernel, law(), dt)?;
    let lin_dense = dense.linearized_matrix(&phi, &v)?;

    let prop = StatePropagator::new(law(), &kernel, dt)?;
    let w = kernel.apply_k(&phi)?;
    let zero_v = VectorField::zeros(&grid);
    let zero_s = ScalarField::zeros(&grid);
    let lin_fast = matrix_of(&grid, |e| advance_linearized(&prop, e, &phi, &w, &v, &zero_v))?;
    let adj_fast = matrix_of(&grid, |e| Ok(retreat_adjoint(&prop, e, &phi, &w, &v, &zero_s)?.0))?;

    // adjoint of L under <a, b> = sum w_i a_i b_i is W^-1 L^T W
    let wts = grid.weights();
    let n = grid.len();
    let (mut err_dense, mut err_fast, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let a = wts[j] * adj_fast[(j, i)];
            err_dense = err_dense.max((wts[i] * lin_dense[(i, j)] - a).abs());
            err_fast = err_fast.max((wts[i] * lin_fast[(i, j)] - a).abs());
            scale = scale.max((wts[i] * lin_dense[(i, j)]).abs());
        }
    }
    let (rd, rf) = (err_dense / scale, err_fast / scale);
    verdict(
        rd <= 1e-12 && rf <= 1e-12,
        format!("max entry mismatch / max entry: dense linearized {rd:.2e}, fast linearized {rf:.2e} (limit 1e-12)"),
    )
}

fn tracking_problem<'k>(grid: &Arc<Grid>, kernel: &'k Kernel, weights: CostWeights) -> Problem<'k> {
    Problem {
        phi0: lopsided(grid),
        law: law(),
        kernel,
        targets: Targets::constant(
            ScalarField::constant(grid, 0.45),
            ScalarField::from_fn(grid, |x| 0.5 + 0.1 * (PI * x[1]).sin()),
        ),
        weights,
        constraints: ControlConstraints::boxed(grid.dim(), -1.0, 1.0, true),
        state_options: StateOptions::default(),
    }
}

fn c7_gradient() -> Result<Verdict> {
    let grid = square(12);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.02, 20)?;
    let problem = tracking_problem(&grid, &kernel, CostWeights::new(1.0, 1.0, 1e-3)?);
    let ctrl = admissible_swirl(&grid, time, 0.5, 8);
    let (_, grad) = problem.cost_and_gradient(&ctrl)?;
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let h = ControlTrajectory::steady(time, random_solenoidal(&grid, 0.3, 100 + seed)?);
        let analytic = grad.inner(&h);
        let fd = fd_directional(|c| problem.cost(c), &ctrl, &h, 1e-4)?;
        worst = worst.max((analytic - fd).abs() / analytic.abs());
    }
    verdict(worst <= 1e-5, format!("max relative error {worst:.2e} over 5 directions at eps 1e-4 (limit 1e-5)"))
}

fn monotone(costs: &[f64]) -> bool {
    costs.windows(2).all(|w| w[1] <= w[0])
}

fn c8_optimizer() -> Result<Verdict> {
    // pure regularization: unique minimizer v = 0
    let grid = square(12);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.01, 10)?;
    let reg = tracking_problem(&grid, &kernel, CostWeights::new(0.0, 0.0, 1.0)?);
    let v0 = admissible_swirl(&grid, time, 0.8, 9);
    let rep = projected_gradient(&v0, &reg, &OptimizerOptions::default())?;
    let reg_costs: Vec<f64> = rep.iterates.iter().map(|r| r.cost).collect();
    let reg_norm = rep.control.norm();
    let reg_vi = vi_residual(&rep.control, &rep.gradient, &reg.constraints, 50, 1)?;
    let reg_ok = reg_norm <= 1e-6 && monotone(&reg_costs) && reg_vi >= -1e-6;

    // synthetic inverse: track the trajectory of a known admissible control
    let grid = square(16);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.1, 20)?;
    let truth = admissible_swirl(&grid, time, 0.8, 10);
    let phi0 = lopsided(&grid);
    let observed = solve(&phi0, &truth, law(), &kernel, &StateOptions::default())?;
    let problem = Problem {
        phi0,
        law: law(),
        kernel: &kernel,
        targets: Targets {
            tracking: TrackingTarget::Sequence(observed.phi.clone()),
            terminal: ScalarField::constant(&grid, 0.5),
        },
        weights: CostWeights::new(1.0, 0.0, 1e-6)?,
        constraints: ControlConstraints::boxed(2, -1.0, 1.0, true),
        state_options: StateOptions::default(),
    };
    let opts = OptimizerOptions {
        gtol: 1e-12,
        max_iters: 150,
        ..OptimizerOptions::default()
    };
    let zero = ControlTrajectory::zeros(&grid, time);
    let j0 = problem.cost(&zero)?;
    let inv = projected_gradient(&zero, &problem, &opts)?;
    let inv_costs: Vec<f64> = inv.iterates.iter().map(|r| r.cost).collect();
    let ratio = inv.final_cost() / j0;
    let inv_vi = vi_residual(&inv.control, &inv.gradient, &problem.constraints, 50, 2)?;
    let inv_ok = ratio <= 0.1 && monotone(&inv_costs) && inv_vi >= -1e-6;

    verdict(
        reg_ok && inv_ok,
        format!(
            "regularization: |v| {reg_norm:.1e}, monotone {}, vi {reg_vi:.1e}; inverse: J/J(0) {ratio:.2e} after {} iterations ({:?}), monotone {}, vi {inv_vi:.2e} (limit -1e-6)",
            monotone(&reg_costs),
            inv.iterates.len() - 1,
            inv.reason,
            monotone(&inv_costs)
        ),
    )
}

fn c9_stability() -> Result<Verdict> {
    let grid = square(16);
    let kernel = Kernel::build(&gaussian(), &grid)?;
    let time = TimeGrid::new(0.02, 20)?;
    let a = admissible_swirl(&grid, time, 0.5, 11);
    let h = ControlTrajectory::steady(time, random_solenoidal(&grid, 0.3, 12)?);
    let phi0 = lopsided(&grid);
    let mut ratios = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3] {
        let b = a.lin_comb(1.0, &h, eps);
        ratios.push(stability_ratio(&a, &b, &phi0, law(), &kernel, &StateOptions::default())?);
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        lo > 0.0 && hi / lo <= 2.0,
        format!("ratios {:.4e} {:.4e} {:.4e}, spread {:.3} (limit 2)", ratios[0], ratios[1], ratios[2], hi / lo),
    )
}

fn c10_local_limit() -> Result<Verdict> {
    let grid = square(128);
    let (amp, width) = (1.0, 0.01);
    let spec = KernelSpec::Gaussian { amplitude: amp, width };
    let s = 0.12;
    let phi = ScalarField::from_fn(&grid, |x| (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / (s * s)).exp());
    // sigma_2 = pi a w^2 for a exp(-r^2/w); int |grad exp(-r^2/s^2)|^2 = pi
    let local = 0.5 * PI * amp * width * width * PI;
    let mut finest = None;
    let mut m = 1;
    loop {
        match local_limit_energy(&spec, m, &phi) {
            Ok(e) => finest = Some((m, e)),
            Err(Error::Unresolved(_)) => break,
            Err(e) => return Err(e),
        }
        m += 1;
    }
    let (m, e) = finest.ok_or_else(|| Error::Unresolved("no resolved scaling".into()))?;
    let relerr = (e - local).abs() / local;
    verdict(
        relerr <= 0.1,
        format!("finest resolved scaling m = {m}: energy {e:.6e} vs local {local:.6e}, relative gap {relerr:.2e} (limit 0.1)"),
    )
}

fn c11_projection() -> Result<Verdict> {
    let grid = square(16);
    let time = TimeGrid::new(1.0, 3)?;
    let cons = ControlConstraints::boxed(2, -0.5, 0.5, true);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut raw = || -> Result<ControlTrajectory> {
        let slices = (0..time.steps())
            .map(|_| {
                VectorField::from_components(
                    (0..2)
                        .map(|_| {
                            let noise = ScalarField::from_values(
                                &grid,
                                (0..grid.len()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                            )?;
                            Ok(random_smooth(&grid, &mut rng, 5).add(&noise))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ControlTrajectory::new(time, slices)
    };
    let (mut box_err, mut div, mut bnd, mut idem, mut expand) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..20 {
        let (a, b) = (raw()?, raw()?);
        let pa = project_admissible(&a, &cons)?.control;
        let pb = project_admissible(&b, &cons)?.control;
        for p in [&pa, &pb] {
            box_err = box_err.max(p.slices().iter().map(|s| cons.box_violation(s)).fold(0.0, f64::max));
            div = div.max(max_divergence(p));
            bnd = bnd.max(max_boundary_value(p));
        }
        let again = project_admissible(&pa, &cons)?.control;
        idem = idem.max(again.lin_comb(1.0, &pa, -1.0).norm());
        let gap = pa.lin_comb(1.0, &pb, -1.0).norm() - a.lin_comb(1.0, &b, -1.0).norm();
        expand = expand.max(gap);
    }
    let ok = box_err <= 0.0 && div <= 1e-8 && bnd == 0.0 && idem <= 1e-10 && expand <= 0.0;
    verdict(
        ok,
        format!(
            "box violation {box_err:.1e}, |div|_L2 {div:.2e}, boundary {bnd:.1e}, idempotence {idem:.2e}, max(|Pa-Pb| - |a-b|) {expand:.2e} over 20 pairs"
        ),
    )
}

type Check = fn() -> Result<Verdict>;

fn main() -> ExitCode {
    let checks: [(&str, Check, Option<u64>); 11] = [
        ("convolution oracle", c1_convolution, Some(5)),
        ("mass conservation", c2_mass, Some(30)),
        ("separation", c3_separation, None),
        ("homogeneous fixed point", c4_fixed_point, None),
        ("linearized Taylor test", c5_taylor, Some(60)),
        ("discrete transpose", c6_transpose, None),
        ("gradient exactness", c7_gradient, Some(120)),
        ("optimizer certificate", c8_optimizer, Some(300)),
        ("stability boundedness", c9_stability, None),
        ("local limit", c10_local_limit, Some(60)),
        ("projection correctness", c11_projection, None),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (mut passed, detail) = match result {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let mut timing = format!("{:.2}s", elapsed.as_secs_f64());
        if let Some(limit) = budget {
            timing.push_str(&format!(" of {limit}s"));
            if elapsed > Duration::from_secs(*limit) {
                passed = false;
            }
        }
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<24} {}  {detail} [{timing}]",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of {} criteria passed", checks.len() - failures, checks.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

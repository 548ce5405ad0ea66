//! Tracking-type cost, its reduced gradient, the admissible set and a
//! projected-gradient optimizer.
//!
//! The discrete cost is
//!
//! ```text
//! J = beta1/2 sum_{n<N} dt ||phi_n - phiQ_n||^2 + beta2/2 ||phi_N - phiOmega||^2
//!   + beta3/2 sum_{n<N} dt ||v_n||^2
//! ```
//!
//! and controls are paired with `<a, b> = sum_n dt <a_n, b_n>`. Under that
//! pairing the gradient is `g_n = beta3 v_n - p'_n grad(phi_n)` with `p'` the
//! solved adjoint of [`crate::adjoint::AdjointTrajectory`].

mod optimizer;
mod projection;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointTrajectory, Targets};
use crate::error::{Error, Result};
use crate::grid::{gradient, ScalarField, VectorField};
use crate::kernel::Kernel;
use crate::linearized::check_aligned;
use crate::state::{solve, ControlTrajectory, MaterialLaw, StateOptions, StateTrajectory};

pub use optimizer::{projected_gradient, IterateRecord, OptimizerOptions, OptimizerReport, StopReason};
pub use projection::{
    max_boundary_value, max_divergence, project_admissible, Bound, ControlConstraints, Projected,
    ProjectionOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl CostWeights {
    pub fn new(beta1: f64, beta2: f64, beta3: f64) -> Result<Self> {
        let w = CostWeights { beta1, beta2, beta3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta1, self.beta2, self.beta3];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidParameter(format!("cost weights must be nonnegative: {all:?}")));
        }
        if all.iter().all(|&b| b == 0.0) {
            return Err(Error::InvalidParameter("all cost weights are zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub terminal: f64,
    pub control: f64,
}

/// Tracking contribution of step `n` (before the `beta1 / 2` factor).
fn tracking_term(state: &StateTrajectory, targets: &Targets, n: usize) -> f64 {
    let r = state.phi[n].sub(targets.tracking_at(n));
    state.time.dt() * r.inner(&r)
}

pub fn cost(
    state: &StateTrajectory,
    ctrl: &ControlTrajectory,
    targets: &Targets,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    check_aligned(state, ctrl)?;
    targets.check(state.grid(), state.time)?;
    let steps = state.time.steps();
    let tracking = if weights.beta1 != 0.0 {
        0.5 * weights.beta1 * (0..steps).map(|n| tracking_term(state, targets, n)).sum::<f64>()
    } else {
        0.0
    };
    let rt = state.phi[steps].sub(&targets.terminal);
    let terminal = 0.5 * weights.beta2 * rt.inner(&rt);
    let control = 0.5 * weights.beta3 * ctrl.inner(ctrl);
    Ok(CostBreakdown {
        total: tracking + terminal + control,
        tracking,
        terminal,
        control,
    })
}

/// Running sums of the three cost terms after each step `n = 0..=N`, for
/// diagnostics. The terminal term is evaluated as if `n` were final.
pub fn cost_so_far(
    state: &StateTrajectory,
    ctrl: &ControlTrajectory,
    targets: &Targets,
    weights: &CostWeights,
) -> Result<Vec<CostBreakdown>> {
    check_aligned(state, ctrl)?;
    targets.check(state.grid(), state.time)?;
    let dt = state.time.dt();
    let mut out = Vec::with_capacity(state.phi.len());
    let (mut tracking, mut control) = (0.0, 0.0);
    for n in 0..state.phi.len() {
        let rt = state.phi[n].sub(&targets.terminal);
        let terminal = 0.5 * weights.beta2 * rt.inner(&rt);
        out.push(CostBreakdown {
            total: tracking + terminal + control,
            tracking,
            terminal,
            control,
        });
        if n < state.time.steps() {
            tracking += 0.5 * weights.beta1 * tracking_term(state, targets, n);
            let v = ctrl.slice(n);
            control += 0.5 * weights.beta3 * dt * v.inner(v);
        }
    }
    Ok(out)
}

pub fn reduced_gradient(
    adj: &AdjointTrajectory,
    state: &StateTrajectory,
    ctrl: &ControlTrajectory,
    weights: &CostWeights,
) -> Result<ControlTrajectory> {
    check_aligned(state, ctrl)?;
    if adj.time != state.time || adj.p_solved.len() != ctrl.time().steps() {
        return Err(Error::Misaligned("adjoint and state time grids differ".into()));
    }
    let slices = (0..ctrl.time().steps())
        .map(|n| {
            let mut g = ctrl.slice(n).scaled(weights.beta3);
            g.axpy(-1.0, &gradient(&state.phi[n]).scale_by(&adj.p_solved[n]));
            g
        })
        .collect();
    ControlTrajectory::new(ctrl.time(), slices)
}

/// Pointwise candidate `max(lo, min(hi, p' d_i phi / beta3))`, the box
/// projection of the stationary control when the divergence constraint is
/// inactive.
pub fn pointwise_candidate(
    adj: &AdjointTrajectory,
    state: &StateTrajectory,
    beta3: f64,
    cons: &ControlConstraints,
) -> Result<ControlTrajectory> {
    if !(beta3 > 0.0) {
        return Err(Error::InvalidParameter("pointwise candidate needs beta3 > 0".into()));
    }
    let slices = (0..state.time.steps())
        .map(|n| {
            let raw = gradient(&state.phi[n])
                .scale_by(&adj.p_solved[n])
                .map_components(|c| c.map(|x| x / beta3));
            cons.clip(&raw)
        })
        .collect();
    ControlTrajectory::new(state.time, slices)
}

/// Everything needed to evaluate the reduced cost `v -> J(S(v), v)`.
#[derive(Debug, Clone)]
pub struct Problem<'k> {
    pub phi0: ScalarField,
    pub law: MaterialLaw,
    pub kernel: &'k Kernel,
    pub targets: Targets,
    pub weights: CostWeights,
    pub constraints: ControlConstraints,
    pub state_options: StateOptions,
}

/// Cost, state and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: CostBreakdown,
    pub state: StateTrajectory,
}

impl Problem<'_> {
    pub fn evaluate(&self, ctrl: &ControlTrajectory) -> Result<Evaluation> {
        let state = solve(&self.phi0, ctrl, self.law, self.kernel, &self.state_options)?;
        let cost = cost(&state, ctrl, &self.targets, &self.weights)?;
        Ok(Evaluation { cost, state })
    }

    pub fn cost(&self, ctrl: &ControlTrajectory) -> Result<f64> {
        Ok(self.evaluate(ctrl)?.cost.total)
    }

    pub fn adjoint(&self, eval: &Evaluation, ctrl: &ControlTrajectory) -> Result<AdjointTrajectory> {
        solve_adjoint(
            &eval.state,
            ctrl,
            &self.targets,
            (self.weights.beta1, self.weights.beta2),
            self.law,
            self.kernel,
        )
    }

    pub fn gradient_at(&self, eval: &Evaluation, ctrl: &ControlTrajectory) -> Result<ControlTrajectory> {
        let adj = self.adjoint(eval, ctrl)?;
        reduced_gradient(&adj, &eval.state, ctrl, &self.weights)
    }

    pub fn cost_and_gradient(&self, ctrl: &ControlTrajectory) -> Result<(Evaluation, ControlTrajectory)> {
        let eval = self.evaluate(ctrl)?;
        let g = self.gradient_at(&eval, ctrl)?;
        Ok((eval, g))
    }
}

/// Random admissible controls: uniform draws inside the box (clamped to a
/// finite range), then projected.
pub fn random_admissible(
    template: &ControlTrajectory,
    cons: &ControlConstraints,
    rng: &mut ChaCha8Rng,
) -> Result<ControlTrajectory> {
    let grid = template.grid().clone();
    let slices = (0..template.time().steps())
        .map(|_| {
            let comps = (0..grid.dim())
                .map(|a| {
                    let vals = (0..grid.len())
                        .map(|i| {
                            let lo = cons.lower[a].at(i).max(-1.0);
                            let hi = cons.upper[a].at(i).min(1.0).max(lo);
                            if hi > lo {
                                rng.gen_range(lo..=hi)
                            } else {
                                lo
                            }
                        })
                        .collect();
                    ScalarField::from_values(&grid, vals)
                })
                .collect::<Result<Vec<_>>>()?;
            VectorField::from_components(comps)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = ControlTrajectory::new(template.time(), slices)?;
    Ok(project_admissible(&raw, cons)?.control)
}

/// `min_k <g, v_k - vbar>` over `samples` random admissible `v_k`; a value
/// well below zero certifies that `vbar` is not stationary.
pub fn vi_residual(
    vbar: &ControlTrajectory,
    g: &ControlTrajectory,
    cons: &ControlConstraints,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if vbar.time() != g.time() {
        return Err(Error::Misaligned("gradient and control time grids differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = g.inner(vbar);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v = random_admissible(vbar, cons, &mut rng)?;
        worst = worst.min(g.inner(&v) - base);
    }
    Ok(if samples == 0 { 0.0 } else { worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, TimeGrid};
    use crate::kernel::KernelSpec;
    use crate::test_util::swirl;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup() -> (Arc<Grid>, Kernel, MaterialLaw) {
        let g = Grid::new(&[1.0, 1.0], &[12, 12]).unwrap();
        let k = Kernel::build(&KernelSpec::Gaussian { amplitude: 2.0, width: 0.03 }, &g).unwrap();
        (g, k, MaterialLaw::new(1.0).unwrap())
    }

    #[test]
    fn perfect_tracking_costs_nothing() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.01, 4).unwrap();
        let half = ScalarField::constant(&g, 0.5);
        let ctrl = ControlTrajectory::zeros(&g, time);
        let st = solve(&half, &ctrl, law, &k, &StateOptions::default()).unwrap();
        let t = Targets::constant(half.clone(), half.clone());
        let c = cost(&st, &ctrl, &t, &CostWeights::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(c.total < 1e-28, "{}", c.total);
    }

    #[test]
    fn control_term_closed_form() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(1.0, 5).unwrap();
        let half = ScalarField::constant(&g, 0.5);
        let ctrl = ControlTrajectory::steady(time, VectorField::constant(&g, &[0.3, 0.3]).unwrap());
        let st = solve(&half, &ControlTrajectory::zeros(&g, time), law, &k, &StateOptions::default()).unwrap();
        let t = Targets::constant(half.clone(), half.clone());
        let c = cost(&st, &ctrl, &t, &CostWeights::new(0.0, 0.0, 2.0).unwrap()).unwrap();
        assert!((c.total - 0.5 * 2.0 * 2.0 * 0.09).abs() < 1e-14);
    }

    #[test]
    fn cost_is_quadratic() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.02, 4).unwrap();
        let phi0 = ScalarField::from_fn(&g, |x| 0.5 + 0.2 * (PI * x[0]).cos());
        let ctrl = ControlTrajectory::steady(time, swirl(&g, 0.3));
        let st = solve(&phi0, &ctrl, law, &k, &StateOptions::default()).unwrap();
        let tq = ScalarField::from_fn(&g, |x| 0.4 + 0.1 * x[1]);
        let to = ScalarField::from_fn(&g, |x| 0.6 - 0.1 * x[0]);
        let w = CostWeights::new(0.7, 1.1, 0.3).unwrap();
        let base = cost(&st, &ctrl, &Targets::constant(tq.clone(), to.clone()), &w).unwrap().total;
        // reflecting the targets about phi doubles every residual
        let targets = Targets {
            tracking: crate::adjoint::TrackingTarget::Sequence(
                st.phi.iter().map(|p| p.lin_comb(-1.0, &tq, 2.0)).collect(),
            ),
            terminal: st.phi[4].lin_comb(-1.0, &to, 2.0),
        };
        let doubled = cost(&st, &ctrl.scaled(2.0), &targets, &w).unwrap().total;
        assert!((doubled - 4.0 * base).abs() < 1e-13 * base, "{doubled} {base}");
    }

    #[test]
    fn gradient_reduces_to_regularization() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.02, 4).unwrap();
        let phi0 = ScalarField::from_fn(&g, |x| 0.5 + 0.2 * (PI * x[0]).cos());
        let ctrl = ControlTrajectory::steady(time, swirl(&g, 0.3));
        let t = Targets::constant(ScalarField::constant(&g, 0.3), ScalarField::constant(&g, 0.3));
        let p = Problem {
            phi0,
            law,
            kernel: &k,
            targets: t,
            weights: CostWeights::new(0.0, 0.0, 0.8).unwrap(),
            constraints: ControlConstraints::boxed(2, -1.0, 1.0, true),
            state_options: StateOptions::default(),
        };
        let (_, grad) = p.cost_and_gradient(&ctrl).unwrap();
        assert_eq!(grad, ctrl.scaled(0.8));
    }

    #[test]
    fn gradient_matches_central_difference() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.04, 10).unwrap();
        let phi0 = ScalarField::from_fn(&g, |x| 0.5 + 0.25 * (PI * x[0]).cos() * (PI * x[1]).cos());
        let ctrl = ControlTrajectory::steady(time, swirl(&g, 0.2));
        let p = Problem {
            phi0,
            law,
            kernel: &k,
            targets: Targets::constant(ScalarField::constant(&g, 0.45), ScalarField::from_fn(&g, |x| 0.5 + 0.1 * x[0])),
            weights: CostWeights::new(1.0, 2.0, 1e-3).unwrap(),
            constraints: ControlConstraints::boxed(2, -1.0, 1.0, true),
            state_options: StateOptions::default(),
        };
        let (_, grad) = p.cost_and_gradient(&ctrl).unwrap();
        let h = ControlTrajectory::steady(time, swirl(&g, -0.5));
        let eps = 1e-4;
        let fd = (p.cost(&ctrl.lin_comb(1.0, &h, eps)).unwrap() - p.cost(&ctrl.lin_comb(1.0, &h, -eps)).unwrap())
            / (2.0 * eps);
        let an = grad.inner(&h);
        assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} {an}");
    }

    #[test]
    fn candidate_is_scale_invariant() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.02, 4).unwrap();
        let phi0 = ScalarField::from_fn(&g, |x| 0.5 + 0.25 * (PI * x[0]).cos());
        let ctrl = ControlTrajectory::zeros(&g, time);
        let st = solve(&phi0, &ctrl, law, &k, &StateOptions::default()).unwrap();
        let t = Targets::constant(ScalarField::constant(&g, 0.4), ScalarField::constant(&g, 0.4));
        let adj = solve_adjoint(&st, &ctrl, &t, (1.0, 1.0), law, &k).unwrap();
        let cons = ControlConstraints::boxed(2, -0.01, 0.01, false);
        let base = pointwise_candidate(&adj, &st, 0.5, &cons).unwrap();
        let mut scaled = adj.clone();
        for p in scaled.p_solved.iter_mut() {
            p.scale(4.0);
        }
        assert_eq!(pointwise_candidate(&scaled, &st, 2.0, &cons).unwrap(), base);
    }

    #[test]
    fn vi_residual_signs() {
        let (g, _, _) = setup();
        let time = TimeGrid::new(0.1, 3).unwrap();
        let cons = ControlConstraints::boxed(2, -1.0, 1.0, true);
        let zero = ControlTrajectory::zeros(&g, time);
        assert_eq!(vi_residual(&zero, &zero, &cons, 5, 1).unwrap(), 0.0);
        let g_bad = ControlTrajectory::steady(time, swirl(&g, -1.0));
        assert!(vi_residual(&zero, &g_bad, &cons, 20, 1).unwrap() < 0.0);
    }
}

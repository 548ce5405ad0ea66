use serde::{Deserialize, Serialize};

use super::{project_admissible, vi_residual, Problem};
use crate::error::Result;
use crate::state::ControlTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Stop once `||v - P(v - g)|| < gtol`.
    pub gtol: f64,
    pub max_iters: usize,
    /// Armijo constant.
    pub c1: f64,
    /// Step reduction factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// First trial step; later iterations use Barzilai-Borwein steps.
    pub initial_step: f64,
    /// Random samples for the per-iterate VI residual; 0 disables it.
    pub vi_samples: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            gtol: 1e-8,
            max_iters: 200,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            initial_step: 1.0,
            vi_samples: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_map_norm: f64,
    /// Step accepted to reach this iterate (0 for the start).
    pub step: f64,
    pub vi_residual: Option<f64>,
    pub budget_norm: f64,
    pub projection_converged: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub iterates: Vec<IterateRecord>,
    pub control: ControlTrajectory,
    pub gradient: ControlTrajectory,
    pub converged: bool,
    pub reason: StopReason,
}

impl OptimizerReport {
    pub fn final_cost(&self) -> f64 {
        self.iterates.last().map_or(f64::NAN, |r| r.cost)
    }
}

/// Projected gradient descent with Armijo backtracking along the projection
/// arc `a -> P(v - a g)` and Barzilai-Borwein trial steps.
pub fn projected_gradient(
    v0: &ControlTrajectory,
    problem: &Problem<'_>,
    opts: &OptimizerOptions,
) -> Result<OptimizerReport> {
    let cons = &problem.constraints;
    let start = project_admissible(v0, cons)?;
    let mut v = start.control;
    let mut proj_ok = start.converged;
    let (mut eval, mut g) = problem.cost_and_gradient(&v)?;
    let mut iterates = Vec::new();
    let mut step = opts.initial_step;
    let mut accepted_step = 0.0;
    let mut prev: Option<(ControlTrajectory, ControlTrajectory)> = None;

    for it in 0.. {
        let map = project_admissible(&v.lin_comb(1.0, &g, -1.0), cons)?;
        let gm = v.lin_comb(1.0, &map.control, -1.0).norm();
        let vi = if opts.vi_samples > 0 {
            Some(vi_residual(&v, &g, cons, opts.vi_samples, opts.seed.wrapping_add(it as u64))?)
        } else {
            None
        };
        iterates.push(IterateRecord {
            iteration: it,
            cost: eval.cost.total,
            grad_map_norm: gm,
            step: accepted_step,
            vi_residual: vi,
            budget_norm: v.budget_norm(),
            projection_converged: proj_ok,
        });
        log::debug!("iteration {it}: J = {:.6e}, |G| = {gm:.3e}", eval.cost.total);

        if gm < opts.gtol {
            return Ok(finish(iterates, v, g, StopReason::GradientTolerance));
        }
        if it >= opts.max_iters {
            return Ok(finish(iterates, v, g, StopReason::MaxIterations));
        }

        if let Some((pv, pg)) = &prev {
            let s = v.lin_comb(1.0, pv, -1.0);
            let y = g.lin_comb(1.0, pg, -1.0);
            let sy = s.inner(&y);
            if sy > 0.0 {
                step = (s.inner(&s) / sy).clamp(1e-12, 1e12);
            } else {
                step = (2.0 * step).min(1e12);
            }
        }

        let j0 = eval.cost.total;
        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..=opts.max_backtracks {
            let trial = project_admissible(&v.lin_comb(1.0, &g, -trial_step), cons)?;
            let dv = trial.control.lin_comb(1.0, &v, -1.0);
            let decrease = g.inner(&dv);
            if dv.norm() == 0.0 {
                break;
            }
            match problem.evaluate(&trial.control) {
                Ok(e) if e.cost.total <= j0 + opts.c1 * decrease && e.cost.total <= j0 => {
                    accepted = Some((trial, e));
                    break;
                }
                // a failed solve means the step is too long
                Ok(_) | Err(crate::Error::SeparationViolation { .. }) => {}
                Err(e) => return Err(e),
            }
            trial_step *= opts.shrink;
        }
        let Some((trial, e)) = accepted else {
            return Ok(finish(iterates, v, g, StopReason::LineSearchFailure));
        };
        let new_g = problem.gradient_at(&e, &trial.control)?;
        prev = Some((std::mem::replace(&mut v, trial.control), std::mem::replace(&mut g, new_g)));
        proj_ok = trial.converged;
        eval = e;
        accepted_step = trial_step;
        step = trial_step;
    }
    unreachable!()
}

fn finish(
    iterates: Vec<IterateRecord>,
    control: ControlTrajectory,
    gradient: ControlTrajectory,
    reason: StopReason,
) -> OptimizerReport {
    OptimizerReport {
        iterates,
        control,
        gradient,
        converged: reason == StopReason::GradientTolerance,
        reason,
    }
}

//! Backward sweep with the exact transpose of the linearized propagator.
//!
//! With `H = I - dt c0 Lap_N` and `A_n` the explicit linearized operator,
//! one backward step is
//!
//! ```text
//! p'_n = H^-1 p_{n+1},    p_n = p'_n + dt A_n^T p'_n + dt s_n
//! ```
//!
//! where transposes are taken in the trapezoid-weighted inner product and
//! `s_n = beta1 (phi_n - phiQ_n)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{
    advect_adjoint, flux_divergence_adjoint, gradient, gradient_adjoint, Grid, ScalarField,
    TimeGrid, VectorField,
};
use crate::kernel::Kernel;
use crate::linearized::check_aligned;
use crate::state::{ControlTrajectory, MaterialLaw, StatePropagator, StateTrajectory};

/// Tracking target over time: one field for every step or one per node.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackingTarget {
    Constant(ScalarField),
    Sequence(Vec<ScalarField>),
}

/// Tracking target `phiQ` and terminal target `phiOmega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub tracking: TrackingTarget,
    pub terminal: ScalarField,
}

impl Targets {
    pub fn constant(tracking: ScalarField, terminal: ScalarField) -> Self {
        Targets {
            tracking: TrackingTarget::Constant(tracking),
            terminal,
        }
    }

    pub fn tracking_at(&self, n: usize) -> &ScalarField {
        match &self.tracking {
            TrackingTarget::Constant(f) => f,
            TrackingTarget::Sequence(s) => &s[n.min(s.len() - 1)],
        }
    }

    /// Sequences need one field per time node.
    pub fn check(&self, grid: &Arc<Grid>, time: TimeGrid) -> Result<()> {
        let fields: Vec<&ScalarField> = match &self.tracking {
            TrackingTarget::Constant(f) => vec![f],
            TrackingTarget::Sequence(s) => {
                if s.len() != time.steps() + 1 {
                    return Err(Error::Misaligned(format!(
                        "tracking target has {} fields, expected {}",
                        s.len(),
                        time.steps() + 1
                    )));
                }
                s.iter().collect()
            }
        };
        if fields.iter().chain([&&self.terminal]).any(|f| !f.grid().same_as(grid)) {
            return Err(Error::GridMismatch("target grid differs from state grid"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub time: TimeGrid,
    /// `p[n]` for `n = 0..=N`.
    pub p: Vec<ScalarField>,
    /// `p_solved[n] = H^-1 p[n + 1]` for `n = 0..N`, the multiplier of the
    /// control forcing at step `n`.
    pub p_solved: Vec<ScalarField>,
}

/// `q + dt A_n^T q`.
pub fn homogeneous_adjoint(
    prop: &StatePropagator<'_>,
    q: &ScalarField,
    phi: &ScalarField,
    w: &ScalarField,
    v: &VectorField,
) -> Result<ScalarField> {
    let law = prop.law();
    let dm = phi.map(|s| law.mobility_prime(s));
    let m = phi.map(|s| law.mobility(s));
    let fq = flux_divergence_adjoint(q);
    let mut out = gradient(w).dot(&fq).mul(&dm);
    let nonlocal = prop.kernel().apply_conv(&gradient_adjoint(&fq.scale_by(&m)))?;
    out.axpy(-2.0, &nonlocal);
    out.axpy(-1.0, &advect_adjoint(v, q)?);
    out.scale(prop.dt());
    out.axpy(1.0, q);
    Ok(out)
}

/// One backward step; returns `(p_n, H^-1 p_next)`.
pub fn retreat_adjoint(
    prop: &StatePropagator<'_>,
    p_next: &ScalarField,
    phi: &ScalarField,
    w: &ScalarField,
    v: &VectorField,
    source: &ScalarField,
) -> Result<(ScalarField, ScalarField)> {
    let solved = prop.helmholtz().solve(p_next);
    let mut p = homogeneous_adjoint(prop, &solved, phi, w, v)?;
    p.axpy(prop.dt(), source);
    p.check_finite("adjoint step")?;
    Ok((p, solved))
}

#[allow(clippy::too_many_arguments)]
pub fn adjoint_step(
    p_next: &ScalarField,
    phi_n: &ScalarField,
    w_n: &ScalarField,
    v_n: &VectorField,
    law: MaterialLaw,
    kernel: &Kernel,
    dt: f64,
    source_n: &ScalarField,
) -> Result<ScalarField> {
    let prop = StatePropagator::new(law, kernel, dt)?;
    Ok(retreat_adjoint(&prop, p_next, phi_n, w_n, v_n, source_n)?.0)
}

/// Backward sweep from `p_N = beta2 (phi_N - phiOmega)`.
pub fn solve_adjoint(
    state: &StateTrajectory,
    ctrl: &ControlTrajectory,
    targets: &Targets,
    betas: (f64, f64),
    law: MaterialLaw,
    kernel: &Kernel,
) -> Result<AdjointTrajectory> {
    check_aligned(state, ctrl)?;
    let time = state.time;
    targets.check(state.grid(), time)?;
    let (beta1, beta2) = betas;
    let prop = StatePropagator::new(law, kernel, time.dt())?;
    let steps = time.steps();

    let mut p = vec![ScalarField::zeros(state.grid()); steps + 1];
    let mut p_solved = vec![ScalarField::zeros(state.grid()); steps];
    p[steps] = state.phi[steps].lin_comb(beta2, &targets.terminal, -beta2);
    p[steps].check_finite("adjoint terminal value")?;
    for n in (0..steps).rev() {
        let source = state.phi[n].lin_comb(beta1, targets.tracking_at(n), -beta1);
        let (pn, solved) = retreat_adjoint(&prop, &p[n + 1], &state.phi[n], &state.w[n], ctrl.slice(n), &source)?;
        p[n] = pn;
        p_solved[n] = solved;
    }
    Ok(AdjointTrajectory { time, p, p_solved })
}

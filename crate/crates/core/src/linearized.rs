//! Directional derivative of the discrete control-to-state map.
//!
//! The step is the exact derivative of [`crate::state::StatePropagator::advance`]
//! with respect to `(phi_n, v_n)` in direction `(xi_n, h_n)`:
//!
//! ```text
//! H xi_{n+1} = xi_n + dt [div_F(m'(phi_n) xi_n grad w_n) - 2 div_F(m(phi_n) grad conv(xi_n))
//!                         - h_n . grad(phi_n) - v_n . grad(xi_n)]
//! ```

use crate::error::{Error, Result};
use crate::grid::{advect, flux_divergence, gradient, ScalarField, TimeGrid, VectorField};
use crate::kernel::Kernel;
use crate::state::{ControlTrajectory, MaterialLaw, StatePropagator, StateTrajectory};

#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    pub time: TimeGrid,
    pub xi: Vec<ScalarField>,
}

impl LinearizedTrajectory {
    pub fn final_xi(&self) -> &ScalarField {
        self.xi.last().expect("trajectory has at least one node")
    }
}

/// Explicit right-hand side without the control forcing, `xi + dt A_n xi`.
pub fn homogeneous_rhs(
    prop: &StatePropagator<'_>,
    xi: &ScalarField,
    phi: &ScalarField,
    w: &ScalarField,
    v: &VectorField,
) -> Result<ScalarField> {
    let law = prop.law();
    let dm = phi.map(|s| law.mobility_prime(s));
    let m = phi.map(|s| law.mobility(s));
    let grad_w = gradient(w);
    let grad_c = gradient(&prop.kernel().apply_conv(xi)?);
    let flux = grad_w
        .scale_by(&dm.mul(xi))
        .lin_comb(1.0, &grad_c.scale_by(&m), -2.0);
    let mut rhs = flux_divergence(&flux);
    rhs.axpy(-1.0, &advect(v, xi)?);
    rhs.scale(prop.dt());
    rhs.axpy(1.0, xi);
    Ok(rhs)
}

/// One linearized step using a prepared propagator.
pub fn advance_linearized(
    prop: &StatePropagator<'_>,
    xi: &ScalarField,
    phi: &ScalarField,
    w: &ScalarField,
    v: &VectorField,
    h: &VectorField,
) -> Result<ScalarField> {
    let mut rhs = homogeneous_rhs(prop, xi, phi, w, v)?;
    rhs.axpy(-prop.dt(), &advect(h, phi)?);
    let next = prop.helmholtz().solve(&rhs);
    next.check_finite("linearized step")?;
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
pub fn linearized_step(
    xi_n: &ScalarField,
    phi_n: &ScalarField,
    w_n: &ScalarField,
    v_n: &VectorField,
    h_n: &VectorField,
    law: MaterialLaw,
    kernel: &Kernel,
    dt: f64,
) -> Result<ScalarField> {
    let prop = StatePropagator::new(law, kernel, dt)?;
    advance_linearized(&prop, xi_n, phi_n, w_n, v_n, h_n)
}

pub(crate) fn check_aligned(state: &StateTrajectory, ctrl: &ControlTrajectory) -> Result<()> {
    if state.time != ctrl.time() || state.phi.len() != ctrl.time().steps() + 1 {
        return Err(Error::Misaligned("state and control time grids differ".into()));
    }
    if !state.grid().same_as(ctrl.grid()) {
        return Err(Error::GridMismatch("state and control grids differ"));
    }
    Ok(())
}

/// Propagates `xi` from `xi_0 = 0` along a stored forward trajectory.
pub fn solve_linearized(
    state: &StateTrajectory,
    ctrl: &ControlTrajectory,
    h: &ControlTrajectory,
    law: MaterialLaw,
    kernel: &Kernel,
) -> Result<LinearizedTrajectory> {
    check_aligned(state, ctrl)?;
    check_aligned(state, h)?;
    let time = state.time;
    let prop = StatePropagator::new(law, kernel, time.dt())?;
    let mut xi = Vec::with_capacity(time.steps() + 1);
    xi.push(ScalarField::zeros(state.grid()));
    for n in 0..time.steps() {
        let next = advance_linearized(
            &prop,
            &xi[n],
            &state.phi[n],
            &state.w[n],
            ctrl.slice(n),
            h.slice(n),
        )?;
        xi.push(next);
    }
    Ok(LinearizedTrajectory { time, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, Grid};
    use crate::test_util::swirl;
    use crate::kernel::KernelSpec;
    use crate::state::{solve, StateOptions};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup() -> (Arc<Grid>, Kernel, MaterialLaw) {
        let g = Grid::new(&[1.0, 1.0], &[12, 12]).unwrap();
        let k = Kernel::build(&KernelSpec::Gaussian { amplitude: 2.0, width: 0.03 }, &g).unwrap();
        (g, k, MaterialLaw::new(1.0).unwrap())
    }

    #[test]
    fn zero_input_stays_zero() {
        let (g, k, law) = setup();
        let phi = ScalarField::from_fn(&g, |x| 0.5 + 0.2 * (PI * x[0]).cos());
        let w = k.apply_k(&phi).unwrap();
        let z = ScalarField::zeros(&g);
        let zv = VectorField::zeros(&g);
        let out = linearized_step(&z, &phi, &w, &swirl(&g, 0.1), &zv, law, &k, 1e-3).unwrap();
        assert!(out.max_abs() == 0.0);
        let half = ScalarField::constant(&g, 0.5);
        let w = k.apply_k(&half).unwrap();
        let out = linearized_step(&z, &half, &w, &zv, &swirl(&g, 1.0), law, &k, 1e-3).unwrap();
        assert!(out.max_abs() == 0.0);
    }

    #[test]
    fn step_is_derivative_of_state_step() {
        let (g, k, law) = setup();
        let dt = 1e-3;
        let prop = StatePropagator::new(law, &k, dt).unwrap();
        let phi = ScalarField::from_fn(&g, |x| 0.5 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).cos());
        let xi = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() + x[1]);
        let v = swirl(&g, 0.3);
        let h = swirl(&g, -0.7).lin_comb(1.0, &VectorField::constant(&g, &[0.1, 0.2]).unwrap(), 1.0);
        let w = k.apply_k(&phi).unwrap();
        let base = prop.advance(&phi, &v).unwrap();
        let lin = advance_linearized(&prop, &xi, &phi, &w, &v, &h).unwrap();
        let mut ratios = Vec::new();
        for eps in [1e-3, 1e-4] {
            let pert = prop.advance(&phi.lin_comb(1.0, &xi, eps), &v.lin_comb(1.0, &h, eps)).unwrap();
            let rem = pert.lin_comb(1.0, &base, -1.0).lin_comb(1.0, &lin, -eps);
            ratios.push(rem.max_abs() / (eps * eps));
        }
        assert!(ratios[1] < 2.0 * ratios[0] + 1e-6, "{ratios:?}");
    }

    #[test]
    fn linear_and_mass_free() {
        let (g, k, law) = setup();
        let time = TimeGrid::new(0.02, 8).unwrap();
        let phi0 = ScalarField::from_fn(&g, |x| 0.5 + 0.25 * (PI * x[0]).cos());
        let ctrl = ControlTrajectory::steady(time, swirl(&g, 0.2));
        let st = solve(&phi0, &ctrl, law, &k, &StateOptions::default()).unwrap();
        let h = ControlTrajectory::steady(time, swirl(&g, 1.0));
        let a = solve_linearized(&st, &ctrl, &h, law, &k).unwrap();
        let b = solve_linearized(&st, &ctrl, &h.scaled(2.0), law, &k).unwrap();
        for (x, y) in a.xi.iter().zip(&b.xi) {
            let diff = y.lin_comb(1.0, x, -2.0).max_abs();
            assert!(diff <= 1e-12 * y.max_abs().max(1e-300));
            assert!(integrate(x).abs() < 1e-10 * g.volume());
        }
        assert!(a.final_xi().max_abs() > 0.0);
    }
}

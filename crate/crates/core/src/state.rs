//! Forward solver for the convective nonlocal Cahn-Hilliard system in
//! flux-reduced form
//!
//! ```text
//! phi_t = c0 Lap(phi) + div(m(phi) grad w) - v . grad(phi),   w = K(phi)
//! ```
//!
//! with implicit diffusion and explicit nonlocal and convective terms:
//!
//! ```text
//! (I - dt c0 Lap_N) phi_{n+1} = phi_n + dt [div_F(m(phi_n) grad w_n) - v_n . grad(phi_n)]
//! ```
//!
//! `div_F` is the no-flux divergence, so both spatial terms integrate to zero
//! and mass is conserved up to round-off. The logarithmic potential only
//! enters the diagnostic chemical potential `mu`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    advect, flux_divergence, gradient, integrate, Grid, NeumannHelmholtz, NormKind, ScalarField,
    TimeGrid, VectorField,
};
use crate::grid::FieldNorm;
use crate::kernel::Kernel;

/// Degenerate mobility `m(s) = c0 s (1 - s)` paired with the logarithmic
/// potential `f(s) = s ln s + (1 - s) ln(1 - s)`, so that `m f'' = c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialLaw {
    pub c0: f64,
}

impl MaterialLaw {
    pub fn new(c0: f64) -> Result<Self> {
        if c0.is_finite() && c0 > 0.0 {
            Ok(MaterialLaw { c0 })
        } else {
            Err(Error::Hypothesis {
                clause: "H5",
                detail: format!("mobility scale c0 = {c0} must be positive"),
            })
        }
    }

    pub fn mobility(&self, s: f64) -> f64 {
        self.c0 * s * (1.0 - s)
    }

    pub fn mobility_prime(&self, s: f64) -> f64 {
        self.c0 * (1.0 - 2.0 * s)
    }

    pub fn potential(s: f64) -> f64 {
        s * s.ln() + (1.0 - s) * (1.0 - s).ln()
    }

    pub fn potential_prime(s: f64) -> f64 {
        (s / (1.0 - s)).ln()
    }

    pub fn potential_second(s: f64) -> f64 {
        1.0 / (s * (1.0 - s))
    }
}

/// Velocity control, piecewise constant in time: `v[n]` acts on `[t_n, t_{n+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    time: TimeGrid,
    v: Vec<VectorField>,
}

impl ControlTrajectory {
    pub fn new(time: TimeGrid, v: Vec<VectorField>) -> Result<Self> {
        if v.len() != time.steps() {
            return Err(Error::Misaligned(format!(
                "{} control slices for {} time steps",
                v.len(),
                time.steps()
            )));
        }
        if let Some(first) = v.first() {
            if v.iter().any(|s| !s.same_grid(first)) {
                return Err(Error::GridMismatch("control slices on different grids"));
            }
        }
        Ok(ControlTrajectory { time, v })
    }

    pub fn zeros(grid: &Arc<Grid>, time: TimeGrid) -> Self {
        ControlTrajectory {
            time,
            v: vec![VectorField::zeros(grid); time.steps()],
        }
    }

    /// The same field on every step.
    pub fn steady(time: TimeGrid, v: VectorField) -> Self {
        ControlTrajectory {
            time,
            v: vec![v; time.steps()],
        }
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.v[0].grid()
    }

    pub fn slices(&self) -> &[VectorField] {
        &self.v
    }

    pub fn slices_mut(&mut self) -> &mut [VectorField] {
        &mut self.v
    }

    pub fn slice(&self, n: usize) -> &VectorField {
        &self.v[n]
    }

    pub fn into_slices(self) -> Vec<VectorField> {
        self.v
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(VectorField::is_finite)
    }

    pub fn map_slices(&self, f: impl Fn(&VectorField) -> VectorField) -> ControlTrajectory {
        ControlTrajectory {
            time: self.time,
            v: self.v.iter().map(f).collect(),
        }
    }

    pub fn lin_comb(&self, a: f64, other: &ControlTrajectory, b: f64) -> ControlTrajectory {
        ControlTrajectory {
            time: self.time,
            v: self
                .v
                .iter()
                .zip(&other.v)
                .map(|(x, y)| x.lin_comb(a, y, b))
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> ControlTrajectory {
        self.map_slices(|s| s.scaled(a))
    }

    /// `int_0^T int_Omega a . b` for piecewise-constant controls.
    pub fn inner(&self, other: &ControlTrajectory) -> f64 {
        let dt = self.time.dt();
        self.v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| dt * a.inner(b))
            .sum()
    }

    /// `L2(0,T; L2)` norm.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().map(VectorField::max_abs).fold(0.0, f64::max)
    }

    /// `L2(0,T; H1)` norm.
    pub fn h1_norm(&self) -> f64 {
        let dt = self.time.dt();
        self.v
            .iter()
            .map(|s| dt * s.norm(NormKind::H1).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Finite-difference estimate of `||v_t||_{L2(0,T; L3)}`.
    pub fn time_derivative_norm(&self) -> f64 {
        self.time_derivative_norm_upto(self.v.len())
    }

    /// Same as [`Self::time_derivative_norm`] restricted to the first `steps` slices.
    pub fn time_derivative_norm_upto(&self, steps: usize) -> f64 {
        let dt = self.time.dt();
        let steps = steps.min(self.v.len());
        (1..steps)
            .map(|n| {
                let d = self.v[n].lin_comb(1.0 / dt, &self.v[n - 1], -1.0 / dt);
                dt * d.norm(NormKind::L3).powi(2)
            })
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    /// `||v||_{L2 H1} + ||v_t||_{L2 L3}`, compared against the norm budget.
    pub fn budget_norm(&self) -> f64 {
        self.h1_norm() + self.time_derivative_norm()
    }
}

/// Runtime checks applied by [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StateOptions {
    /// `phi` must stay inside `[sep_floor, 1 - sep_floor]`.
    pub sep_floor: f64,
    /// Allowed `|mass_n - mass_0|` relative to `|Omega|`.
    pub mass_tol: f64,
}

impl Default for StateOptions {
    fn default() -> Self {
        StateOptions {
            sep_floor: 1e-8,
            mass_tol: 1e-10,
        }
    }
}

/// Forward trajectory with the diagnostics recorded at every node.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub time: TimeGrid,
    pub phi: Vec<ScalarField>,
    pub w: Vec<ScalarField>,
    pub mu: Vec<ScalarField>,
    pub mass: Vec<f64>,
    pub sep_min: Vec<f64>,
    pub sep_max: Vec<f64>,
}

impl StateTrajectory {
    pub fn final_phi(&self) -> &ScalarField {
        self.phi.last().expect("trajectory has at least one node")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi[0].grid()
    }

    /// Largest `|mass_n - mass_0|`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max)
    }
}

/// Semi-implicit step operator for a fixed law, kernel and time step.
pub struct StatePropagator<'k> {
    law: MaterialLaw,
    kernel: &'k Kernel,
    dt: f64,
    helmholtz: NeumannHelmholtz,
}

impl<'k> StatePropagator<'k> {
    pub fn new(law: MaterialLaw, kernel: &'k Kernel, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {dt}")));
        }
        Ok(StatePropagator {
            law,
            kernel,
            dt,
            helmholtz: NeumannHelmholtz::new(kernel.grid(), dt * law.c0),
        })
    }

    pub fn law(&self) -> MaterialLaw {
        self.law
    }

    pub fn kernel(&self) -> &'k Kernel {
        self.kernel
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn helmholtz(&self) -> &NeumannHelmholtz {
        &self.helmholtz
    }

    /// One step from `phi` with potential `w = K(phi)` already evaluated.
    pub fn advance_with(&self, phi: &ScalarField, w: &ScalarField, v: &VectorField) -> Result<ScalarField> {
        if !v.grid().same_as(phi.grid()) || !self.kernel.grid().same_as(phi.grid()) {
            return Err(Error::GridMismatch("state step inputs on different grids"));
        }
        let law = self.law;
        let m = phi.map(|s| law.mobility(s));
        let flux = gradient(w).scale_by(&m);
        let mut rhs = flux_divergence(&flux);
        rhs.axpy(-1.0, &advect(v, phi)?);
        rhs.scale(self.dt);
        rhs.axpy(1.0, phi);
        let next = self.helmholtz.solve(&rhs);
        next.check_finite("state step")?;
        Ok(next)
    }

    /// One unchecked step (no separation test).
    pub fn advance(&self, phi: &ScalarField, v: &VectorField) -> Result<ScalarField> {
        let w = self.kernel.apply_k(phi)?;
        self.advance_with(phi, &w, v)
    }
}

fn check_separation(phi: &ScalarField, step: usize, floor: f64) -> Result<(f64, f64)> {
    let (min, max) = (phi.min(), phi.max());
    if !(min >= floor && max <= 1.0 - floor) {
        return Err(Error::SeparationViolation { step, min, max, floor });
    }
    Ok((min, max))
}

/// One semi-implicit step; fails when the result leaves the separation band.
pub fn step(
    phi_n: &ScalarField,
    v_n: &VectorField,
    law: MaterialLaw,
    kernel: &Kernel,
    dt: f64,
) -> Result<ScalarField> {
    let floor = StateOptions::default().sep_floor;
    check_separation(phi_n, 0, floor)?;
    let next = StatePropagator::new(law, kernel, dt)?.advance(phi_n, v_n)?;
    check_separation(&next, 1, floor)?;
    Ok(next)
}

/// Integrates the state system over the control's time grid.
pub fn solve(
    phi0: &ScalarField,
    ctrl: &ControlTrajectory,
    law: MaterialLaw,
    kernel: &Kernel,
    opts: &StateOptions,
) -> Result<StateTrajectory> {
    if !ctrl.grid().same_as(phi0.grid()) {
        return Err(Error::GridMismatch("control and initial state grids differ"));
    }
    phi0.check_finite("initial state")?;
    let time = ctrl.time();
    let prop = StatePropagator::new(law, kernel, time.dt())?;
    let volume = phi0.grid().volume();
    let tol = opts.mass_tol * volume;

    let cap = time.steps() + 1;
    let mut traj = StateTrajectory {
        time,
        phi: Vec::with_capacity(cap),
        w: Vec::with_capacity(cap),
        mu: Vec::with_capacity(cap),
        mass: Vec::with_capacity(cap),
        sep_min: Vec::with_capacity(cap),
        sep_max: Vec::with_capacity(cap),
    };

    let mut phi = phi0.clone();
    for n in 0..=time.steps() {
        let (min, max) = check_separation(&phi, n, opts.sep_floor)?;
        let w = kernel.apply_k(&phi)?;
        let mass = integrate(&phi);
        if let Some(&m0) = traj.mass.first() {
            let drift = (mass - m0).abs();
            if drift > tol {
                return Err(Error::MassDrift { step: n, drift, tol });
            }
        }
        let next = if n < time.steps() {
            Some(prop.advance_with(&phi, &w, ctrl.slice(n))?)
        } else {
            None
        };
        traj.mu.push(phi.zip_map(&w, |p, wv| MaterialLaw::potential_prime(p) + wv));
        traj.mass.push(mass);
        traj.sep_min.push(min);
        traj.sep_max.push(max);
        traj.w.push(w);
        traj.phi.push(phi);
        match next {
            Some(p) => phi = p,
            None => break,
        }
    }
    Ok(traj)
}

/// Heuristic step size `min(h / ||v||_inf, 0.5 / (c0 kbar))`.
pub fn suggest_time_step(grid: &Grid, law: MaterialLaw, kernel: &Kernel, v_max: f64) -> f64 {
    let h = grid.max_spacing();
    let convective = if v_max > 0.0 {
        grid.min_spacing().powi(2) / (v_max * h)
    } else {
        f64::INFINITY
    };
    let nonlocal = 0.5 / (law.c0 * kernel.kbar().max(f64::MIN_POSITIVE));
    convective.min(nonlocal)
}

/// `max_t ||phi_a - phi_b||_H1 / (int_0^T ||v_a - v_b||_L3^2)^(1/2)`, zero
/// when the controls coincide.
pub fn stability_ratio(
    ctrl_a: &ControlTrajectory,
    ctrl_b: &ControlTrajectory,
    phi0: &ScalarField,
    law: MaterialLaw,
    kernel: &Kernel,
    opts: &StateOptions,
) -> Result<f64> {
    if ctrl_a.time() != ctrl_b.time() {
        return Err(Error::Misaligned("controls on different time grids".into()));
    }
    let dt = ctrl_a.time().dt();
    let denom = ctrl_a
        .slices()
        .iter()
        .zip(ctrl_b.slices())
        .map(|(a, b)| dt * a.lin_comb(1.0, b, -1.0).norm(NormKind::L3).powi(2))
        .sum::<f64>()
        .sqrt();
    if denom < 1e-14 {
        return Ok(0.0);
    }
    let sa = solve(phi0, ctrl_a, law, kernel, opts)?;
    let sb = solve(phi0, ctrl_b, law, kernel, opts)?;
    let numer = sa
        .phi
        .iter()
        .zip(&sb.phi)
        .map(|(a, b)| a.sub(b).norm(NormKind::H1))
        .fold(0.0, f64::max);
    Ok(numer / denom)
}

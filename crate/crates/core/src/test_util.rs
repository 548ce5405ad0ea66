use std::f64::consts::PI;
use std::sync::Arc;

use crate::grid::{gradient, Grid, ScalarField, VectorField};

/// 2D div-free field from a stream function supported in `[0.25, 0.75]^2`.
pub fn swirl(g: &Arc<Grid>, amp: f64) -> VectorField {
    let b = |t: f64| {
        if (0.25..=0.75).contains(&t) {
            (2.0 * PI * (t - 0.25)).sin().powi(3)
        } else {
            0.0
        }
    };
    let psi = ScalarField::from_fn(g, |x| amp * b(x[0]) * b(x[1]));
    let gp = gradient(&psi);
    VectorField::from_components(vec![gp.component(1).clone(), gp.component(0).scaled(-1.0)]).unwrap()
}

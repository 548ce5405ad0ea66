use std::f64::consts::PI;

use super::{Kernel, KernelSpec};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Minimum number of grid spacings the scaled kernel support must span.
const MIN_RESOLVED_SPACINGS: f64 = 4.0;

/// Scaled nonlocal energy
/// `E_m = int int m^(d+2) k(m |x - y|) |phi(x) - phi(y)|^2 dy dx`.
///
/// As `m` grows this tends to `(sigma_d / 2) int |grad phi|^2` for smooth
/// `phi` supported away from the boundary.
pub fn local_limit_energy(spec: &KernelSpec, m_scale: u32, phi: &ScalarField) -> Result<f64> {
    if m_scale == 0 {
        return Err(Error::InvalidParameter("m_scale must be at least 1".into()));
    }
    let grid = phi.grid();
    let scaled = spec.scaled_for_limit(m_scale as f64, grid.dim())?;
    let radius = scaled
        .effective_radius()
        .ok_or_else(|| Error::Unresolved("kernel has unbounded support".into()))?;
    if radius < MIN_RESOLVED_SPACINGS * grid.max_spacing() {
        return Err(Error::Unresolved(format!(
            "scaled support {radius:.3e} spans fewer than {MIN_RESOLVED_SPACINGS} spacings of {:.3e}",
            grid.max_spacing()
        )));
    }
    let kernel = Kernel::build(&scaled, grid)?;
    // sum_ij w_i w_j k_ij (phi_i - phi_j)^2 = 2 <phi^2, k*1> - 2 <phi, k*phi>
    let c_one = kernel.apply_conv(&ScalarField::constant(grid, 1.0))?;
    let c_phi = kernel.apply_conv(phi)?;
    let phi_sq = phi.mul(phi);
    Ok(2.0 * (phi_sq.inner(&c_one) - phi.inner(&c_phi)))
}

/// `sigma_d = (2/d) int_{R^d} k(|z|) |z|^2 dz`, by radial Simpson quadrature.
pub fn sigma_constant(spec: &KernelSpec, dim: usize) -> Result<f64> {
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => return Err(Error::InvalidParameter(format!("dimension {dim}"))),
    };
    let upper = match *spec {
        KernelSpec::Newton { .. } => {
            return Err(Error::InvalidParameter(
                "newton kernel has no finite second moment".into(),
            ))
        }
        // exp(-r^2 / width) < 1e-16 beyond this radius
        KernelSpec::Gaussian { width, .. } => (width * 37.0).sqrt(),
        KernelSpec::Mollifier { radius, .. } => radius,
    };
    let intervals = 20_000;
    let h = upper / intervals as f64;
    let f = |r: f64| spec.eval(r) * r.powi(dim as i32 + 1);
    let mut sum = f(0.0) + f(upper);
    for i in 1..intervals {
        let r = i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(r);
    }
    let moment = surface * sum * h / 3.0;
    Ok(2.0 / dim as f64 * moment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn gaussian_sigma_closed_form() {
        // int exp(-|z|^2/c) |z|^2 dz = (d c / 2) (pi c)^(d/2)
        let c: f64 = 0.05;
        let spec = KernelSpec::Gaussian { amplitude: 1.3, width: c };
        for d in 1..=3 {
            let exact = 2.0 / d as f64 * 1.3 * (d as f64 * c / 2.0) * (PI * c).powf(d as f64 / 2.0);
            let got = sigma_constant(&spec, d).unwrap();
            assert!((got - exact).abs() < 1e-10 * exact, "d={d}: {got} vs {exact}");
        }
    }

    #[test]
    fn constant_phi_has_zero_energy() {
        let g = Grid::new(&[1.0, 1.0], &[33, 33]).unwrap();
        let spec = KernelSpec::Gaussian { amplitude: 1.0, width: 0.01 };
        let phi = ScalarField::constant(&g, 0.4);
        for m in [1, 2] {
            let e = local_limit_energy(&spec, m, &phi).unwrap();
            assert!(e.abs() < 1e-12, "{e}");
        }
    }

    #[test]
    fn energy_linear_in_amplitude() {
        let g = Grid::new(&[1.0, 1.0], &[33, 33]).unwrap();
        let spec = KernelSpec::Gaussian { amplitude: 1.0, width: 0.01 };
        let phi = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() * x[1]);
        let e1 = local_limit_energy(&spec, 1, &phi).unwrap();
        let e2 = local_limit_energy(&spec.with_amplitude_scaled(2.0), 1, &phi).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-12 * e1.abs());
    }

    #[test]
    fn unresolved_and_newton_rejected() {
        let g = Grid::new(&[1.0, 1.0], &[17, 17]).unwrap();
        let phi = ScalarField::constant(&g, 0.5);
        let spec = KernelSpec::Gaussian { amplitude: 1.0, width: 0.01 };
        assert!(matches!(local_limit_energy(&spec, 64, &phi), Err(Error::Unresolved(_))));
        let newton = KernelSpec::Newton { kappa: 1.0, cutoff: 0.0 };
        assert!(local_limit_energy(&newton, 1, &phi).is_err());
        assert!(sigma_constant(&newton, 2).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative level below which a kernel tail counts as outside its support.
const TAIL_LEVEL: f64 = 1e-6;

/// Radial interaction kernel `k(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `kappa / |x|`, optionally capped at `kappa / cutoff`.
    Newton {
        kappa: f64,
        #[serde(default)]
        cutoff: f64,
    },
    /// `amplitude * exp(-|x|^2 / width)`.
    Gaussian { amplitude: f64, width: f64 },
    /// `amplitude * exp(-1 / (1 - (|x|/radius)^2))` inside the ball, zero outside.
    Mollifier { amplitude: f64, radius: f64 },
}

impl KernelSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Newton { .. } => "newton",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Mollifier { .. } => "mollifier",
        }
    }

    /// Checks parameters, and mollifier support against the box.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("kernel {name} must be positive, got {v}")))
            }
        };
        match *self {
            KernelSpec::Newton { kappa, cutoff } => {
                positive("kappa", kappa)?;
                if !(cutoff.is_finite() && cutoff >= 0.0) {
                    return Err(Error::InvalidParameter(format!("newton cutoff {cutoff}")));
                }
                if grid.dim() == 1 && cutoff == 0.0 {
                    return Err(Error::InvalidParameter(
                        "newton kernel is not integrable in one dimension without a cutoff".into(),
                    ));
                }
            }
            KernelSpec::Gaussian { amplitude, width } => {
                positive("amplitude", amplitude)?;
                positive("width", width)?;
            }
            KernelSpec::Mollifier { amplitude, radius } => {
                positive("amplitude", amplitude)?;
                positive("radius", radius)?;
                let min_extent = grid.extents().iter().cloned().fold(f64::INFINITY, f64::min);
                if radius > min_extent {
                    return Err(Error::InvalidParameter(format!(
                        "mollifier radius {radius} exceeds the smallest extent {min_extent}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Kernel value at distance `r > 0`.
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::Newton { kappa, cutoff } => kappa / r.max(cutoff),
            KernelSpec::Gaussian { amplitude, width } => amplitude * (-r * r / width).exp(),
            KernelSpec::Mollifier { amplitude, radius } => {
                let s = r / radius;
                if s < 1.0 {
                    amplitude * (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Value assigned to the zero displacement on a lattice with spacing `h`.
    ///
    /// Newton: mean of `kappa/|x|` over the cell `prod [-h_i/2, h_i/2]`,
    /// capped by the cutoff when one is set.
    pub fn self_value(&self, spacing: &[f64]) -> f64 {
        match *self {
            KernelSpec::Newton { kappa, cutoff } => {
                let cap = if cutoff > 0.0 { kappa / cutoff } else { f64::INFINITY };
                let avg = match spacing.len() {
                    1 => f64::INFINITY,
                    _ => kappa * inverse_distance_cell_mean(spacing),
                };
                avg.min(cap)
            }
            KernelSpec::Gaussian { amplitude, .. } => amplitude,
            KernelSpec::Mollifier { amplitude, .. } => amplitude * (-1.0f64).exp(),
        }
    }

    /// Radius beyond which the kernel is negligible, `None` for Newton.
    pub fn effective_radius(&self) -> Option<f64> {
        match *self {
            KernelSpec::Newton { .. } => None,
            KernelSpec::Gaussian { width, .. } => Some((width * (1.0 / TAIL_LEVEL).ln()).sqrt()),
            KernelSpec::Mollifier { radius, .. } => Some(radius),
        }
    }

    /// Same family with the amplitude multiplied by `factor`.
    pub fn with_amplitude_scaled(&self, factor: f64) -> KernelSpec {
        match *self {
            KernelSpec::Newton { kappa, cutoff } => KernelSpec::Newton {
                kappa: kappa * factor,
                cutoff,
            },
            KernelSpec::Gaussian { amplitude, width } => KernelSpec::Gaussian {
                amplitude: amplitude * factor,
                width,
            },
            KernelSpec::Mollifier { amplitude, radius } => KernelSpec::Mollifier {
                amplitude: amplitude * factor,
                radius,
            },
        }
    }

    /// `m^(d+2) k(m |z|)`, the kernel of the local-limit scaling.
    pub fn scaled_for_limit(&self, m: f64, dim: usize) -> Result<KernelSpec> {
        let amp = m.powi(dim as i32 + 2);
        match *self {
            KernelSpec::Newton { .. } => Err(Error::InvalidParameter(
                "newton kernel has no finite second moment; local limit undefined".into(),
            )),
            KernelSpec::Gaussian { amplitude, width } => Ok(KernelSpec::Gaussian {
                amplitude: amplitude * amp,
                width: width / (m * m),
            }),
            KernelSpec::Mollifier { amplitude, radius } => Ok(KernelSpec::Mollifier {
                amplitude: amplitude * amp,
                radius: radius / m,
            }),
        }
    }
}

/// Mean of `1/|x|` over the cell `prod [-h_i/2, h_i/2]` for `d` in {2, 3}.
pub(crate) fn inverse_distance_cell_mean(spacing: &[f64]) -> f64 {
    let half: Vec<f64> = spacing.iter().map(|h| 0.5 * h).collect();
    let corner = match half.len() {
        2 => corner_integral_2d(half[0], half[1]),
        3 => corner_integral_3d(half[0], half[1], half[2]),
        _ => f64::INFINITY,
    };
    // 2^d corner boxes, divided by the cell volume
    let vol: f64 = spacing.iter().product();
    corner * (1u32 << half.len()) as f64 / vol
}

/// `int_0^a int_0^b dx dy / |x|`.
fn corner_integral_2d(a: f64, b: f64) -> f64 {
    a * (b / a).asinh() + b * (a / b).asinh()
}

/// `int_0^b int_0^c dy dz / sqrt(a^2 + y^2 + z^2)`.
fn face_integral(a: f64, b: f64, c: f64) -> f64 {
    let r = (a * a + b * b + c * c).sqrt();
    b * (c / (a * a + b * b).sqrt()).asinh() + c * (b / (a * a + c * c).sqrt()).asinh()
        - a * (b * c / (a * r)).atan()
}

/// `int_[0,a]x[0,b]x[0,c] dx / |x|` via Euler's identity for degree -1
/// homogeneous integrands: the box integral is half the sum over the three
/// far faces of `(x . n) / |x|`.
fn corner_integral_3d(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a * face_integral(a, b, c) + b * face_integral(b, a, c) + c * face_integral(c, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint_mean(spacing: &[f64], m: usize) -> f64 {
        // midpoint rule on a fine sub-lattice avoids the singular point
        let d = spacing.len();
        let total = m.pow(d as u32);
        let mut sum = 0.0;
        for idx in 0..total {
            let mut r2 = 0.0;
            let mut rem = idx;
            for h in spacing {
                let k = rem % m;
                rem /= m;
                let x = -0.5 * h + (k as f64 + 0.5) * h / m as f64;
                r2 += x * x;
            }
            sum += 1.0 / r2.sqrt();
        }
        sum / total as f64
    }

    #[test]
    fn cell_mean_2d_matches_quadrature() {
        let h = [0.1, 0.15];
        let exact = inverse_distance_cell_mean(&h);
        let approx = midpoint_mean(&h, 2000);
        assert!((exact - approx).abs() / exact < 2e-3, "{exact} {approx}");
        let sq = inverse_distance_cell_mean(&[1.0, 1.0]);
        assert!((sq - 4.0 * (1.0 + 2f64.sqrt()).ln()).abs() < 1e-12);
    }

    #[test]
    fn cell_mean_3d_matches_quadrature() {
        let h = [0.1, 0.12, 0.08];
        let exact = inverse_distance_cell_mean(&h);
        let approx = midpoint_mean(&h, 200);
        assert!((exact - approx).abs() / exact < 5e-3, "{exact} {approx}");
    }

    #[test]
    fn validation_rules() {
        let g1 = Grid::new(&[1.0], &[8]).unwrap();
        let g2 = Grid::new(&[1.0, 0.5], &[8, 8]).unwrap();
        assert!(KernelSpec::Newton { kappa: 1.0, cutoff: 0.0 }.validate(&g1).is_err());
        assert!(KernelSpec::Newton { kappa: 1.0, cutoff: 0.1 }.validate(&g1).is_ok());
        assert!(KernelSpec::Gaussian { amplitude: -1.0, width: 0.1 }.validate(&g2).is_err());
        assert!(KernelSpec::Mollifier { amplitude: 1.0, radius: 0.6 }.validate(&g2).is_err());
        assert!(KernelSpec::Mollifier { amplitude: 1.0, radius: 0.4 }.validate(&g2).is_ok());
    }

    #[test]
    fn serde_tagged_form() {
        let s: KernelSpec = toml::from_str("family = \"gaussian\"\namplitude = 2.0\nwidth = 0.1\n").unwrap();
        assert_eq!(s, KernelSpec::Gaussian { amplitude: 2.0, width: 0.1 });
    }
}

//! Run configuration in TOML.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field_file::{read_scalar_on, read_vector_on};
use crate::adjoint::{Targets, TrackingTarget};
use crate::control::{Bound, ControlConstraints, CostWeights, OptimizerOptions, ProjectionOptions};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, TimeGrid, VectorField};
use crate::kernel::{Kernel, KernelSpec};
use crate::state::{suggest_time_step, ControlTrajectory, MaterialLaw, StateOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    /// Filled from the step-size heuristic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub c0: f64,
}

fn half() -> f64 {
    0.5
}

/// Named scalar profiles. `x_1` is the first coordinate and `L_1` the first
/// extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase")]
pub enum FieldProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude cos(pi x_1 / L_1)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "half")]
        mean: f64,
    },
    /// `mean + amplitude U(-1, 1)` per node.
    Random {
        amplitude: f64,
        #[serde(default = "half")]
        mean: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
    /// One file per time node (tracking target only).
    Sequence {
        paths: Vec<PathBuf>,
    },
}

impl FieldProfile {
    fn build(&self, grid: &Arc<Grid>, base: &Path, seed: u64) -> Result<ScalarField> {
        match self {
            FieldProfile::Constant { value } => Ok(ScalarField::constant(grid, *value)),
            FieldProfile::Cosine { amplitude, mean } => {
                let l = grid.extents()[0];
                Ok(ScalarField::from_fn(grid, |x| mean + amplitude * (PI * x[0] / l).cos()))
            }
            FieldProfile::Random { amplitude, mean, seed: own } => {
                let mut rng = ChaCha8Rng::seed_from_u64(own.unwrap_or(seed));
                let vals = (0..grid.len())
                    .map(|_| mean + amplitude * rng.gen_range(-1.0..1.0))
                    .collect();
                ScalarField::from_values(grid, vals)
            }
            FieldProfile::File { path } => read_scalar_on(&base.join(path), grid),
            FieldProfile::Sequence { .. } => Err(Error::Config(
                "a file sequence is only allowed for the tracking target".into(),
            )),
        }
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            FieldProfile::File { path } => vec![path.as_path()],
            FieldProfile::Sequence { paths } => paths.iter().map(PathBuf::as_path).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(flatten)]
    pub profile: FieldProfile,
    /// Required separation `kappa0 <= phi0 <= 1 - kappa0`.
    pub kappa0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub tracking: FieldProfile,
    pub terminal: FieldProfile,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            tracking: FieldProfile::Constant { value: 0.5 },
            terminal: FieldProfile::Constant { value: 0.5 },
        }
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            beta1: 1.0,
            beta2: 1.0,
            beta3: 1e-3,
        }
    }
}

/// A bound given once for every component or per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl BoundSpec {
    fn expand(&self, dim: usize) -> Result<Vec<Bound>> {
        match self {
            BoundSpec::Uniform(c) => Ok(vec![Bound::Constant(*c); dim]),
            BoundSpec::PerComponent(v) if v.len() == dim => Ok(v.iter().map(|&c| Bound::Constant(c)).collect()),
            BoundSpec::PerComponent(v) => Err(Error::Config(format!(
                "{} bound values for {dim} components",
                v.len()
            ))),
        }
    }
}

fn default_div_tol() -> f64 {
    1e-8
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub lower: BoundSpec,
    pub upper: BoundSpec,
    #[serde(default = "yes")]
    pub divergence_free: bool,
    #[serde(default = "default_div_tol")]
    pub div_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_budget: Option<f64>,
    #[serde(default)]
    pub projection: ProjectionOptions,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec {
            lower: BoundSpec::Uniform(-1.0),
            upper: BoundSpec::Uniform(1.0),
            divergence_free: true,
            div_tol: default_div_tol(),
            norm_budget: None,
            projection: ProjectionOptions::default(),
        }
    }
}

/// Initial or prescribed control, constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "lowercase")]
pub enum ControlSpec {
    Zero,
    /// Single divergence-free eddy centred in the box, peak speed `amplitude`.
    Vortex { amplitude: f64 },
    /// Vector field file replicated over every step.
    File { path: PathBuf },
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Zero
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sep_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_tol: Option<f64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Field snapshots every this many steps; 0 writes only the final state.
    #[serde(default = "one")]
    pub write_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_out(),
            write_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub material: MaterialSpec,
    pub kernel: KernelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub targets: TargetSpec,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub clause: String,
    pub passed: bool,
    pub detail: String,
}

/// Objects built from a validated configuration.
pub struct Setup {
    pub grid: Arc<Grid>,
    pub time: TimeGrid,
    pub law: MaterialLaw,
    pub kernel: Kernel,
    pub phi0: ScalarField,
    pub targets: Targets,
    pub constraints: ControlConstraints,
    pub control: ControlTrajectory,
    pub state_options: StateOptions,
}

/// Reads, validates and completes a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut cfg = RunConfig::from_toml_str(&text, &base)?;
    let checks = cfg.complete()?;
    for c in &checks {
        log::info!("{}: {} ({})", c.clause, if c.passed { "ok" } else { "VIOLATED" }, c.detail);
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base.to_path_buf();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        if self.grid.extents.len() != self.grid.nodes.len() {
            return Err(Error::Config(format!(
                "grid has {} extents but {} node counts",
                self.grid.extents.len(),
                self.grid.nodes.len()
            )));
        }
        Grid::new(&self.grid.extents, &self.grid.nodes)
    }

    pub fn state_options(&self) -> StateOptions {
        let d = StateOptions::default();
        StateOptions {
            sep_floor: self.solver.sep_floor.unwrap_or(d.sep_floor),
            mass_tol: self.solver.mass_tol.unwrap_or(d.mass_tol),
        }
    }

    fn control_field(&self, grid: &Arc<Grid>) -> Result<VectorField> {
        match &self.control {
            ControlSpec::Zero => Ok(VectorField::zeros(grid)),
            ControlSpec::Vortex { amplitude } => vortex(grid, *amplitude),
            ControlSpec::File { path } => read_vector_on(&self.base_dir.join(path), grid),
        }
    }

    /// Fills defaults that depend on other sections, then runs the
    /// hypothesis checks. Fails on the first violated clause.
    pub fn complete(&mut self) -> Result<Vec<HypothesisCheck>> {
        let grid = self.grid()?;
        for p in self
            .initial
            .profile
            .files()
            .into_iter()
            .chain(self.targets.tracking.files())
            .chain(self.targets.terminal.files())
        {
            let full = self.base_dir.join(p);
            if !full.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", full.display())));
            }
        }
        if !(self.time.horizon.is_finite() && self.time.horizon > 0.0) {
            return Err(Error::Config(format!("time horizon {} must be positive", self.time.horizon)));
        }
        let checks = self.hypotheses(&grid)?;
        if self.time.steps.is_none() {
            let law = MaterialLaw::new(self.material.c0)?;
            let kernel = Kernel::build(&self.kernel, &grid)?;
            let vmax = self.control_field(&grid)?.max_abs();
            let dt = suggest_time_step(&grid, law, &kernel, vmax);
            let steps = (self.time.horizon / dt).ceil().max(1.0) as usize;
            log::info!("time steps not given; using {steps} (dt heuristic {dt:.3e})");
            self.time.steps = Some(steps);
        }
        Ok(checks)
    }

    /// Evaluates every checked hypothesis clause, failing on the first violation.
    pub fn hypotheses(&self, grid: &Arc<Grid>) -> Result<Vec<HypothesisCheck>> {
        let mut out = Vec::new();
        let mut record = |clause: &'static str, ok: bool, detail: String| -> Result<()> {
            out.push(HypothesisCheck {
                clause: clause.to_string(),
                passed: ok,
                detail: detail.clone(),
            });
            if ok {
                Ok(())
            } else {
                Err(Error::Hypothesis { clause, detail })
            }
        };

        // admissible set: bounds ordered, zero allowed where needed
        let cons = self.constraints(grid.dim())?;
        match cons.resolve(grid) {
            Ok(_) => record("H1", true, "control bounds feasible".into())?,
            Err(e) => record("H1", false, format!("control bounds: {e}"))?,
        }
        if let Some(v) = self.constraints.norm_budget {
            record("H1", v > 0.0, format!("norm budget V = {v}"))?;
        }

        let k0 = self.initial.kappa0;
        let kappa_ok = k0 > 0.0 && k0 < 0.5;
        record("H3", kappa_ok, format!("kappa0 = {k0} in (0, 1/2)"))?;
        let phi0 = self.initial.profile.build(grid, &self.base_dir, self.seed)?;
        let (lo, hi) = (phi0.min(), phi0.max());
        let sep = lo >= k0 && hi <= 1.0 - k0 && phi0.is_finite();
        let detail = if sep {
            format!("phi0 in [{lo:.4}, {hi:.4}] within [{k0}, {}]", 1.0 - k0)
        } else if lo < k0 {
            format!("separation: min phi0 = {lo} < kappa0 = {k0}")
        } else {
            format!("separation: max phi0 = {hi} > 1 - kappa0 = {}", 1.0 - k0)
        };
        record("H3", sep, detail)?;

        record("H4", true, "logarithmic potential s ln s + (1 - s) ln(1 - s)".into())?;

        let c0 = self.material.c0;
        record("H5", c0.is_finite() && c0 > 0.0, format!("mobility scale c0 = {c0}"))?;

        match Kernel::build(&self.kernel, grid) {
            Ok(k) if k.k0().is_finite() && k.kbar().is_finite() => record(
                "H6",
                true,
                format!("{} kernel: k0 = {:.4e}, kbar = {:.4e}", self.kernel.family_name(), k.k0(), k.kbar()),
            )?,
            Ok(_) => record("H6", false, "kernel integrals are not finite".into())?,
            Err(e) => record("H6", false, e.to_string())?,
        }
        Ok(out)
    }

    pub fn constraints(&self, dim: usize) -> Result<ControlConstraints> {
        Ok(ControlConstraints {
            lower: self.constraints.lower.expand(dim)?,
            upper: self.constraints.upper.expand(dim)?,
            divergence_free: self.constraints.divergence_free,
            div_tol: self.constraints.div_tol,
            norm_budget: self.constraints.norm_budget,
            projection: self.constraints.projection,
        })
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let steps = self
            .time
            .steps
            .ok_or_else(|| Error::Config("time steps unresolved; load the config first".into()))?;
        TimeGrid::new(self.time.horizon, steps)
    }

    /// Builds every solver object the configuration describes.
    pub fn setup(&self) -> Result<Setup> {
        let grid = self.grid()?;
        let time = self.time_grid()?;
        let law = MaterialLaw::new(self.material.c0)?;
        let kernel = Kernel::build(&self.kernel, &grid)?;
        let phi0 = self.initial.profile.build(&grid, &self.base_dir, self.seed)?;
        let tracking = match &self.targets.tracking {
            FieldProfile::Sequence { paths } => TrackingTarget::Sequence(
                paths
                    .iter()
                    .map(|p| read_scalar_on(&self.base_dir.join(p), &grid))
                    .collect::<Result<_>>()?,
            ),
            other => TrackingTarget::Constant(other.build(&grid, &self.base_dir, self.seed)?),
        };
        let targets = Targets {
            tracking,
            terminal: self.targets.terminal.build(&grid, &self.base_dir, self.seed)?,
        };
        targets.check(&grid, time)?;
        let control = ControlTrajectory::steady(time, self.control_field(&grid)?);
        Ok(Setup {
            constraints: self.constraints(grid.dim())?,
            grid,
            time,
            law,
            kernel,
            phi0,
            targets,
            control,
            state_options: self.state_options(),
        })
    }
}

/// Divergence-free eddy vanishing near the walls. In 2D it comes from the
/// stream function `sin^3` bump; in 3D it rotates about the third axis.
pub fn vortex(grid: &Arc<Grid>, amplitude: f64) -> Result<VectorField> {
    if grid.dim() == 1 {
        return Ok(VectorField::zeros(grid));
    }
    let window = crate::validation::interior_window(grid, 3);
    let pots = if grid.dim() == 2 {
        vec![window]
    } else {
        vec![ScalarField::zeros(grid), ScalarField::zeros(grid), window]
    };
    let v = crate::validation::curl_field(&pots)?;
    let peak = v.max_abs();
    Ok(if peak > 0.0 { v.scaled(amplitude / peak) } else { v })
}

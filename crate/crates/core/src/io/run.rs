use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{HypothesisCheck, RunConfig};
use super::field_file::{write_field, FieldData};
use crate::control::{
    cost_so_far, project_admissible, projected_gradient, vi_residual, CostBreakdown, OptimizerReport, Problem,
};
use crate::error::{Error, Result};
use crate::kernel::{sigma_constant, Kernel};
use crate::state::{solve, ControlTrajectory, MaterialLaw, StateTrajectory};
use crate::validation::{run_suite, CheckResult, SuiteOptions};

pub const DIAGNOSTICS_HEADER: &str = "step,t,mass,min_phi,max_phi,j_tracking,j_terminal,j_control,vt_norm";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    hypotheses: &'a [HypothesisCheck],
    config: &'a RunConfig,
}

fn prepare(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    let grid = cfg.grid()?;
    let hypotheses = cfg.hypotheses(&grid)?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        hypotheses: &hypotheses,
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("manifest.toml"), text)?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

/// Writes `error.toml` describing a failed run.
pub fn write_error_record(out: &Path, err: &Error) -> Result<()> {
    fs::create_dir_all(out)?;
    let rec = ErrorRecord {
        kind: err.kind(),
        exit_code: err.exit_code(),
        message: err.to_string(),
    };
    let text = toml::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("error.toml"), text)?;
    Ok(())
}

fn diagnostics_csv(state: &StateTrajectory, ctrl: &ControlTrajectory, costs: &[CostBreakdown]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for (n, c) in costs.iter().enumerate() {
        let _ = writeln!(
            s,
            "{n},{},{},{},{},{},{},{},{}",
            state.time.time(n),
            state.mass[n],
            state.sep_min[n],
            state.sep_max[n],
            c.tracking,
            c.terminal,
            c.control,
            ctrl.time_derivative_norm_upto(n),
        );
    }
    s
}

fn snapshot_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = if every == 0 {
        Vec::new()
    } else {
        (0..=steps).step_by(every).collect()
    };
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

fn phi_path(out: &Path, n: usize) -> PathBuf {
    out.join(format!("phi_{n:05}.nlf"))
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub steps: usize,
    pub mass_drift: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub cost: CostBreakdown,
    pub files: Vec<PathBuf>,
}

/// Forward solve with the configured control. Writes `manifest.toml`,
/// `diagnostics.csv` and `phi_NNNNN.nlf` snapshots.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    prepare(out, "simulate", cfg)?;
    let setup = cfg.setup()?;
    let cons = setup.constraints.resolve(&setup.grid)?;
    if setup.control.slices().iter().any(|v| cons.box_violation(v) > 0.0) {
        log::warn!("configured control leaves the admissible box");
    }
    let state = solve(&setup.phi0, &setup.control, setup.law, &setup.kernel, &setup.state_options)?;
    let costs = cost_so_far(&state, &setup.control, &setup.targets, &cfg.weights)?;
    fs::write(out.join("diagnostics.csv"), diagnostics_csv(&state, &setup.control, &costs))?;
    let mut files = Vec::new();
    for n in snapshot_steps(setup.time.steps(), cfg.output.write_every) {
        let p = phi_path(out, n);
        write_field(&p, &FieldData::Scalar(state.phi[n].clone()))?;
        files.push(p);
    }
    Ok(SimulateSummary {
        steps: setup.time.steps(),
        mass_drift: state.mass_drift(),
        min_phi: state.sep_min.iter().copied().fold(f64::INFINITY, f64::min),
        max_phi: state.sep_max.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        cost: *costs.last().expect("at least one node"),
        files,
    })
}

#[derive(Debug, Clone)]
pub struct OptimizeSummary {
    pub report: OptimizerReport,
    pub initial_cost: f64,
    pub vi_residual: f64,
}

fn report_csv(report: &OptimizerReport) -> String {
    let mut s = String::from("iteration,cost,grad_map_norm,step,vi_residual,budget_norm,projection_converged\n");
    for r in &report.iterates {
        let vi = r.vi_residual.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{vi},{},{}",
            r.iteration, r.cost, r.grad_map_norm, r.step, r.budget_norm, r.projection_converged
        );
    }
    s
}

/// Projected-gradient optimization from the configured control. Writes
/// `report.csv`, `diagnostics.csv` of the optimal state, `control_NNNNN.nlf`
/// per step and the final `phi_final.nlf`.
pub fn run_optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeSummary> {
    prepare(out, "optimize", cfg)?;
    let setup = cfg.setup()?;
    let problem = Problem {
        phi0: setup.phi0.clone(),
        law: setup.law,
        kernel: &setup.kernel,
        targets: setup.targets.clone(),
        weights: cfg.weights,
        constraints: setup.constraints.clone(),
        state_options: setup.state_options,
    };
    let v0 = project_admissible(&setup.control, &setup.constraints)?.control;
    let report = projected_gradient(&v0, &problem, &cfg.optimizer)?;
    let initial_cost = report.iterates.first().map_or(f64::NAN, |r| r.cost);
    log::info!(
        "optimizer stopped after {} iterations ({:?}): J {initial_cost:.6e} -> {:.6e}",
        report.iterates.len() - 1,
        report.reason,
        report.final_cost()
    );
    let unconverged = report.iterates.iter().filter(|r| !r.projection_converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} iterates used a projection that stopped before reaching its tolerance");
    }
    fs::write(out.join("report.csv"), report_csv(&report))?;

    let eval = problem.evaluate(&report.control)?;
    let costs = cost_so_far(&eval.state, &report.control, &problem.targets, &cfg.weights)?;
    fs::write(out.join("diagnostics.csv"), diagnostics_csv(&eval.state, &report.control, &costs))?;
    for (n, v) in report.control.slices().iter().enumerate() {
        write_field(&out.join(format!("control_{n:05}.nlf")), &FieldData::Vector(v.clone()))?;
    }
    write_field(&out.join("phi_final.nlf"), &FieldData::Scalar(eval.state.final_phi().clone()))?;

    let samples = cfg.optimizer.vi_samples.max(1);
    let vi = vi_residual(&report.control, &report.gradient, &setup.constraints, samples, cfg.seed)?;
    Ok(OptimizeSummary {
        report,
        initial_cost,
        vi_residual: vi,
    })
}

/// Runs the oracle suite on a small grid with the configured kernel and law.
/// Writes `validation.csv`; any failed check becomes a validation error.
pub fn run_validate(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckResult>> {
    prepare(out, "validate", cfg)?;
    let opts = SuiteOptions {
        extents: cfg.grid.extents.clone(),
        kernel: cfg.kernel.clone(),
        law: MaterialLaw::new(cfg.material.c0)?,
        seed: cfg.seed,
    };
    let results = run_suite(&opts)?;
    let mut s = String::from("check,value,tolerance,passed\n");
    for r in &results {
        let _ = writeln!(s, "{},{:e},{:e},{}", r.name, r.value, r.tolerance, r.passed);
    }
    fs::write(out.join("validation.csv"), s)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(results)
    } else {
        Err(Error::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelInfo {
    pub family: &'static str,
    pub k0: f64,
    pub kbar: f64,
    /// Absent for kernels without a finite second moment.
    pub sigma: Option<f64>,
}

pub fn run_kernel_info(cfg: &RunConfig) -> Result<KernelInfo> {
    let grid = cfg.grid()?;
    let kernel = Kernel::build(&cfg.kernel, &grid)?;
    let sigma = match sigma_constant(&cfg.kernel, grid.dim()) {
        Ok(s) => Some(s),
        Err(Error::InvalidParameter(m)) => {
            log::info!("sigma_d unavailable: {m}");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(KernelInfo {
        family: cfg.kernel.family_name(),
        k0: kernel.k0(),
        kbar: kernel.kbar(),
        sigma,
    })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlch_core::io::{
    load_config, run_kernel_info, run_optimize, run_simulate, run_validate, write_error_record, RunConfig,
};
use nlch_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nlch", version, about = "Nonlocal convective Cahn-Hilliard simulation and velocity control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the state equation with the configured control.
    Simulate(Common),
    /// Optimize the velocity control.
    Optimize(Common),
    /// Run the oracle checks; exits 4 if any fails.
    Validate(Common),
    /// Print kernel constants.
    KernelInfo(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn out_dir(cfg: &RunConfig, common: &Common) -> PathBuf {
    match &common.out {
        Some(p) => p.clone(),
        None => cfg.base_dir.join(&cfg.output.dir),
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.optimizer.seed = seed;
    }
    Ok(cfg)
}

fn execute(command: &Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    match command {
        Command::Simulate(_) => {
            let s = run_simulate(cfg, out)?;
            println!("steps        {}", s.steps);
            println!("mass drift   {:.3e}", s.mass_drift);
            println!("phi range    [{:.6}, {:.6}]", s.min_phi, s.max_phi);
            println!(
                "cost         {:.6e} (tracking {:.3e}, terminal {:.3e}, control {:.3e})",
                s.cost.total, s.cost.tracking, s.cost.terminal, s.cost.control
            );
            println!("output       {}", out.display());
        }
        Command::Optimize(_) => {
            let s = run_optimize(cfg, out)?;
            let r = &s.report;
            println!("iterations   {}", r.iterates.len() - 1);
            println!("stop         {:?}", r.reason);
            println!("cost         {:.6e} -> {:.6e}", s.initial_cost, r.final_cost());
            println!("vi residual  {:.3e}", s.vi_residual);
            println!("output       {}", out.display());
        }
        Command::Validate(_) => {
            let results = run_validate(cfg, out);
            let csv = std::fs::read_to_string(out.join("validation.csv")).unwrap_or_default();
            for line in csv.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if let [name, value, tol, passed] = f[..] {
                    let mark = if passed == "true" { "pass" } else { "FAIL" };
                    let value: f64 = value.parse().unwrap_or(f64::NAN);
                    println!("{mark}  {name:<26} {value:>11.3e}  (limit {tol})");
                }
            }
            results?;
        }
        Command::KernelInfo(_) => {
            let k = run_kernel_info(cfg)?;
            println!("family   {}", k.family);
            println!("k0       {:.12e}", k.k0);
            println!("kbar     {:.12e}", k.kbar);
            match k.sigma {
                Some(s) => println!("sigma_d  {s:.12e}"),
                None => println!("sigma_d  undefined"),
            }
        }
    }
    Ok(())
}

fn fail(err: &Error, out: Option<&Path>) -> ExitCode {
    eprintln!("error[{}]: {err}", err.kind());
    if let Some(dir) = out {
        if let Err(e) = write_error_record(dir, err) {
            eprintln!("could not write error record: {e}");
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::Optimize(c) | Command::Validate(c) | Command::KernelInfo(c) => c,
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e, common.out.as_deref()),
    };
    let out = out_dir(&cfg, common);
    let writes = !matches!(cli.command, Command::KernelInfo(_));
    match execute(&cli.command, &cfg, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, writes.then_some(out.as_path())),
    }
}

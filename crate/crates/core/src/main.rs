use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cyclic_recovery::models::BUILTIN_MODELS;
use cyclic_recovery::scenario::{assemble, compare_zero_damping, run_scenario, Overrides, ScenarioConfig};
use cyclic_recovery::{Error, Result};

/// Simulate damping-induced self-recovery of unactuated cyclic variables.
#[derive(Parser)]
#[command(name = "cyclic-recovery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its metrics.
    Run(RunArgs),
    /// Check the damping conditions of a scenario without running it.
    Verify { config: PathBuf },
    /// List the built-in models.
    ListModels,
    /// Run a scenario with its damping and again with zero damping.
    CompareZeroDamping(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write the trajectory as CSV.
    #[arg(long)]
    csv: bool,
    /// Write SVG plots.
    #[arg(long)]
    plots: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            dt: self.dt,
            t_final: self.t_final,
            out_dir: self.out_dir.clone(),
            csv: self.csv,
            plots: self.plots,
        });
        Ok(cfg)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let out = run_scenario(&cfg)?;
    println!("{} ({} samples, t = {})", out.system.name, out.trajectory.len(), out.trajectory.last().t);
    print!("{}", out.metrics.render(&out.system.labels.cyclic));
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn verify(config: &PathBuf) -> Result<()> {
    let cfg = ScenarioConfig::load(config)?;
    let assembled = assemble(&cfg)?;
    println!("damping {} on {}", assembled.system.damping.label(), assembled.system.name);
    print!("{}", assembled.conditions.render());
    match assembled.conditions.first_failure() {
        None => Ok(()),
        Some((name, o)) => Err(Error::validation(format!(
            "{name} check failed at witness {:?}",
            o.witness.as_deref().unwrap_or(&[])
        ))),
    }
}

fn compare(args: &RunArgs) -> Result<()> {
    let cfg = args.load()?;
    let cmp = compare_zero_damping(&cfg)?;
    let labels = &cmp.damped.system.labels.cyclic;
    println!("with damping {}:", cmp.damped.system.damping.label());
    print!("{}", cmp.damped.metrics.render(labels));
    println!("without damping:");
    print!("{}", cmp.undamped.metrics.render(labels));
    for p in cmp.damped.written.iter().chain(&cmp.undamped.written) {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Verify { config } => verify(config),
        Command::ListModels => {
            for (name, desc) in BUILTIN_MODELS {
                println!("{name:<16} {desc}");
            }
            Ok(())
        }
        Command::CompareZeroDamping(args) => compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

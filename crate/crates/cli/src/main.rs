use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ftl_core::runner::{self, OutputFormat};
use ftl_core::scenario::{presets, ScenarioConfig};
use ftl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ftl", version, about = "Follow-the-leader particle schemes for traffic and crowd models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its snapshots, tracks and diagnostics.
    Simulate(RunArgs),
    /// Sweep the particle (and window) counts and tabulate reference errors.
    Convergence(RunArgs),
    /// Run a scenario and print its distance to the reference solution.
    Compare(RunArgs),
    /// List the built-in scenarios.
    ListPresets,
    /// Check a scenario without running it.
    Validate(ScenarioArg),
}

#[derive(Args)]
struct ScenarioArg {
    /// Preset name or path to a JSON scenario file.
    #[arg(long)]
    scenario: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Relative tolerance of the ODE integrator.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for output files; without it results go to stdout.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, value_enum, default_value = "on")]
    check_invariants: Switch,
}

impl RunArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.scenario.scenario)?;
        if let Some(n) = self.particles {
            cfg = cfg.with_particles(n);
        }
        if let Some(m) = self.windows {
            cfg = cfg.with_windows(m);
        }
        if let Some(t) = self.t_final {
            cfg.t_final = t;
        }
        if let Some(tol) = self.tol {
            cfg.evolve.integrator.rel_tol = tol;
            cfg.evolve.integrator.abs_tol = tol * 1e-3;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn format(&self) -> OutputFormat {
        match self.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn simulate(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let outcome = runner::simulate(&cfg, args.check_invariants == Switch::On)?;
    log::info!(
        "{}: {} accepted steps in {:.3} s",
        cfg.name,
        outcome.trajectory.integrator_stats().accepted,
        outcome.trajectory.wall_seconds()
    );
    if let Some(report) = &outcome.report {
        for entry in report.failures() {
            eprintln!("FAIL {}: worst {:e} (tolerance {:e}) {}", entry.name, entry.worst, entry.tolerance, entry.note.as_deref().unwrap_or(""));
        }
    }
    match &args.out_dir {
        Some(dir) => {
            for path in runner::write_bundle(&outcome, dir, args.format())? {
                println!("{}", path.display());
            }
        }
        None => println!("{}", runner::diagnostics_json(&outcome)?),
    }
    Ok(outcome.passed())
}

fn convergence(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let rows = runner::convergence(&cfg)?;
    let text = match args.format {
        Format::Csv => runner::convergence_csv(&rows),
        Format::Json => runner::convergence_json(&rows)?,
    };
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err)?;
            let name = match args.format {
                Format::Csv => "convergence.csv",
                Format::Json => "convergence.json",
            };
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io_err)?;
            println!("{}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(true)
}

fn compare(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let outcome = runner::simulate(&cfg, args.check_invariants == Switch::On)?;
    match &outcome.comparison {
        Some(c) => println!(
            "{}: L1 distance to {:?} reference on [{}, {}] at t = {}: {:.6e}",
            cfg.name, c.reference, c.domain.0, c.domain.1, c.t, c.l1_error
        ),
        None => println!("{}: no reference solution configured", cfg.name),
    }
    Ok(outcome.passed())
}

fn list_presets() {
    for p in presets() {
        println!("{:<26} {:<11} {}", p.name, p.scheme.as_str(), p.description);
    }
}

fn validate(arg: &ScenarioArg) -> Result<bool> {
    let cfg = ScenarioConfig::load(&arg.scenario)?;
    println!("{}: valid {} scenario", cfg.name, cfg.scheme.as_str());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Convergence(a) => convergence(a),
        Command::Compare(a) => compare(a),
        Command::ListPresets => {
            list_presets();
            Ok(true)
        }
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srstab::chart::BUILTIN_NAMES;
use srstab::export::{emit_plot_script, PlotKind};
use srstab::runner::{run, ExperimentConfig};
use srstab::{builtin_system, Error};

/// Sub-Riemannian stabilization experiments.
#[derive(Parser)]
#[command(name = "srstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (SRSTAB_OUT takes precedence).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Write a gnuplot script next to a CSV artifact.
    Plot {
        artifact: PathBuf,
        /// trajectory, value-slice or loci.
        #[arg(long, default_value = "trajectory")]
        kind: String,
    },
    /// Print the built-in systems.
    ListSystems,
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::Json(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => {
            let mut config = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let dir = config.output_dir(out.as_deref());
            match run(&config, &dir, jobs) {
                Ok(report) => {
                    for c in &report.checks {
                        println!("{}", c.line());
                    }
                    println!("report: {}", dir.join("report.json").display());
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Plot { artifact, kind } => {
            let result = kind.parse::<PlotKind>().and_then(|k| {
                if !artifact.is_file() {
                    return Err(Error::Config(format!("no artifact at {}", artifact.display())));
                }
                emit_plot_script(&artifact, k)
            });
            match result {
                Ok(script) => {
                    println!("{}", script.display());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::ListSystems => {
            for name in BUILTIN_NAMES {
                match builtin_system(name) {
                    Ok(s) => println!("{name}\tdim {}\trank {}", s.dim(), s.rank()),
                    Err(e) => return exit_for(&e),
                }
            }
            ExitCode::SUCCESS
        }
    }
}

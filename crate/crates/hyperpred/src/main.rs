use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperpred::config::{self, Overrides, ScenarioConfig};
use hyperpred::run::{self, EXIT_CONFIG};
use hyperpred::study;
use hyperpred_core::model::validate_model;
use hyperpred_core::Grid;

/// Predictive boundary control of hyperbolic PDE-ODE systems.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct OverrideArgs {
    /// Number of grid cells, replacing `grid.N`.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Final time, replacing `time.t_end`.
    #[arg(long)]
    t_end: Option<f64>,
    /// Skip the SVG plots.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV files, plots and a summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
        /// Output directory, replacing `output.dir`.
        #[arg(long, env = "HYPERPRED_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Run the open-loop, stabilization and tracking scenarios and report
    /// pass/fail against their criteria.
    ReproducePaper {
        #[arg(long, env = "HYPERPRED_OUT_DIR", default_value = "out/study")]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check a scenario's model and initial data against the standing
    /// assumptions without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        grid_n: Option<usize>,
    },
}

fn load(path: &Path, ov: &Overrides) -> Result<ScenarioConfig, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG as u8)
    })?;
    config::parse(&text, ov).map_err(|e| {
        eprintln!("config error in {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG as u8)
    })
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn run_scenario(path: &Path, ov: Overrides) -> ExitCode {
    let cfg = match load(path, &ov) {
        Ok(c) => c,
        Err(c) => return c,
    };
    match run::run(&cfg) {
        Ok(rep) => {
            println!("{}", rep.summary_line());
            code(rep.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            code(e.exit_code())
        }
    }
}

fn reproduce(out: &Path, ov: Overrides) -> ExitCode {
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    let outcomes = study::reproduce(out, &ov);
    let report = study::report(&outcomes, &ov);
    print!("{report}");
    let path = out.join("report.md");
    if let Err(e) = fs::write(&path, &report) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::FAILURE;
    }
    for o in outcomes.iter().filter(|o| !o.passed) {
        eprintln!("{} failed: {}", o.name, o.summary);
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn validate(path: &Path, grid_n: Option<usize>) -> ExitCode {
    let ov = Overrides {
        grid_n,
        ..Overrides::default()
    };
    let cfg = match load(path, &ov) {
        Ok(c) => c,
        Err(c) => return c,
    };
    let grid = match Grid::new(cfg.grid_n) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("config error: `grid.N`: {e}");
            return code(EXIT_CONFIG);
        }
    };
    match validate_model(&cfg.model, &cfg.initial, &grid, cfg.scenario) {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                code(EXIT_CONFIG)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            code(run::EXIT_NUMERICAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            overrides,
            out_dir,
        } => run_scenario(
            &config,
            Overrides {
                grid_n: overrides.grid_n,
                t_end: overrides.t_end,
                no_plots: overrides.no_plots,
                out_dir,
            },
        ),
        Command::ReproducePaper { out, overrides } => reproduce(
            &out,
            Overrides {
                grid_n: overrides.grid_n,
                t_end: overrides.t_end,
                no_plots: overrides.no_plots,
                out_dir: None,
            },
        ),
        Command::Validate { config, grid_n } => validate(&config, grid_n),
    }
}

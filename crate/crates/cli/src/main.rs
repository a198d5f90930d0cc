use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use pwh_cli::commands::{self, PhaseArgs, Sampling, SimulateArgs, SweepArgs, DEFAULT_GRID};
use pwh_cli::error::{exit, CliError, CliResult};
use pwh_cli::parse::{parse_grid, parse_vector};
use pwh_cli::report::{analyze, AnalyzeOptions};
use pwh_core::roa::IndexRule;

#[derive(Parser)]
#[command(name = "pwh", version, about = "Stability analysis of power-controlled Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoaModeArg {
    /// Minimum over every state index.
    #[value(name = "paper")]
    All,
    /// Minimum over power channels only.
    Refined,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria, power limits and region-of-attraction certificates.
    Analyze {
        model: PathBuf,
        /// Check the certificate on N sampled initial states.
        #[arg(long, value_name = "N")]
        validate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "paper")]
        roa_mode: RoaModeArg,
        /// Classification horizon in seconds.
        #[arg(long)]
        t_max: Option<f64>,
        /// Also write the report as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Integrate one trajectory and write it as CSV.
    Simulate {
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a set of initial states around the equilibrium.
    #[command(group(ArgGroup::new("sampling").args(["grid", "samples"])))]
    Phase {
        model: PathBuf,
        /// Grid size RxC (default 15x15).
        #[arg(long)]
        grid: Option<String>,
        /// Number of uniformly sampled initial states.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one model parameter and tabulate existence and certificates.
    Sweep {
        model: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Analyze { model, validate, seed, roa_mode, t_max, json } => {
            let doc = commands::load(&model)?;
            let rule = match roa_mode {
                RoaModeArg::All => IndexRule::All,
                RoaModeArg::Refined => IndexRule::Refined,
            };
            let report = analyze(&doc, &AnalyzeOptions { validate, seed, rule, t_max })?;
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
                std::fs::write(&path, text + "\n")
                    .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(report.to_text())
        }
        Command::Simulate { model, x0, t_end, rel_tol, out } => {
            let doc = commands::load(&model)?;
            let x0 = parse_vector(&x0)?;
            commands::simulate(&doc, &SimulateArgs { x0: &x0, t_end, rel_tol, out: &out })
        }
        Command::Phase { model, grid, samples, t_max, out, svg, seed } => {
            let sampling = match (grid, samples) {
                (Some(g), _) => {
                    let (r, c) = parse_grid(&g)?;
                    Sampling::Grid(r, c)
                }
                (None, Some(n)) => Sampling::Random(n),
                (None, None) => Sampling::Grid(DEFAULT_GRID.0, DEFAULT_GRID.1),
            };
            let doc = commands::load(&model)?;
            commands::phase(&doc, &PhaseArgs { sampling, t_max, out: &out, svg: svg.as_deref(), seed })
        }
        Command::Sweep { model, param, from, to, steps, out } => {
            let doc = commands::load(&model)?;
            commands::sweep(&doc, &SweepArgs { param: &param, from, to, steps, out: &out })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

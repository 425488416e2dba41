use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sms_cli::commands::{
    diagnose_report, generate_mesh, inspect_mesh, load_problem_config, refine_mesh, save_mesh, solve, DiagnoseTarget,
};
use sms_cli::config::{ConfigError, ExperimentConfig, ExperimentId, Scale};
use sms_cli::experiments::{run_to, ExperimentError};
use sms_core::mesh::{read_mesh, Diagonal};

#[derive(Parser)]
#[command(name = "sms", version, about = "Convection-diffusion solves with SMS stabilization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagonalArg {
    Swne,
    Nwse,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, inspect or refine meshes.
    Mesh {
        #[command(subcommand)]
        action: MeshAction,
    },
    /// Solve one problem on one grid.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Uniqueness report for a regression mesh or a configured problem.
    Diagnose {
        #[arg(long, conflicts_with = "regression")]
        config: Option<PathBuf>,
        /// interior-node, isolated-element or parallel-edge
        #[arg(long)]
        regression: Option<String>,
    },
    /// Run an experiment and write its tables.
    Experiment {
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
    },
}

#[derive(Subcommand)]
enum MeshAction {
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "swne")]
        diagonal: DiagonalArg,
        /// Node displacement as a fraction of the local edge length, at most 1/3.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Inspect {
        path: PathBuf,
    },
    Refine {
        path: PathBuf,
        /// Elements to refine; all when omitted.
        #[arg(long, value_delimiter = ',')]
        elements: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Solve(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e.exit_code() {
            2 => Failure::Config(e.to_string()),
            _ => Failure::Solve(e.to_string()),
        }
    }
}

impl From<sms_core::mesh::MeshError> for Failure {
    fn from(e: sms_core::mesh::MeshError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Solve(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mesh { action } => match action {
            MeshAction::Generate { n, diagonal, perturb, seed, out } => {
                let d = match diagonal {
                    DiagonalArg::Swne => Diagonal::SwNe,
                    DiagonalArg::Nwse => Diagonal::NwSe,
                };
                let m = generate_mesh(n, d, perturb, seed)?;
                save_mesh(&m, &out)?;
                print!("{}", inspect_mesh(&m));
            }
            MeshAction::Inspect { path } => print!("{}", inspect_mesh(&read_mesh(&path)?)),
            MeshAction::Refine { path, elements, out } => {
                let m = refine_mesh(&read_mesh(&path)?, &elements)?;
                save_mesh(&m, &out)?;
                print!("{}", inspect_mesh(&m));
            }
        },
        Command::Solve { config, out } => {
            let cfg = load_problem_config(&read_text(&config)?)?;
            let res = solve(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Failure::Solve(e.to_string()))?;
            for (name, text) in &res.files {
                write_file(&out.join(name), text)?;
            }
            print!("{}", res.summary);
        }
        Command::Diagnose { config, regression } => {
            let target = match (config, regression) {
                (_, Some(r)) => DiagnoseTarget::Regression(r),
                (Some(c), None) => DiagnoseTarget::Config(load_problem_config(&read_text(&c)?)?),
                (None, None) => return Err(Failure::Config("give --config or --regression".into())),
            };
            print!("{}", diagnose_report(&target)?);
        }
        Command::Experiment { id, config, out, seed, scale } => {
            let id: ExperimentId = id.parse()?;
            let scale = scale.map(|s| match s {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            });
            let mut cfg = match config {
                Some(p) => ExperimentConfig::parse(&read_text(&p)?, Some(id), scale)?,
                None => ExperimentConfig::defaults(id, scale.unwrap_or(Scale::Desk)),
            };
            if cfg.experiment != id {
                return Err(Failure::Config(format!(
                    "config is for {} but {} was requested",
                    cfg.experiment, id
                )));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let res = run_to(&cfg, &out)?;
            for t in &res.tables {
                println!("{}: {} rows -> {}", t.name, t.rows.len(), out.join(format!("{}.csv", t.name)).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solve(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grushin_core::error::Error;

mod commands;
mod config;

use commands::{Out, Outcome, Which};
use config::{Run, RunConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

/// Solve degenerate p-Laplace problems of Grushin type on boxes and check
/// Pohozaev identities term by term.
#[derive(Parser, Debug)]
#[command(name = "pohozaev", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: the config's "output", else "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Largest accepted relative residual for `verify`.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Number of refinement levels.
    #[arg(long, global = true)]
    levels: Option<u32>,

    /// Seed of a random initial guess.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve and write the solution field and the solver trace.
    Solve,
    /// Solve and evaluate one identity.
    Verify {
        #[command(subcommand)]
        which: VerifyCmd,
    },
    /// Run a study over several grids or domains.
    Study {
        #[command(subcommand)]
        kind: StudyCmd,
    },
}

#[derive(Subcommand, Debug)]
enum VerifyCmd {
    /// Translation along x_I (1-based).
    TranslateX {
        i: usize,
    },
    /// Translation along y_J (1-based).
    TranslateY {
        j: usize,
    },
    ScaleLocal,
    ScaleGlobal,
}

#[derive(Subcommand, Debug)]
enum StudyCmd {
    Refinement,
    WholeSpace,
    Stationarity,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotConverged(_) | Error::PicardDiverged { .. } | Error::SingularWeight { .. } => {
            EXIT_SOLVER
        }
        _ => EXIT_CONFIG,
    }
}

fn axis(k: usize, name: &str) -> Result<usize, Error> {
    k.checked_sub(1)
        .ok_or_else(|| Error::Config(format!("{name} axes are numbered from 1")))
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let dir = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let run = Run::new(cfg, cli.seed)?;
    if let Some(t) = cli.threshold {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("--threshold must be >= 0, got {t}")));
        }
    }
    let levels = cli.levels.unwrap_or(run.cfg.study.levels);
    let out = Out::new(&dir)?;
    match cli.cmd {
        Cmd::Solve => commands::cmd_solve(&run, &out),
        Cmd::Verify { which } => {
            let which = match which {
                VerifyCmd::TranslateX { i } => Which::TranslateX(axis(i, "x")?),
                VerifyCmd::TranslateY { j } => Which::TranslateY(axis(j, "y")?),
                VerifyCmd::ScaleLocal => Which::ScaleLocal,
                VerifyCmd::ScaleGlobal => Which::ScaleGlobal,
            };
            commands::cmd_verify(&run, which, &out, run.threshold(cli.threshold), cli.levels)
        }
        Cmd::Study { kind } => match kind {
            StudyCmd::Refinement => commands::cmd_study_refinement(&run, &out, levels),
            StudyCmd::WholeSpace => commands::cmd_study_whole_space(&run, &out),
            StudyCmd::Stationarity => commands::cmd_study_stationarity(&run, &out, levels),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AboveThreshold(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_THRESHOLD)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use praxbench_cli::commands;
use praxbench_cli::config::GatewayMode;
use praxbench_cli::{CliError, Context, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "praxbench", version, about = "Guideline benchmark synthesis, exams and psychometric analysis")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Serve every gateway call from the configured fixture file.
    #[arg(long, global = true)]
    replay: bool,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Guideline text to structured practices.
    Extract {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Practices to scenarios, MCQs and dialogues.
    Generate {
        /// Overrides generate.n_scenarios.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Sample an exam and administer it to the roster.
    Exam {
        /// Overrides exam.n_scenarios.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Fit, screen and render every table.
    Analyze {
        /// Trial files; defaults to the exam output.
        #[arg(long)]
        trials: Vec<PathBuf>,
        /// Also draw the residual scatter as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Accuracy and null-rate tables without model fitting.
    Report {
        #[arg(long)]
        trials: Vec<PathBuf>,
    },
    /// Writes the shipped trial fixtures.
    #[command(hide = true)]
    Fixture,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::minimal(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.replay {
        config.gateway.mode = GatewayMode::Replay;
    }
    match cli.command {
        Command::Extract { input } => {
            if input.is_some() {
                config.extract.input = input;
            }
            commands::cmd_extract(&Context::new(config, cli.out_dir)?)
        }
        Command::Generate { count } => {
            if let Some(n) = count {
                config.generate.n_scenarios = n;
            }
            commands::cmd_generate(&Context::new(config, cli.out_dir)?)
        }
        Command::Exam { count } => {
            if let Some(n) = count {
                config.exam.n_scenarios = n;
            }
            commands::cmd_exam(&Context::new(config, cli.out_dir)?)
        }
        Command::Analyze { trials, svg } => commands::cmd_analyze(&Context::new(config, cli.out_dir)?, &trials, svg),
        Command::Report { trials } => commands::cmd_report(&Context::new(config, cli.out_dir)?, &trials),
        Command::Fixture => commands::cmd_fixture(&Context::new(config, cli.out_dir)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

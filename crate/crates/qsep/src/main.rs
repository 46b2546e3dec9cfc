use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsep::validate::{Mutation, ValidateOptions};
use qsep::{runner, CommonArgs};

#[derive(Parser)]
#[command(
    name = "qsep",
    version,
    about = "Symbol error probability of phase-quantized SIMO receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SEP sweep: writes points.csv and manifest.json.
    Simulate(Common),
    /// High-SNR asymptote on the configured grid: writes asymptote.csv.
    Asymptote(Common),
    /// Statistical self-checks: writes validation.json, exits 1 on failure.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Skip the full-grid bound sandwich.
        #[arg(long)]
        skip_sandwich: bool,
        /// Inject a known fault to confirm the checks catch it.
        #[arg(long, value_enum, hide = true)]
        mutate: Option<MutationArg>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = runner::WORKERS_ENV)]
    workers: Option<usize>,
    /// Asymptote factor in [1, 2].
    #[arg(long, default_value_t = qsep::DEFAULT_K)]
    k: f64,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    OffByOneQuantizer,
    ConjugateDroppedMirror,
}

impl From<Common> for CommonArgs {
    fn from(c: Common) -> Self {
        CommonArgs {
            config: c.config,
            out_dir: c.out_dir,
            workers: c.workers.unwrap_or_else(runner::default_workers),
            k: c.k,
            seed: c.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(common) => qsep::cmd_simulate(&common.into()).map(|outcome| {
            eprintln!("wrote {} grid points", outcome.points.len());
            true
        }),
        Command::Asymptote(common) => qsep::cmd_asymptote(&common.into()).map(|_| true),
        Command::Validate {
            common,
            skip_sandwich,
            mutate,
        } => {
            let options = ValidateOptions {
                sandwich: !skip_sandwich,
                mutation: mutate.map(|m| match m {
                    MutationArg::OffByOneQuantizer => Mutation::OffByOneQuantizer,
                    MutationArg::ConjugateDroppedMirror => Mutation::ConjugateDroppedMirror,
                }),
                ..ValidateOptions::default()
            };
            qsep::cmd_validate(&common.into(), &options).map(|report| {
                for check in &report.checks {
                    let verdict = if check.pass { "PASS" } else { "FAIL" };
                    eprintln!(
                        "{verdict} {} = {} ({})",
                        check.name, check.statistic, check.threshold
                    );
                }
                report.pass
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}

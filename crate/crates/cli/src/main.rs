//! `gradbal` — experiment runner for the gradient-balance training
//! laboratory.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, malformed
//! configs, unknown override keys), 2 for runtime failures (diverging
//! training, unwritable output, incomplete run directories).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gradbal_cli::config::{apply_overrides, ExperimentConfig};
use gradbal_cli::ops::{cmd_ablate, cmd_compare, cmd_run, resolve_output_dir, AblationAxis};
use gradbal_cli::CliError;

#[derive(Parser)]
#[command(
    name = "gradbal",
    version,
    about = "Gradient-balance training laboratory",
    long_about = "Trains long-tailed classifiers with and without \
                  gradient-guided loss reweighting and writes the ratio, \
                  accuracy, and weight-norm traces behind every analysis \
                  as CSV files."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration (optionally replicated over seeds) and
    /// write ratios.csv, metrics.csv, weight_norms.csv, and the resolved
    /// config.toml snapshot.
    Run(RunArgs),
    /// Summarize completed run directories side by side into compare.csv
    /// and compare.txt.
    Compare(CompareArgs),
    /// Sweep one mapping parameter (gamma, mu, or alpha) over a list of
    /// values and aggregate the cells into ablation.csv.
    Ablate(AblateArgs),
}

/// Flags shared by the subcommands that execute training runs.
#[derive(Args)]
struct ExecArgs {
    /// Experiment description (TOML). Without it, the built-in reference
    /// configuration is used.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Artifact directory. Falls back to the config's `output_dir`, then
    /// to $GRADBAL_OUTPUT_ROOT/<name>.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Shorthand for the optimizer seed (sgd.seed). Replicates still add
    /// their index on top.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for the replicate count (repeats).
    #[arg(long)]
    repeats: Option<usize>,
    /// Dotted-path overrides applied last, e.g. `method.mapping.alpha=0`
    /// or `dataset.seed=11`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ExecArgs {
    /// File → `--seed`/`--repeats` shorthands → dotted overrides, then
    /// output-dir resolution.
    fn resolve(
        &self,
        default_name: impl FnOnce(&ExperimentConfig) -> String,
    ) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.sgd.seed = seed;
        }
        if let Some(repeats) = self.repeats {
            cfg.repeats = repeats;
        }
        let cfg = apply_overrides(&cfg, &self.overrides)?;
        let out = resolve_output_dir(
            self.output_dir.as_deref(),
            cfg.output_dir.as_deref(),
            &default_name(&cfg),
        )?;
        Ok((cfg, out))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories produced by `gradbal run`.
    #[arg(required = true, value_name = "RUN_DIR")]
    runs: Vec<PathBuf>,
    /// Where compare.csv and compare.txt go. Falls back to
    /// $GRADBAL_OUTPUT_ROOT/compare.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    exec: ExecArgs,
    /// Mapping parameter to sweep.
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Values for the axis, comma-separated or repeated.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Gamma,
    Mu,
    Alpha,
}

impl From<AxisArg> for AblationAxis {
    fn from(axis: AxisArg) -> Self {
        match axis {
            AxisArg::Gamma => AblationAxis::Gamma,
            AxisArg::Mu => AblationAxis::Mu,
            AxisArg::Alpha => AblationAxis::Alpha,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args
                .exec
                .resolve(|cfg| cfg.method.method.name().to_string())?;
            cmd_run(&cfg, &out)
        }
        Command::Compare(args) => {
            let out = resolve_output_dir(args.output_dir.as_deref(), None, "compare")?;
            cmd_compare(&args.runs, &out)
        }
        Command::Ablate(args) => {
            let axis = AblationAxis::from(args.axis);
            let (cfg, out) = args.exec.resolve(|_| format!("ablate_{}", axis.key()))?;
            cmd_ablate(&cfg, axis, &args.values, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resprop_cli::presets::{catalog, find, Study};
use resprop_cli::{analyze, fetch, load_config, plot, runner, CliError};

#[derive(Parser)]
#[command(name = "resprop", version, about = "Residual-unit ablations and propagation checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file, applied on top of --preset if both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (see `resprop presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Byte-identical metrics for identical inputs (wall-clock column zeroed).
    #[arg(long)]
    deterministic: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics, checkpoints and summary.json.
    Run(ConfigArgs),
    /// Propagation checks on a fresh or checkpointed network.
    Analyze {
        #[command(flatten)]
        args: ConfigArgs,
        /// Checkpoint written by `run`; the fresh initialization is used otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Plot metrics CSVs to one SVG.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
    /// List presets, or print one as config text.
    Presets { name: Option<String> },
    /// Print CIFAR download URLs and checksums.
    FetchData,
}

fn resolve(args: &ConfigArgs) -> Result<resprop_cli::config::ExperimentConfig, CliError> {
    let mut cfg = load_config(args.config.as_deref(), args.preset.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.run.seeds = vec![seed];
    }
    if args.deterministic {
        cfg.run.deterministic = true;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<ExitCode, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cmd {
        Command::Run(args) => {
            let cfg = resolve(&args)?;
            let summary = runner::run_experiment(&cfg, &mut stdout)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
            writeln!(
                stdout,
                "median test error {}, mean {} ± {}{}",
                fmt(summary.median_test_err),
                fmt(summary.mean_test_err),
                fmt(summary.std_test_err),
                if summary.fail { " (fail)" } else { "" }
            )?;
            writeln!(stdout, "summary written to {}", cfg.run.out_dir.join("summary.json").display())?;
            if summary.any_aborted() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Analyze { args, checkpoint } => {
            let cfg = resolve(&args)?;
            let out = args.out.clone().unwrap_or_else(|| analyze::default_out(&cfg));
            let report = analyze::analyze(&cfg, checkpoint.as_deref(), &out)?;
            write!(stdout, "{}", report.render())?;
        }
        Command::Plot { csv, out } => {
            plot::plot(&csv, &out)?;
            writeln!(stdout, "wrote {}", out.display())?;
        }
        Command::Presets { name: Some(name) } => {
            let p = find(&name).ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}")))?;
            write!(stdout, "# {}: {}\n{}", p.name, p.description, p.config.to_text())?;
        }
        Command::Presets { name: None } => {
            for p in catalog() {
                let study = match p.study {
                    Study::Shortcuts => "shortcuts",
                    Study::Activations => "activations",
                    Study::Desk => "desk",
                };
                let reference = p.reference_error.map_or(String::new(), |e| format!(" [published {e:.2}%]"));
                writeln!(stdout, "{:<30} {:<12} {}{reference}", p.name, study, p.description)?;
            }
        }
        Command::FetchData => write!(stdout, "{}", fetch::instructions())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

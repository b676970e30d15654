use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oversmooth_cli::commands::{stats_text, InspectReport};
use oversmooth_cli::{cmd_gen, cmd_inspect, cmd_stats, cmd_sweep, cmd_train, CliError, GlobalOpts};

#[derive(Parser)]
#[command(name = "oversmooth", version, about = "Train GNNs and measure oversmoothing")]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Override the model/training seed (the SBM seed for `gen`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train {
        config: PathBuf,
        /// L1-normalize feature rows before training.
        #[arg(long)]
        row_normalize: bool,
    },
    /// Run a depth × λ_w (× K) grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        row_normalize: bool,
    },
    /// Report singular values, survival probability and G-Reg of a checkpoint.
    Inspect {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// Generate an SBM dataset directory.
    Gen {
        spec: PathBuf,
        /// Destination (defaults to --out).
        out_dir: Option<PathBuf>,
    },
    /// Print dataset statistics.
    Stats {
        dataset: PathBuf,
        #[arg(long)]
        row_normalize: bool,
        #[arg(long)]
        json: bool,
    },
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut opts = GlobalOpts {
        jobs: cli.jobs,
        seed: cli.seed,
        out: cli.out,
        row_normalize: false,
    };
    match cli.command {
        Command::Train { config, row_normalize } => {
            opts.row_normalize = row_normalize;
            let s = cmd_train(&config, &opts)?;
            println!(
                "best_val_accuracy {} test_accuracy_at_best_val {} (epoch {})",
                fmt_acc(s.best_val_accuracy),
                fmt_acc(s.test_accuracy_at_best_val),
                s.best_epoch.map_or("-".into(), |e| e.to_string())
            );
        }
        Command::Sweep { config, row_normalize } => {
            opts.row_normalize = row_normalize;
            let report = cmd_sweep(&config, &opts)?;
            let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
            println!("{} cells, {failed} with failures", report.cells.len());
            for b in &report.best {
                println!(
                    "K={} lambda_w={} best depth {} val {:.4} test {:.4}",
                    b.weight_layers.map_or("L".into(), |k| k.to_string()),
                    b.lambda_w,
                    b.best_depth,
                    b.best_val_mean,
                    b.test_at_best_val_mean
                );
            }
        }
        Command::Inspect { checkpoint, threshold, json: as_json } => {
            let r: InspectReport = cmd_inspect(&checkpoint, threshold)?;
            if as_json {
                println!("{}", json(&r));
            } else {
                print!("{}", r.to_text());
            }
        }
        Command::Gen { spec, out_dir } => {
            let out = out_dir
                .or(opts.out)
                .ok_or_else(|| CliError::Usage("gen needs an output directory".into()))?;
            let m = cmd_gen(&spec, &out, opts.seed)?;
            println!("wrote {} ({} nodes) to {}", m.name, m.n, out.display());
        }
        Command::Stats { dataset, row_normalize, json: as_json } => {
            let s = cmd_stats(&dataset, row_normalize)?;
            if as_json {
                println!("{}", json(&s));
            } else {
                print!("{}", stats_text(&s));
            }
        }
    }
    Ok(())
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or("-".into(), |a| format!("{a:.4}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OVERSMOOTH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version go to stdout with status 0; usage errors are
            // configuration errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

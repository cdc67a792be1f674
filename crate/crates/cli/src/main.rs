// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Command, Request};
use error::CliError;
use output::Formats;

/// Monte Carlo simulator of a homodyne-detector blinding attack on GMCS CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "hdblind", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Named parameter preset (baseline, fig4a-r0.10, fig4a-r0.11, fig4b, fig5, fig6).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// TOML file of configuration keys, applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set detector.eta=0.55`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of pulses.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Comma-separated output formats.
    #[arg(long, default_value = "csv,json,svg", global = true)]
    format: String,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Detector output statistics versus LO power for two balance settings.
    Fig2,
    /// Analytic excess-noise contributions versus blinding ratio.
    Fig3,
    /// Quadrature scatter and estimates, linear and saturated.
    Fig4,
    /// Transmission estimate versus distance for several blinding ratios.
    Fig5,
    /// Saturated excess-noise estimate versus blinding ratio and breach points.
    Fig6,
    /// Saturation-fraction countermeasure: ROC and per-block verdicts.
    Guard,
    /// One scenario: estimates, key rate and breach flag.
    Run {
        /// Also write every pulse to batch.csv.
        #[arg(long)]
        dump: bool,
    },
}

fn request(cli: Cli) -> Result<Request, CliError> {
    let command = match cli.command {
        Cmd::Fig2 => Command::Fig2,
        Cmd::Fig3 => Command::Fig3,
        Cmd::Fig4 => Command::Fig4,
        Cmd::Fig5 => Command::Fig5,
        Cmd::Fig6 => Command::Fig6,
        Cmd::Guard => Command::Guard,
        Cmd::Run { dump } => Command::Run { dump },
    };
    let c = cli.common;
    Ok(Request {
        command,
        preset: c.preset,
        config_file: c.config,
        sets: c.sets,
        seed: c.seed,
        n: c.n,
        out: c.out,
        formats: Formats::parse(&c.format)?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match request(cli).and_then(|r| r.execute()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rfc_core::data::{gen_synthetic, Grid};
use rfc_core::metrics::Direction;
use rfc_sim::config::RunConfig;
use rfc_sim::error::{Result, SimError};
use rfc_sim::parallel::Parallel;
use rfc_sim::{csvdata, export, presets, runner};

/// Pooled federated learning simulator with a hash-chained ledger.
#[derive(Debug, Parser)]
#[command(name = "rfc-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Maximize,
    Minimize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a federation and write its output directory.
    Run {
        /// TOML run configuration. Defaults to the built-in desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario overlay: no_attack, one_pool_labelflip, one_pool_backdoor,
        /// all_pools_labelflip or all_pools_backdoor.
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate an exported chain.jsonl.
    ValidateChain { file: PathBuf },
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print final, best and avg-last-10 of every column of a records.csv.
    Summarize {
        records: PathBuf,
        /// Direction of the val_metric column.
        #[arg(long, value_enum, default_value_t = DirectionArg::Maximize)]
        val_direction: DirectionArg,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path)?,
                None => presets::desk(),
            };
            if let Some(name) = preset {
                cfg = presets::preset(&name, cfg)?;
            }
            if let Some(seed) = seed {
                cfg.federation.master_seed = seed;
            }
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            let exec = Parallel::from_env()?;
            let report = runner::run(&cfg, &exec)?;
            let rows = export::summary_table(
                &report.output.result.records,
                cfg.federation.metric.direction(),
            );
            print!("{}", export::render_summary(&rows));
            if let Some(tip) = report.output.result.chain.tip() {
                println!(
                    "chain tip {} ({} blocks)",
                    hex::encode(tip.hash),
                    report.output.result.chain.len()
                );
            }
            println!("outputs in {}", report.out_dir.display());
        }
        Command::ValidateChain { file } => {
            let chain = export::validate_chain_file(&file)?;
            let tip = chain.tip().map(|b| hex::encode(b.hash)).unwrap_or_default();
            println!("valid: {} blocks, tip {tip}", chain.len());
        }
        Command::GenData {
            out,
            classes,
            height,
            width,
            per_class,
            noise,
            seed,
        } => {
            if height * width < classes || classes == 0 || per_class == 0 {
                return Err(SimError::Config(
                    "need classes >= 1, per_class >= 1 and height * width >= classes".into(),
                ));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(SimError::Config("noise must be finite and >= 0".into()));
            }
            let data = gen_synthetic(classes, Grid { height, width }, per_class, noise, seed)?;
            csvdata::save_csv(&out, &data)?;
            println!("wrote {} examples to {}", data.len(), out.display());
        }
        Command::Summarize {
            records,
            val_direction,
        } => {
            let recs = export::read_records(&records)?;
            if recs.is_empty() {
                return Err(SimError::Config(format!(
                    "{} has no rounds",
                    records.display()
                )));
            }
            let dir = match val_direction {
                DirectionArg::Maximize => Direction::Maximize,
                DirectionArg::Minimize => Direction::Minimize,
            };
            print!(
                "{}",
                export::render_summary(&export::summary_table(&recs, dir))
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

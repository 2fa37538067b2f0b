use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dolph::experiments::{
    cmd_reconstruct, cmd_sample_many, cmd_simulate, cmd_train, ExperimentConfig,
};
use dolph::Error;

/// Phase retrieval from coded diffraction patterns with a diffusion prior.
#[derive(Debug, Parser)]
#[command(name = "dolph", version)]
struct Cli {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent cells (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize ground truth, masks and noisy measurements.
    Simulate,
    /// Run the configured method on every (noise level, seed) cell.
    Reconstruct,
    /// Draw several reconstructions for one measurement set.
    SampleMany {
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Use this seed for every sample instead of distinct seeds.
        #[arg(long)]
        force_seed: Option<u64>,
    },
    /// Train the tiny denoiser on the synthetic generator.
    Train,
    /// Print the effective config as JSON.
    PrintConfig,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    let cfg = load_config(&cli)?;
    let command = match cli.command {
        _ if cli.print_config => Command::PrintConfig,
        Some(c) => c,
        None => return Err(Error::Config("no subcommand given; see --help".into())),
    };
    match command {
        Command::PrintConfig => {
            // A closed pipe (`| head`) is not an error here.
            let _ = writeln!(std::io::stdout(), "{}", cfg.to_json_pretty());
            Ok(0)
        }
        Command::Simulate => {
            let m = cmd_simulate(&cfg)?;
            for e in &m.measurements {
                println!(
                    "input {} dB -> realized {} ({})",
                    e.input_snr_db.label(),
                    e.realized_snr,
                    e.file
                );
            }
            Ok(0)
        }
        Command::Reconstruct => {
            let s = cmd_reconstruct(&cfg, cli.jobs)?;
            for r in &s.records {
                match (&r.error, r.recon_snr_db) {
                    (None, Some(snr)) => println!(
                        "{} seed {} input {}: recon {snr:.2} dB, g {:.4}",
                        r.method,
                        r.seed,
                        r.input_snr_db,
                        r.final_g.unwrap_or(f64::NAN)
                    ),
                    (err, _) => eprintln!(
                        "{} seed {} input {}: failed: {}",
                        r.method,
                        r.seed,
                        r.input_snr_db,
                        err.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            Ok(if s.failures() > 0 { EXIT_PARTIAL } else { 0 })
        }
        Command::SampleMany { n, force_seed } => {
            let r = cmd_sample_many(&cfg, n, force_seed, cli.jobs)?;
            println!(
                "{} samples at {} dB, min pairwise distance {}",
                r.seeds.len(),
                r.input_snr_db,
                r.min_pairwise_distance
            );
            for e in r.errors.iter().flatten() {
                eprintln!("sample failed: {e}");
            }
            Ok(if r.failures() > 0 { EXIT_PARTIAL } else { 0 })
        }
        Command::Train => {
            let s = cmd_train(&cfg)?;
            println!(
                "trained {} epochs: held-out loss {:.4}, gap/pixel {}",
                s.epochs,
                s.held_out_loss,
                s.held_out_gap_per_pixel
                    .map_or_else(|| "n/a".into(), |g| format!("{g:.5}"))
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}

//! `paramp`: command-line front end for the amplifier toolkit.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical error, 4
//! infeasible synthesis.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use paramp_core::ErrorClass;

use crate::commands::Outputs;

#[derive(Parser, Debug)]
#[command(
    name = "paramp",
    version,
    about = "Broadband SNAIL parametric amplifier design and analysis"
)]
#[command(
    after_help = "Any config leaf can be overridden by dotted path, e.g. --gain.ripple_budget_db 1.0"
)]
struct Cli {
    /// Project configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Validate the configuration and print the plan without writing files.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the impedance-matching network.
    Synthesize,
    /// Synthesize the pump-port bandpass filter.
    PumpFilter,
    /// Gain profile and flat-top metrics.
    Gain {
        /// Re-centre across `gain.sweep_pump_hz`, holding the target gain.
        #[arg(long)]
        sweep_pump: bool,
        /// Gain versus input power with Stark renormalisation.
        #[arg(long)]
        compression: bool,
    },
    /// Intermodulation analysis.
    Imd {
        #[command(subcommand)]
        op: ImdOp,
    },
    /// Multiplexed dispersive readout.
    Readout {
        #[command(subcommand)]
        op: ReadoutOp,
    },
    /// Run the whole chain and write one summary JSON.
    Report,
}

#[derive(Subcommand, Debug)]
enum ImdOp {
    /// List mixing products in `imd.band_hz`.
    Enumerate,
    /// Output spectrum of the tones through the mixer and gain profile.
    Spectrum,
    /// Fit signal and product power laws to a two-tone sweep.
    Fit {
        /// Measured sweep CSV `p_in_dbm,p_signal_dbm,p_product_dbm`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Products falling in the readout channels' windows.
    Collide {
        /// Pump frequency, overriding `imd.pump_freq_hz`.
        #[arg(long)]
        pump_hz: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum ReadoutOp {
    /// Simulate heterodyne records.
    Simulate,
    /// Simulate and classify; report fidelities and crosstalk.
    Classify,
    /// Added-noise budget.
    Budget,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Synthesize => "synthesize".into(),
            Command::PumpFilter => "pump-filter".into(),
            Command::Gain {
                sweep_pump,
                compression,
            } => {
                let mut s = String::from("gain");
                if *sweep_pump {
                    s.push_str(" --sweep-pump");
                }
                if *compression {
                    s.push_str(" --compression");
                }
                s
            }
            Command::Imd { op } => format!(
                "imd {}",
                format!("{op:?}")
                    .split_whitespace()
                    .next()
                    .unwrap_or("")
                    .to_lowercase()
            ),
            Command::Readout { op } => format!("readout {}", format!("{op:?}").to_lowercase()),
            Command::Report => "report".into(),
        }
    }

    /// Artifact names the command writes, for `--dry-run`.
    fn plan(&self) -> Vec<&'static str> {
        match self {
            Command::Synthesize => vec!["synthesis.json", "matching_netlist.json"],
            Command::PumpFilter => vec![
                "pump_filter.json",
                "pump_filter_netlist.json",
                "pump_filter_sparams.csv",
            ],
            Command::Gain {
                sweep_pump,
                compression,
            } => {
                let mut v = vec!["gain_profile.csv", "gain_metrics.json"];
                if *sweep_pump {
                    v.push("tunable_sweep.json");
                }
                if *compression {
                    v.extend(["compression.csv", "compression.json"]);
                }
                v
            }
            Command::Imd { op } => match op {
                ImdOp::Enumerate => vec!["imd_products.csv", "imd_products.json"],
                ImdOp::Spectrum => vec!["imd_spectrum.csv"],
                ImdOp::Fit { .. } => vec!["imd_sweep.csv", "imd_fit.json"],
                ImdOp::Collide { .. } => vec!["collisions.json"],
            },
            Command::Readout { op } => match op {
                ReadoutOp::Simulate => vec!["readout_summary.json", "records/*.csv"],
                ReadoutOp::Classify => vec!["fidelity.json"],
                ReadoutOp::Budget => vec!["noise_budget.json"],
            },
            Command::Report => vec!["summary.json"],
        }
    }
}

fn execute(cmd: &Command, cfg: &config::ProjectConfig) -> Result<Outputs> {
    match cmd {
        Command::Synthesize => commands::synthesize(cfg),
        Command::PumpFilter => commands::pump_filter_cmd(cfg),
        Command::Gain {
            sweep_pump,
            compression,
        } => commands::gain_cmd(cfg, *sweep_pump, *compression),
        Command::Imd { op } => match op {
            ImdOp::Enumerate => commands::imd_enumerate(cfg),
            ImdOp::Spectrum => commands::imd_spectrum(cfg),
            ImdOp::Fit { input } => commands::imd_fit(cfg, input.as_deref()),
            ImdOp::Collide { pump_hz } => commands::imd_collide(cfg, *pump_hz),
        },
        Command::Readout { op } => match op {
            ReadoutOp::Simulate => commands::readout_simulate(cfg),
            ReadoutOp::Classify => commands::readout_classify(cfg),
            ReadoutOp::Budget => commands::readout_budget(cfg),
        },
        Command::Report => commands::report(cfg),
    }
}

fn write_outputs(dir: &Path, out: &Outputs) -> Result<()> {
    for (name, bytes) in &out.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PARAMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| anyhow!("PARAMP_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring worker threads")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<paramp_core::Error>() {
            return match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Infeasible => 4,
            };
        }
    }
    2
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<()> {
    configure_threads()?;
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow!("--config is required"))?;
    let cfg = config::load(path, overrides)?;
    let dir = PathBuf::from(&cfg.output.dir);
    if cli.dry_run {
        println!("config {} is valid", path.display());
        for (p, v) in overrides {
            println!("override {p} = {v}");
        }
        println!("would run: {}", cli.command.name());
        for f in cli.command.plan() {
            println!("would write: {}", dir.join(f).display());
        }
        return Ok(());
    }
    let out = execute(&cli.command, &cfg)?;
    write_outputs(&dir, &out)?;
    print!("{}", out.summary);
    println!("wrote {} files to {}", out.files.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match config::extract_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

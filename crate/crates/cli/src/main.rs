use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kjko::diagnostics::Records;
use kjko::presets::preset_ids;
use kjko::runner::{convergence_sweep, execute, Experiment};

/// Kinetic JKO particle solver for kinetic Fokker–Planck equations.
#[derive(Parser)]
#[command(name = "kjko", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one preset and write diagnostics, snapshots and a manifest.
    Run {
        #[arg(long)]
        preset: String,
        /// Override a preset default, e.g. `--set dt=0.05`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step-size convergence sweep of the time-averaged drift error.
    Sweep {
        #[arg(long)]
        preset: String,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the configuration recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the registered presets.
    Presets,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { preset, set, out } => {
            let exp = Experiment::new(&preset, &set).with_context(|| format!("resolving preset `{preset}`"))?;
            run_and_report(&exp, out)
        }
        Command::Rerun { manifest, out } => {
            let exp = Experiment::from_manifest(&manifest)
                .with_context(|| format!("reading manifest {}", manifest.display()))?;
            run_and_report(&exp, out)
        }
        Command::Sweep { preset, dts, seeds, set, out } => {
            if dts.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                bail!("step sizes must be positive");
            }
            let start = Instant::now();
            let table = convergence_sweep(&preset, &set, &dts, &seeds, Some(&out))?;
            print!("{}", table.to_csv());
            match table.slope {
                Some(k) => eprintln!("fitted order {k:.3} in {:.1?}", start.elapsed()),
                None => eprintln!("single step size, no order fitted ({:.1?})", start.elapsed()),
            }
            Ok(())
        }
        Command::Presets => {
            for id in preset_ids() {
                println!("{id}");
            }
            Ok(())
        }
    }
}

fn run_and_report(exp: &Experiment, out: PathBuf) -> Result<()> {
    let start = Instant::now();
    let run = execute(exp, Some(&out)).with_context(|| format!("running `{}`", exp.preset_id))?;
    let summary = match &run.records {
        Records::Linear(r) => r.last().map(|l| {
            let mut s = format!("t={:.3} energy={:.6}", l.time, l.energy);
            if let Some(kl) = l.kl {
                s += &format!(" kl={kl:.6}");
            }
            if let Some(d) = l.drift_error {
                s += &format!(" drift_error={d:.6}");
            }
            s
        }),
        Records::Field(r) => r.last().map(|f| format!("t={:.3} field_energy={:.6e}", f.time, f.field_energy)),
    };
    eprintln!(
        "{}: {} steps in {:.1?}; {}",
        exp.preset_id,
        run.records.len(),
        start.elapsed(),
        summary.unwrap_or_default()
    );
    eprintln!("wrote {}", out.display());
    Ok(())
}

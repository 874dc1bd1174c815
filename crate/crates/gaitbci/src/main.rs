use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaitbci::pipeline::{self, RunManifest};

/// File-based EEG decoding pipeline: synthesize data, train a model,
/// calibrate thresholds, run a closed-loop session, evaluate it, and
/// check significance with a Monte Carlo control. Every stage reads one
/// TOML manifest and writes its artifacts under the manifest's output
/// directory.
#[derive(Parser)]
#[command(name = "gaitbci", version)]
struct Cli {
    /// Path to the run manifest (TOML).
    #[arg(long, global = true, default_value = "manifest.toml")]
    manifest: PathBuf,
    /// Override the manifest's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the manifest's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic recordings declared in the manifest.
    Synth,
    /// Train a prediction model on the training session.
    Train,
    /// Suggest decoder thresholds from posterior histograms.
    Calibrate,
    /// Stream the closed-loop session through decoder and plant.
    Run,
    /// Score the session: cross-correlation, omissions, false alarms.
    Evaluate,
    /// Empirical p-value for the session score under a fitted null.
    Montecarlo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = match cli.command {
        Command::Synth => "synth",
        Command::Train => "train",
        Command::Calibrate => "calibrate",
        Command::Run => "run",
        Command::Evaluate => "evaluate",
        Command::Montecarlo => "montecarlo",
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaitbci {stage}: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> gaitbci::Result<()> {
    let mut manifest = RunManifest::load(&cli.manifest)?;
    if let Some(seed) = cli.seed {
        manifest.seed = seed;
    }
    if let Some(out) = &cli.out {
        manifest.out_dir = out.clone();
    }
    let base = RunManifest::base_dir(&cli.manifest);
    match cli.command {
        Command::Synth => {
            for path in pipeline::synth_stage(&manifest, &base)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train => {
            let (path, model) = pipeline::train_stage(&manifest, &base)?;
            let (mean, sd) = model.cv_accuracy;
            println!(
                "trained: cv accuracy {:.3} +- {:.3}, band {:.1}-{:.1} Hz, {} channels",
                mean,
                sd,
                model.band.0,
                model.band.1,
                model.retained_channels.len()
            );
            println!("wrote {}", path.display());
        }
        Command::Calibrate => {
            let cal = pipeline::calibrate_stage(&manifest, &base)?;
            println!("thresholds: T_I {:.3}, T_W {:.3}", cal.t_idle, cal.t_walk);
        }
        Command::Run => {
            let trace = pipeline::run_stage(&manifest, &base)?;
            println!("decoded {} steps", trace.states.len());
        }
        Command::Evaluate => {
            let report = pipeline::evaluate_stage(&manifest, &base)?;
            println!(
                "xcorr {:.3} at lag {:.2} s, omissions {}, false alarms {}",
                report.xcorr_max, report.lag_at_max, report.omissions, report.false_alarms
            );
        }
        Command::Montecarlo => {
            let mc = pipeline::montecarlo_stage(&manifest, &base)?;
            println!(
                "p = {:.6} over {} trials (observed max {:.3}, null max {:.3})",
                mc.p_value, mc.n_trials, mc.observed_max, mc.null_max_highest
            );
        }
    }
    Ok(())
}

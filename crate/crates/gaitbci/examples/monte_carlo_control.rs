//! Chance-level control: fit a clamped AR(1) null to the session's raw
//! posterior sequence, push simulated posteriors through the identical
//! decoder + plant path, and report how often chance beats the observed
//! cue/walking correlation.
//!
//! Run with: `cargo run --release --example monte_carlo_control`

use gaitbci::decoder::{run_stream_raw, DecoderConfig};
use gaitbci::eval::{
    calibrate, cross_correlate, cue_timeline, fit_null, monte_carlo_p,
};
use gaitbci::plant::{run_plant, walking_timeline, PlantConfig};
use gaitbci::signal::{generate_synthetic, ClassLabel, CueSchedule, SynthConfig};
use gaitbci::training::{train, TrainConfig};

fn main() -> gaitbci::Result<()> {
    let subject = |seed| SynthConfig {
        n_channels: 8,
        active_channels: vec![2, 3, 4],
        seed,
        subject_seed: Some(42),
        ..SynthConfig::default()
    };
    let train_cues = CueSchedule::alternating(ClassLabel::Idle, 15.0, 16)?;
    let train_rec = generate_synthetic(&subject(1), &train_cues)?;
    let model = train(&train_rec, &train_cues, &TrainConfig::default())?;
    let (cal_trace, _) = run_stream_raw(&train_rec, &model, &DecoderConfig::new(0.5, 0.5))?;
    let labeled: Vec<(f64, ClassLabel)> = cal_trace
        .posteriors
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, train_cues.state_at(cal_trace.time_at(i))))
        .collect();
    let cal = calibrate(&labeled)?;

    let cues = CueSchedule::alternating(ClassLabel::Idle, 60.0, 5)?;
    let session = generate_synthetic(&subject(2), &cues)?;
    let cfg = DecoderConfig::new(cal.t_idle, cal.t_walk);
    let (trace, raw) = run_stream_raw(&session, &model, &cfg)?;
    let plant = run_plant(&trace, PlantConfig::default())?;

    let n = trace.len();
    let cue_tl = cue_timeline(&cues, trace.t0, trace.step, n);
    let walk_tl = walking_timeline(plant.log(), trace.t0, trace.step, n);
    let observed = cross_correlate(&cue_tl, &walk_tl, trace.step, 30.0)?.max;
    println!("observed max correlation: {observed:.3}");

    let null = fit_null(&raw)?;
    println!(
        "fitted null: alpha {:.3}, beta {:.3} (mu {:.3}, rho {:.3})",
        null.alpha, null.beta, null.mu, null.rho
    );

    let n_trials = 10_000;
    let (p, maxima) = monte_carlo_p(
        &cues,
        observed,
        &null,
        &cfg,
        &PlantConfig::default(),
        n_trials,
        7,
    )?;
    println!("null maxima over {n_trials} trials:");
    println!("  median {:.3}", maxima[n_trials / 2]);
    println!("  highest {:.3}", maxima.last().unwrap());
    if p == 0.0 {
        println!("empirical p < {:.0e}", 1.0 / n_trials as f64);
    } else {
        println!("empirical p = {p:.4}");
    }
    Ok(())
}

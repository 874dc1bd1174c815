//! Threshold calibration: replay labeled data through the online
//! decoder, histogram the 2-s averaged posteriors per cue phase, and
//! suggest the dual thresholds T_I / T_W.
//!
//! Run with: `cargo run --release --example calibrate_thresholds`

use gaitbci::decoder::{run_stream_raw, DecoderConfig};
use gaitbci::eval::calibrate;
use gaitbci::signal::{generate_synthetic, ClassLabel, CueSchedule, SynthConfig};
use gaitbci::training::{train, TrainConfig};

fn main() -> gaitbci::Result<()> {
    let synth = SynthConfig {
        n_channels: 8,
        active_channels: vec![2, 3, 4],
        seed: 21,
        ..SynthConfig::default()
    };
    let cues = CueSchedule::alternating(ClassLabel::Idle, 15.0, 16)?;
    let rec = generate_synthetic(&synth, &cues)?;
    let model = train(&rec, &cues, &TrainConfig::default())?;

    // The averaging path ignores thresholds, so placeholders are fine
    // while collecting the calibration log.
    let (trace, _) = run_stream_raw(&rec, &model, &DecoderConfig::new(0.5, 0.5))?;
    let labeled: Vec<(f64, ClassLabel)> = trace
        .posteriors
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, cues.state_at(trace.time_at(i))))
        .collect();
    let cal = calibrate(&labeled)?;

    println!("averaged-posterior histogram (bin width 0.02):");
    let peak = cal.histogram.iter().map(|&(_, c)| c).max().unwrap_or(1).max(1);
    for &(lo, count) in &cal.histogram {
        if count == 0 {
            continue;
        }
        let bar = "#".repeat(1 + count * 40 / peak);
        println!("  [{lo:.2}, {:.2})  {bar} {count}", lo + 0.02);
    }
    println!("suggested thresholds: T_I = {:.3}, T_W = {:.3}", cal.t_idle, cal.t_walk);
    Ok(())
}

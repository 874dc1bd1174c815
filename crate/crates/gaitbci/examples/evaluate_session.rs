//! Score a closed-loop session: cue-vs-walking cross-correlation,
//! omissions, and false alarms.
//!
//! Run with: `cargo run --release --example evaluate_session`

use gaitbci::decoder::{run_stream_raw, DecoderConfig};
use gaitbci::eval::{calibrate, count_events, cross_correlate, cue_timeline};
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
    let (trace, _) = run_stream_raw(&session, &model, &cfg)?;
    let plant = run_plant(&trace, PlantConfig::default())?;

    let n = trace.len();
    let cue_tl = cue_timeline(&cues, trace.t0, trace.step, n);
    let walk_tl = walking_timeline(plant.log(), trace.t0, trace.step, n);

    let xc = cross_correlate(&cue_tl, &walk_tl, trace.step, 30.0)?;
    println!("cross-correlation curve (cue vs plant walking):");
    for &(lag, r) in xc.curve.iter().step_by(8) {
        let col = ((r.max(0.0)) * 40.0) as usize;
        println!("  lag {lag:5.2} s  {}{}  {r:+.3}", " ".repeat(col), "*");
    }
    println!("max {:.3} at lag {:.2} s", xc.max, xc.lag_at_max);

    let (omissions, false_alarms, fa_durations) =
        count_events(&cues, &walk_tl, trace.t0, trace.step)?;
    println!("omissions: {omissions}");
    println!("false alarms: {false_alarms} {fa_durations:?}");
    Ok(())
}

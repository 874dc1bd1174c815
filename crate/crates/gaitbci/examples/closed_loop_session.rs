//! Full closed-loop session: train on one recording, decode a fresh
//! session of the same subject, and let the decoded states drive the
//! gait orthosis simulation (5 s locked-in startup/shutdown, 0.25 s
//! command latency).
//!
//! Run with: `cargo run --release --example closed_loop_session`

use gaitbci::decoder::{run_stream_raw, DecoderConfig};
use gaitbci::eval::calibrate;
use gaitbci::plant::{run_plant, PlantConfig};
use gaitbci::signal::{generate_synthetic, ClassLabel, CueSchedule, SynthConfig};
use gaitbci::training::{train, TrainConfig};

fn main() -> gaitbci::Result<()> {
    // Two recordings of one subject: shared subject_seed pins the
    // per-channel gains, separate seeds vary the noise.
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
    println!("model: cv {:.1}%", 100.0 * model.cv_accuracy.0);

    // Calibrate thresholds on the training replay.
    let (cal_trace, _) = run_stream_raw(&train_rec, &model, &DecoderConfig::new(0.5, 0.5))?;
    let labeled: Vec<(f64, ClassLabel)> = cal_trace
        .posteriors
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, train_cues.state_at(cal_trace.time_at(i))))
        .collect();
    let cal = calibrate(&labeled)?;
    println!("thresholds: T_I {:.3}, T_W {:.3}", cal.t_idle, cal.t_walk);

    // The session protocol: 5 alternating 1-min epochs, Idle first.
    let session_cues = CueSchedule::alternating(ClassLabel::Idle, 60.0, 5)?;
    let session = generate_synthetic(&subject(2), &session_cues)?;
    let cfg = DecoderConfig::new(cal.t_idle, cal.t_walk);
    let (trace, _) = run_stream_raw(&session, &model, &cfg)?;

    let plant = run_plant(&trace, PlantConfig::default())?;
    println!("\ncue changes vs plant phases:");
    let mut t = 0.0;
    for (class, dur) in session_cues.entries() {
        println!("  {t:6.2} s  cue -> {class:?}");
        t += dur;
    }
    for &(at, phase) in plant.log() {
        println!("  {at:6.2} s  plant {phase}");
    }

    let transitions = trace
        .states
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count();
    println!("\n{} decoder decisions, {transitions} state transitions", trace.len());
    Ok(())
}

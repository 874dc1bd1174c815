//! Offline training: artifact rejection, band search, stratified
//! 10-fold cross-validation, model persistence.
//!
//! Run with: `cargo run --release --example train_prediction_model`

use gaitbci::signal::{generate_synthetic, ClassLabel, CueSchedule, SynthConfig};
use gaitbci::training::{train, TrainConfig};

fn main() -> gaitbci::Result<()> {
    // A small desk subject: 8 channels, rhythm suppression on 2-4.
    let synth = SynthConfig {
        n_channels: 8,
        active_channels: vec![2, 3, 4],
        seed: 21,
        ..SynthConfig::default()
    };
    let cues = CueSchedule::alternating(ClassLabel::Idle, 15.0, 16)?;
    let rec = generate_synthetic(&synth, &cues)?;

    let cfg = TrainConfig::default();
    println!(
        "training: {} folds, seed band {:?} Hz, window {} s / step {} s",
        cfg.folds, cfg.seed_band, cfg.window.length, cfg.window.step
    );
    let model = train(&rec, &cues, &cfg)?;

    println!("retained channels: {:?}", model.retained_channels);
    println!("selected band:     {:.0}-{:.0} Hz", model.band.0, model.band.1);
    println!(
        "cv accuracy:       {:.1}% +- {:.1}%",
        100.0 * model.cv_accuracy.0,
        100.0 * model.cv_accuracy.1
    );
    println!("fingerprint:       {}", &model.training_fingerprint[..16]);

    std::fs::create_dir_all("out")?;
    model.save("out/model.json".as_ref())?;
    println!("wrote out/model.json");
    Ok(())
}

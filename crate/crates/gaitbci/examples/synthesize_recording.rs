//! Generate a labeled synthetic EEG session and write it to disk.
//!
//! The generator produces 1/f background noise plus a narrowband
//! sensorimotor rhythm on every channel; on the "active" channels the
//! rhythm's band power drops by `erd_depth` during Walk cues. Same seed,
//! same bytes.
//!
//! Run with: `cargo run --release --example synthesize_recording`

use gaitbci::signal::{generate_synthetic, io, ClassLabel, CueSchedule, SynthConfig};
use gaitbci::spectral::{band_power, BinSpec};

fn main() -> gaitbci::Result<()> {
    let cfg = SynthConfig::default(); // 64 ch, 256 Hz, ERD on channels 8-12
    let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 20)?; // 10 min

    println!(
        "synthesizing {} channels at {} Hz over {:.0} s (erd_depth {})",
        cfg.n_channels,
        cfg.fs,
        cues.total_duration(),
        cfg.erd_depth
    );
    let rec = generate_synthetic(&cfg, &cues)?;

    // Sanity check the contrast the trainer will look for: 8-12 Hz band
    // power per cue phase on an active and an inactive channel.
    let bins = BinSpec::new(2.0, 8.0, 12.0);
    for ch in [cfg.active_channels[0], 0] {
        let mut power = [0.0f64; 2];
        let mut t = 0.0;
        for (class, dur) in cues.entries() {
            let a = (t * cfg.fs).round() as usize;
            let b = ((t + dur) * cfg.fs).round() as usize;
            let slice = &rec.channel(ch)[a..b];
            let s = band_power(&[slice], cfg.fs, bins)?;
            power[(*class == ClassLabel::Walk) as usize] += s.values[(0, 0)] + s.values[(1, 0)];
            t += dur;
        }
        println!(
            "channel {ch:2}: walk/idle 8-12 Hz power ratio {:.2}",
            power[1] / power[0]
        );
    }

    std::fs::create_dir_all("out")?;
    io::write_recording_binary(&rec, "out/recording.eeg".as_ref())?;
    io::write_cues(&cues, "out/recording.cues.txt".as_ref())?;
    println!("wrote out/recording.eeg and out/recording.cues.txt");
    Ok(())
}

//! Recording and cue data model plus epoch labeling.
//!
//! A [`Recording`] is a channel-major block of samples with a sampling
//! rate; a [`CueSchedule`] is the instruction track shown to the subject.
//! [`label_epochs`] aligns the two into class-labeled time intervals.

mod synth;
pub mod io;

pub use synth::{generate_synthetic, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary mental state: relaxed idling vs walking motor imagery.
///
/// The same label doubles as the decoder output state and the plant
/// command, since all three live on the same two-state axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Idle,
    Walk,
}

impl ClassLabel {
    pub fn other(self) -> Self {
        match self {
            ClassLabel::Idle => ClassLabel::Walk,
            ClassLabel::Walk => ClassLabel::Idle,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Idle => "idle",
            ClassLabel::Walk => "walk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "idle" | "i" => Ok(ClassLabel::Idle),
            "walk" | "w" => Ok(ClassLabel::Walk),
            other => Err(Error::Format(format!("unknown state label {other:?}"))),
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multichannel time-series in microvolts, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    samples: Vec<Vec<f64>>,
    fs: f64,
    channel_labels: Vec<String>,
    t0: f64,
}

impl Recording {
    pub fn new(
        samples: Vec<Vec<f64>>,
        fs: f64,
        channel_labels: Vec<String>,
        t0: f64,
    ) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::Data("recording has no channels".into()));
        }
        let n = samples[0].len();
        if samples.iter().any(|ch| ch.len() != n) {
            return Err(Error::Data("channels have unequal lengths".into()));
        }
        if channel_labels.len() != samples.len() {
            return Err(Error::Data(format!(
                "{} channel labels for {} channels",
                channel_labels.len(),
                samples.len()
            )));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("recording contains NaN or Inf samples".into()));
        }
        Ok(Self { samples, fs, channel_labels, t0 })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn channel_labels(&self) -> &[String] {
        &self.channel_labels
    }

    /// New recording keeping only the given channel indices, in order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Self> {
        let mut samples = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let ch = self
                .samples
                .get(i)
                .ok_or_else(|| Error::Config(format!("channel index {i} out of range")))?;
            samples.push(ch.clone());
            labels.push(self.channel_labels[i].clone());
        }
        Recording::new(samples, self.fs, labels, self.t0)
    }

    /// New recording keeping only samples in `[start, end)`.
    pub fn slice_samples(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_samples() {
            return Err(Error::Config(format!(
                "sample slice [{start}, {end}) invalid for {} samples",
                self.n_samples()
            )));
        }
        let samples = self.samples.iter().map(|ch| ch[start..end].to_vec()).collect();
        Recording::new(
            samples,
            self.fs,
            self.channel_labels.clone(),
            self.t0 + start as f64 / self.fs,
        )
    }
}

/// Ordered instruction track: (state, duration) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSchedule {
    entries: Vec<(ClassLabel, f64)>,
}

impl CueSchedule {
    pub fn new(entries: Vec<(ClassLabel, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("cue schedule is empty".into()));
        }
        if entries.iter().any(|&(_, d)| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("cue durations must be positive".into()));
        }
        Ok(Self { entries })
    }

    /// `n_pairs` repetitions of (first_state, other) with equal epoch length.
    pub fn alternating(first: ClassLabel, epoch_s: f64, n_epochs: usize) -> Result<Self> {
        let mut entries = Vec::with_capacity(n_epochs);
        let mut state = first;
        for _ in 0..n_epochs {
            entries.push((state, epoch_s));
            state = state.other();
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(ClassLabel, f64)] {
        &self.entries
    }

    pub fn total_duration(&self) -> f64 {
        self.entries.iter().map(|&(_, d)| d).sum()
    }

    /// Cue state at time `t` (seconds from schedule start).
    /// Boundaries belong to the later epoch; times past the end keep the
    /// last state.
    pub fn state_at(&self, t: f64) -> ClassLabel {
        let mut acc = 0.0;
        for &(state, d) in &self.entries {
            acc += d;
            if t < acc {
                return state;
            }
        }
        self.entries.last().unwrap().0
    }
}

/// One class-labeled time interval inside a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEpoch {
    pub class: ClassLabel,
    pub start: f64,
    pub end: f64,
}

/// Align a cue schedule with a recording, one epoch per cue entry.
///
/// `guard` seconds are trimmed from both ends of each epoch; transition
/// straddling is ambiguous in the source protocol, so the margin is a
/// knob that defaults to 0.
pub fn label_epochs(rec: &Recording, cues: &CueSchedule, guard: f64) -> Result<Vec<LabeledEpoch>> {
    if guard < 0.0 {
        return Err(Error::Config("guard margin must be non-negative".into()));
    }
    let total = cues.total_duration();
    // Half-sample slack so float accumulation in cue sums cannot reject
    // an exactly covering recording.
    if total > rec.duration() + 0.5 / rec.fs() {
        return Err(Error::Alignment(format!(
            "cue schedule ({total:.3}s) longer than recording ({:.3}s)",
            rec.duration()
        )));
    }
    let mut epochs = Vec::with_capacity(cues.entries().len());
    let mut t = 0.0;
    for &(class, d) in cues.entries() {
        let (start, end) = (t + guard, t + d - guard);
        if end <= start {
            return Err(Error::Config(format!(
                "guard margin {guard}s leaves no samples in a {d}s cue epoch"
            )));
        }
        epochs.push(LabeledEpoch { class, start, end });
        t += d;
    }
    Ok(epochs)
}

//! Synthetic EEG generator.
//!
//! Produces 1/f-shaped Gaussian noise per channel plus a narrowband
//! rhythm whose amplitude drops on the configured active channels during
//! Walk cues, mimicking mu-band desynchronization. This is the stand-in
//! for a human subject that makes the whole pipeline testable.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{ClassLabel, CueSchedule, Recording};
use crate::error::{Error, Result};

fn default_gain_spread() -> f64 {
    0.3
}

fn default_rhythm_gain() -> f64 {
    3.0
}

fn default_rhythm_waxing() -> f64 {
    0.15
}

fn default_rhythm_gain_spread() -> f64 {
    0.4
}

/// Parameters of the synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub fs: f64,
    /// Channels whose rhythm is attenuated during Walk cues.
    pub active_channels: Vec<usize>,
    /// Frequency band (lo, hi) in Hz of the narrowband rhythm.
    pub erd_band: (f64, f64),
    /// Fractional band-power reduction during Walk, in [0, 1].
    pub erd_depth: f64,
    /// 1/f^a spectral slope of the background noise.
    pub noise_exponent: f64,
    /// Target noise standard deviation in microvolts.
    pub amplitude_scale: f64,
    pub seed: u64,
    /// Log-normal spread of per-channel gains; gives channels the
    /// natural variance heterogeneity real caps show.
    #[serde(default = "default_gain_spread")]
    pub channel_gain_spread: f64,
    /// Seed for subject-level draws (per-channel gains and rhythm
    /// prominence). Recordings sharing a subject seed come from the
    /// same head, so models transfer across them; `seed` alone varies
    /// the noise between sessions. Defaults to `seed` when absent.
    #[serde(default)]
    pub subject_seed: Option<u64>,
    /// Rhythm amplitude as a multiple of `amplitude_scale`.
    #[serde(default = "default_rhythm_gain")]
    pub rhythm_gain: f64,
    /// Log-normal spread of the per-channel rhythm amplitude on top of
    /// the shared channel gain. Varies the rhythm-to-noise share across
    /// the cap, the way alpha prominence varies across scalp sites.
    #[serde(default = "default_rhythm_gain_spread")]
    pub rhythm_gain_spread: f64,
    /// Log-amplitude depth of the slow waxing/waning of the rhythm.
    /// Every channel waxes independently, so amplitude modulation is a
    /// population-wide property, not a marker of the active channels.
    #[serde(default = "default_rhythm_waxing")]
    pub rhythm_waxing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 64,
            fs: 256.0,
            active_channels: (8..13).collect(),
            erd_band: (8.0, 12.0),
            erd_depth: 0.6,
            noise_exponent: 1.0,
            amplitude_scale: 10.0,
            seed: 7,
            channel_gain_spread: default_gain_spread(),
            subject_seed: None,
            rhythm_gain: default_rhythm_gain(),
            rhythm_gain_spread: default_rhythm_gain_spread(),
            rhythm_waxing: default_rhythm_waxing(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::Config("n_channels must be positive".into()));
        }
        if !(self.fs > 0.0) {
            return Err(Error::Config("fs must be positive".into()));
        }
        let (lo, hi) = self.erd_band;
        if !(lo > 0.0 && lo < hi && hi < self.fs / 2.0) {
            return Err(Error::Config(format!(
                "erd_band ({lo}, {hi}) must lie inside (0, {})",
                self.fs / 2.0
            )));
        }
        if !(0.0..=1.0).contains(&self.erd_depth) {
            return Err(Error::Config("erd_depth must be in [0, 1]".into()));
        }
        if let Some(&bad) = self.active_channels.iter().find(|&&c| c >= self.n_channels) {
            return Err(Error::Config(format!(
                "active channel {bad} out of range for {} channels",
                self.n_channels
            )));
        }
        if !(self.amplitude_scale > 0.0) {
            return Err(Error::Config("amplitude_scale must be positive".into()));
        }
        if self.noise_exponent < 0.0 {
            return Err(Error::Config("noise_exponent must be non-negative".into()));
        }
        if self.rhythm_waxing < 0.0 {
            return Err(Error::Config("rhythm_waxing must be non-negative".into()));
        }
        if self.rhythm_gain_spread < 0.0 {
            return Err(Error::Config("rhythm_gain_spread must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generate a recording covering the cue schedule. Deterministic per seed.
pub fn generate_synthetic(cfg: &SynthConfig, cues: &CueSchedule) -> Result<Recording> {
    cfg.validate()?;
    let n = (cues.total_duration() * cfg.fs).round() as usize;
    if n < 2 {
        return Err(Error::Config("cue schedule too short to synthesize".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut subject_rng = ChaCha8Rng::seed_from_u64(cfg.subject_seed.unwrap_or(cfg.seed));
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);

    // Precompute the spectral envelope and its analytic total power so
    // the time-domain noise variance lands on amplitude_scale^2 without
    // per-channel renormalization.
    let half = n / 2;
    let beta = cfg.noise_exponent;
    let mut envelope = vec![0.0f64; half + 1];
    let mut power_sum = 0.0;
    for k in 1..=half {
        let f = cfg.fs * k as f64 / n as f64;
        // Flat below 1 Hz: mirrors amplifier high-pass and keeps the
        // realized variance from being dominated by a few slow drifts.
        let a2 = f.max(1.0).powf(-beta);
        envelope[k] = a2.sqrt();
        power_sum += if k < half || n % 2 == 1 { 2.0 * a2 } else { a2 };
    }
    let scale = cfg.amplitude_scale * n as f64 / power_sum.sqrt();

    let f_rhythm = 0.5 * (cfg.erd_band.0 + cfg.erd_band.1);
    let rhythm_amp = cfg.rhythm_gain * cfg.amplitude_scale;
    let attenuation = (1.0 - cfg.erd_depth).sqrt();

    // Per-sample cue state, resolved once.
    let walk_mask: Vec<bool> = (0..n)
        .map(|i| cues.state_at(i as f64 / cfg.fs) == ClassLabel::Walk)
        .collect();

    let mut samples = Vec::with_capacity(cfg.n_channels);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for ch in 0..cfg.n_channels {
        let gain = (cfg.channel_gain_spread * subject_rng.sample::<f64, _>(StandardNormal)).exp();
        let rhythm_share =
            (cfg.rhythm_gain_spread * subject_rng.sample::<f64, _>(StandardNormal)).exp();

        // 1/f noise by spectral synthesis.
        for v in spectrum.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for k in 1..=half {
            let a = envelope[k] * scale * gain;
            if k < half || n % 2 == 1 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let c = Complex64::new(re, im) * (a / 2f64.sqrt());
                spectrum[k] = c;
                spectrum[n - k] = c.conj();
            } else {
                let re: f64 = rng.sample(StandardNormal);
                spectrum[k] = Complex64::new(a * re, 0.0);
            }
        }
        let mut buf = spectrum.clone();
        ifft.process(&mut buf);
        let inv_n = 1.0 / n as f64;

        // Narrowband rhythm on every channel with a slow, channel-local
        // waxing/waning envelope; attenuated on active channels during
        // Walk epochs.
        let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let active = cfg.active_channels.contains(&ch);
        let omega = std::f64::consts::TAU * f_rhythm / cfg.fs;
        const N_ENV: usize = 6;
        let env_comps: Vec<(f64, f64)> = (0..N_ENV)
            .map(|_| {
                // Sub-second waxing, the timescale real alpha shows;
                // keeps consecutive analysis windows loosely coupled.
                let f = 0.1 + 1.4 * rng.gen::<f64>();
                (std::f64::consts::TAU * f / cfg.fs, rng.gen::<f64>() * std::f64::consts::TAU)
            })
            .collect();
        let w = cfg.rhythm_waxing;
        let ch_samples: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = env_comps
                    .iter()
                    .map(|&(om, ph)| (om * i as f64 + ph).sin())
                    .sum::<f64>()
                    / (N_ENV as f64 / 2.0).sqrt();
                // exp(w s - w^2) has unit mean square for s ~ N(0, 1).
                let envelope = (w * s - w * w).exp();
                let mut amp = rhythm_amp * gain * rhythm_share * envelope;
                if active && walk_mask[i] {
                    amp *= attenuation;
                }
                buf[i].re * inv_n + amp * (omega * i as f64 + phase).sin()
            })
            .collect();
        samples.push(ch_samples);
    }

    let labels = (0..cfg.n_channels).map(|i| format!("ch{i:02}")).collect();
    Recording::new(samples, cfg.fs, labels, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::label_epochs;

    /// Direct-DFT band power of one signal slice: sum of |X_k|^2 over
    /// grid frequencies in [lo, hi). O(n^2 / fs) on purpose; this is the
    /// independent oracle, not the production path.
    pub(crate) fn dft_band_power(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        let n = x.len();
        let k_lo = (lo * n as f64 / fs).ceil() as usize;
        let k_hi = (hi * n as f64 / fs).ceil() as usize;
        let mut total = 0.0;
        for k in k_lo..k_hi {
            let mut re = 0.0;
            let mut im = 0.0;
            let w = std::f64::consts::TAU * k as f64 / n as f64;
            for (i, &v) in x.iter().enumerate() {
                let ph = w * i as f64;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            total += re * re + im * im;
        }
        total
    }

    fn per_epoch_band_power(cfg: &SynthConfig, cues: &CueSchedule, ch: usize) -> (Vec<f64>, Vec<f64>) {
        let rec = generate_synthetic(cfg, cues).unwrap();
        let epochs = label_epochs(&rec, cues, 0.0).unwrap();
        let mut idle = Vec::new();
        let mut walk = Vec::new();
        for e in &epochs {
            let a = (e.start * cfg.fs) as usize;
            let b = (e.end * cfg.fs) as usize;
            let p = dft_band_power(&rec.channel(ch)[a..b], cfg.fs, cfg.erd_band.0, cfg.erd_band.1);
            match e.class {
                ClassLabel::Idle => idle.push(p),
                ClassLabel::Walk => walk.push(p),
            }
        }
        (idle, walk)
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let cfg = SynthConfig { n_channels: 4, active_channels: vec![1], ..Default::default() };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 10.0, 4).unwrap();
        let a = generate_synthetic(&cfg, &cues).unwrap();
        let b = generate_synthetic(&cfg, &cues).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duration_matches_cue_total() {
        let cfg = SynthConfig { n_channels: 2, active_channels: vec![0], ..Default::default() };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 3).unwrap();
        let rec = generate_synthetic(&cfg, &cues).unwrap();
        assert_eq!(rec.n_samples(), (90.0 * cfg.fs) as usize);
    }

    #[test]
    fn band_outside_nyquist_is_config_error() {
        let cfg = SynthConfig { erd_band: (100.0, 140.0), ..Default::default() };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 10.0, 2).unwrap();
        assert!(matches!(generate_synthetic(&cfg, &cues), Err(Error::Config(_))));
    }

    #[test]
    fn walk_idle_band_power_ratio_matches_erd_depth() {
        // erd_depth 0.6, active channel 9: Walk/Idle mean 8-12 Hz band
        // power within +-10% of 0.4, checked by the direct-DFT oracle.
        let cfg = SynthConfig {
            erd_depth: 0.6,
            active_channels: (8..13).collect(),
            n_channels: 16,
            ..Default::default()
        };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 20).unwrap();
        let (idle, walk) = per_epoch_band_power(&cfg, &cues, 9);
        let mi: f64 = idle.iter().sum::<f64>() / idle.len() as f64;
        let mw: f64 = walk.iter().sum::<f64>() / walk.len() as f64;
        let ratio = mw / mi;
        assert!(
            (ratio - 0.4).abs() <= 0.04,
            "band power ratio {ratio} outside 0.4 +- 10%"
        );
    }

    #[test]
    fn inactive_channel_ratio_is_flat() {
        let cfg = SynthConfig { n_channels: 16, ..Default::default() };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 10).unwrap();
        let (idle, walk) = per_epoch_band_power(&cfg, &cues, 0);
        let mi: f64 = idle.iter().sum::<f64>() / idle.len() as f64;
        let mw: f64 = walk.iter().sum::<f64>() / walk.len() as f64;
        let ratio = mw / mi;
        assert!((ratio - 1.0).abs() < 0.3, "inactive channel ratio {ratio} not ~1");
    }

    /// Welch two-sample t-test p-value (two-sided).
    fn welch_p(a: &[f64], b: &[f64]) -> f64 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let ma = a.iter().sum::<f64>() / na;
        let mb = b.iter().sum::<f64>() / nb;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
        let se2 = va / na + vb / nb;
        if se2 == 0.0 {
            return if ma == mb { 1.0 } else { 0.0 };
        }
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        2.0 * (1.0 - dist.cdf(t.abs()))
    }

    #[test]
    fn erd_depth_zero_is_statistically_flat_and_deep_erd_is_not() {
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 20).unwrap();
        let mut accept = 0;
        let mut reject = 0;
        const SEEDS: u64 = 20;
        for seed in 0..SEEDS {
            let base = SynthConfig {
                n_channels: 4,
                active_channels: vec![1, 2],
                seed,
                ..Default::default()
            };
            let flat = SynthConfig { erd_depth: 0.0, ..base.clone() };
            let (i0, w0) = per_epoch_band_power(&flat, &cues, 1);
            if welch_p(&i0, &w0) > 0.05 {
                accept += 1;
            }
            let deep = SynthConfig { erd_depth: 0.6, ..base };
            let (i1, w1) = per_epoch_band_power(&deep, &cues, 1);
            if welch_p(&i1, &w1) < 0.01 {
                reject += 1;
            }
        }
        assert!(accept >= (SEEDS as usize) * 9 / 10, "only {accept}/{SEEDS} flat seeds accepted null");
        assert_eq!(reject, SEEDS as usize, "deep ERD not rejected on every seed");
    }

    #[test]
    fn amplitude_scale_is_respected() {
        let cfg = SynthConfig {
            n_channels: 8,
            active_channels: vec![1],
            channel_gain_spread: 0.0,
            rhythm_gain: 0.0,
            ..Default::default()
        };
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 4).unwrap();
        let rec = generate_synthetic(&cfg, &cues).unwrap();
        for ch in 0..rec.n_channels() {
            let x = rec.channel(ch);
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
            assert!(
                (sd - cfg.amplitude_scale).abs() < 0.3 * cfg.amplitude_scale,
                "channel {ch} std {sd} far from {}",
                cfg.amplitude_scale
            );
            assert!(x.iter().all(|v| v.is_finite()));
        }
    }
}

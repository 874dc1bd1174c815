//! Windowing and band-power estimation.
//!
//! Converts raw multichannel signal into bins x channels band-power
//! matrices. The same estimator object serves offline training and the
//! online streaming path, so the two are identical by construction.
//!
//! Estimator: per window, mean removal, taper (Hamming by default),
//! zero-padding to a power-of-two grid of at least 0.5 Hz resolution,
//! one-sided periodogram, integration over half-open [f, f+bin_width)
//! intervals. The Nyquist grid sample is folded into the top bin when
//! the bin range reaches fs/2, which keeps the full-band integral equal
//! to the windowed signal power.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Recording;

/// Sliding analysis window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Window length in seconds.
    pub length: f64,
    /// Step between window starts in seconds.
    pub step: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 0.75, step: 0.25 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= self.length) {
            return Err(Error::Config(format!(
                "window step {} must satisfy 0 < step <= length {}",
                self.step, self.length
            )));
        }
        Ok(())
    }

    pub fn length_samples(&self, fs: f64) -> usize {
        (self.length * fs).floor() as usize
    }

    pub fn step_samples(&self, fs: f64) -> usize {
        (self.step * fs).floor() as usize
    }
}

/// Frequency bin grid: half-open 2-Hz-wide (by default) intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub bin_width: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BinSpec {
    pub fn new(bin_width: f64, f_lo: f64, f_hi: f64) -> Self {
        Self { bin_width, f_lo, f_hi }
    }

    /// Default training grid: 2-Hz bins from 2 Hz (DC bin excluded) up
    /// to Nyquist.
    pub fn full_grid(fs: f64) -> Self {
        Self { bin_width: 2.0, f_lo: 2.0, f_hi: fs / 2.0 }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::Config("bin_width must be positive".into()));
        }
        if !(self.f_lo >= 0.0 && self.f_lo < self.f_hi && self.f_hi <= fs / 2.0 + 1e-9) {
            return Err(Error::Config(format!(
                "bin range [{}, {}) must lie within [0, {}]",
                self.f_lo,
                self.f_hi,
                fs / 2.0
            )));
        }
        let n = (self.f_hi - self.f_lo) / self.bin_width;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "bin range [{}, {}) not divisible by bin width {}",
                self.f_lo, self.f_hi, self.bin_width
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        ((self.f_hi - self.f_lo) / self.bin_width).round() as usize
    }

    /// Lower edge of bin `b`.
    pub fn bin_lo(&self, b: usize) -> f64 {
        self.f_lo + b as f64 * self.bin_width
    }
}

/// One analysis window reduced to a bins x channels band-power matrix
/// (microvolts squared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub values: DMatrix<f64>,
    pub window_start: f64,
    pub bins: BinSpec,
}

impl SpectralSample {
    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }
}

/// A borrowed view of one sliding window.
pub struct Window<'a> {
    pub start: f64,
    pub channels: Vec<&'a [f64]>,
}

/// Cut a recording into sliding windows. Window k starts at k * step.
pub fn slice_windows<'a>(rec: &'a Recording, spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    spec.validate()?;
    let len = spec.length_samples(rec.fs());
    let step = spec.step_samples(rec.fs());
    let n = rec.n_samples();
    if n < len {
        return Err(Error::InsufficientData(format!(
            "recording has {n} samples, one window needs {len}"
        )));
    }
    let count = (n - len) / step + 1;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let a = k * step;
        out.push(Window {
            start: a as f64 / rec.fs(),
            channels: rec.channels().iter().map(|ch| &ch[a..a + len]).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Taper {
    Hamming,
    Rectangular,
}

/// Reusable periodogram band-power estimator for a fixed window length,
/// sampling rate, and bin grid.
pub struct PsdEstimator {
    fs: f64,
    n_in: usize,
    nfft: usize,
    taper: Vec<f64>,
    taper_power: f64,
    fft: Arc<dyn Fft<f64>>,
    bins: BinSpec,
    /// Grid index range [lo, hi) per bin.
    bin_ranges: Vec<(usize, usize)>,
}

impl PsdEstimator {
    pub fn new(fs: f64, n_in: usize, bins: BinSpec) -> Result<Self> {
        Self::with_taper(fs, n_in, bins, Taper::Hamming)
    }

    pub fn with_taper(fs: f64, n_in: usize, bins: BinSpec, taper: Taper) -> Result<Self> {
        if n_in < 2 {
            return Err(Error::InsufficientData(format!(
                "window of {n_in} samples is too short"
            )));
        }
        bins.validate(fs)?;
        // Power-of-two grid of at least 0.5 Hz resolution, never shorter
        // than the input.
        let mut nfft = 1usize;
        while (nfft as f64) < (2.0 * fs).max(n_in as f64) {
            nfft *= 2;
        }
        let df = fs / nfft as f64;
        // Bin edges must land on the padded grid.
        for edge in [bins.f_lo, bins.f_hi, bins.bin_width] {
            let g = edge / df;
            if (g - g.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "bin edge {edge} Hz off the {df} Hz analysis grid"
                )));
            }
        }
        let nyquist_idx = nfft / 2;
        let bin_ranges = (0..bins.n_bins())
            .map(|b| {
                let lo = ((bins.bin_lo(b)) / df).round() as usize;
                let mut hi = ((bins.bin_lo(b + 1)) / df).round() as usize;
                // Fold the Nyquist sample into the top bin.
                if hi == nyquist_idx {
                    hi += 1;
                }
                (lo, hi.min(nyquist_idx + 1))
            })
            .collect();
        let w: Vec<f64> = match taper {
            Taper::Hamming => (0..n_in)
                .map(|i| {
                    0.54 - 0.46
                        * (std::f64::consts::TAU * i as f64 / (n_in as f64 - 1.0)).cos()
                })
                .collect(),
            Taper::Rectangular => vec![1.0; n_in],
        };
        let taper_power = w.iter().map(|v| v * v).sum();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(nfft);
        Ok(Self { fs, n_in, nfft, taper: w, taper_power, fft, bins, bin_ranges })
    }

    pub fn bins(&self) -> BinSpec {
        self.bins
    }

    /// Band power of one multichannel window (channels x n_in).
    pub fn estimate(&self, channels: &[&[f64]], window_start: f64) -> Result<SpectralSample> {
        let n_ch = channels.len();
        if n_ch == 0 {
            return Err(Error::Data("window has no channels".into()));
        }
        let mut values = DMatrix::zeros(self.bins.n_bins(), n_ch);
        let df = self.fs / self.nfft as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let nyquist_idx = self.nfft / 2;
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != self.n_in {
                return Err(Error::Geometry(format!(
                    "channel {c} has {} samples, estimator expects {}",
                    ch.len(),
                    self.n_in
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("channel {c} contains NaN/Inf")));
            }
            let mean = ch.iter().sum::<f64>() / self.n_in as f64;
            for i in 0..self.nfft {
                buf[i] = if i < self.n_in {
                    Complex64::new((ch[i] - mean) * self.taper[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            for (b, &(lo, hi)) in self.bin_ranges.iter().enumerate() {
                let mut acc = 0.0;
                for j in lo..hi {
                    let two_sided = buf[j].norm_sqr() / (self.fs * self.taper_power);
                    let one_sided = if j == 0 || j == nyquist_idx {
                        two_sided
                    } else {
                        2.0 * two_sided
                    };
                    acc += one_sided * df;
                }
                values[(b, c)] = acc;
            }
        }
        Ok(SpectralSample { values, window_start, bins: self.bins })
    }
}

/// One-shot band power of a single window.
pub fn band_power(channels: &[&[f64]], fs: f64, bins: BinSpec) -> Result<SpectralSample> {
    let n = channels.first().map(|c| c.len()).unwrap_or(0);
    PsdEstimator::new(fs, n, bins)?.estimate(channels, 0.0)
}

/// Sub-matrix of the bins falling in [f_lo, f_hi); channels unchanged.
pub fn restrict_band(sample: &SpectralSample, f_lo: f64, f_hi: f64) -> Result<SpectralSample> {
    let bins = sample.bins;
    let rel_lo = (f_lo - bins.f_lo) / bins.bin_width;
    let rel_hi = (f_hi - bins.f_lo) / bins.bin_width;
    if (rel_lo - rel_lo.round()).abs() > 1e-9 || (rel_hi - rel_hi.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "band [{f_lo}, {f_hi}) not aligned to the {} Hz bin grid at {}",
            bins.bin_width, bins.f_lo
        )));
    }
    let lo = rel_lo.round() as isize;
    let hi = rel_hi.round() as isize;
    if lo < 0 || hi as usize > sample.n_bins() || lo >= hi {
        return Err(Error::Config(format!(
            "band [{f_lo}, {f_hi}) outside sample range [{}, {})",
            bins.f_lo, bins.f_hi
        )));
    }
    let (lo, hi) = (lo as usize, hi as usize);
    Ok(SpectralSample {
        values: sample.values.rows(lo, hi - lo).into_owned(),
        window_start: sample.window_start,
        bins: BinSpec { bin_width: bins.bin_width, f_lo, f_hi },
    })
}

//! Online decoding runtime: sliding-window posteriors, 2-second
//! posterior averaging, and the dual-threshold hysteresis state machine.
//!
//! One decision is made per window step (0.25 s by default). The average
//! P̄ is the mean of the posterior ring; during warm-up (ring not yet
//! full) P̄ is the mean of the entries so far and no transition can fire.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ClassLabel, Recording};
use crate::spectral::{BinSpec, PsdEstimator, WindowSpec};
use crate::training::PredictionModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub window: WindowSpec,
    /// Posterior averaging horizon, seconds.
    pub avg_horizon: f64,
    /// Walk -> Idle fires when the averaged posterior drops below this.
    pub t_idle: f64,
    /// Idle -> Walk fires when the averaged posterior rises above this.
    pub t_walk: f64,
    pub initial_state: ClassLabel,
}

impl DecoderConfig {
    pub fn new(t_idle: f64, t_walk: f64) -> Self {
        Self {
            window: WindowSpec::default(),
            avg_horizon: 2.0,
            t_idle,
            t_walk,
            initial_state: ClassLabel::Idle,
        }
    }

    /// Ring capacity: averaging horizon in steps.
    pub fn ring_len(&self) -> usize {
        (self.avg_horizon / self.window.step).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(0.0..=1.0).contains(&self.t_idle) || !(0.0..=1.0).contains(&self.t_walk) {
            return Err(Error::Config("thresholds must lie in [0, 1]".into()));
        }
        if self.t_idle > self.t_walk {
            return Err(Error::Config(format!(
                "t_idle {} must not exceed t_walk {}",
                self.t_idle, self.t_walk
            )));
        }
        let ratio = self.avg_horizon / self.window.step;
        if !(self.avg_horizon > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "avg_horizon {} must be a positive multiple of the window step {}",
                self.avg_horizon, self.window.step
            )));
        }
        Ok(())
    }
}

/// The hysteresis state machine. Strict inequalities on both thresholds;
/// equality holds the current state. No transition fires until the
/// posterior ring is full.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    current: ClassLabel,
    ring: VecDeque<f64>,
    capacity: usize,
}

impl DecoderState {
    pub fn new(cfg: &DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            current: cfg.initial_state,
            ring: VecDeque::with_capacity(cfg.ring_len()),
            capacity: cfg.ring_len(),
        })
    }

    pub fn current(&self) -> ClassLabel {
        self.current
    }

    /// Push one single-window posterior and make one decision.
    /// Returns the (possibly new) state and the averaged posterior.
    pub fn step(&mut self, posterior: f64, cfg: &DecoderConfig) -> Result<(ClassLabel, f64)> {
        if !(0.0..=1.0).contains(&posterior) {
            return Err(Error::Data(format!("posterior {posterior} outside [0, 1]")));
        }
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(posterior);
        let p_bar = self.ring.iter().sum::<f64>() / self.ring.len() as f64;
        if self.ring.len() == self.capacity {
            match self.current {
                ClassLabel::Idle if p_bar > cfg.t_walk => self.current = ClassLabel::Walk,
                ClassLabel::Walk if p_bar < cfg.t_idle => self.current = ClassLabel::Idle,
                _ => {}
            }
        }
        Ok((self.current, p_bar))
    }
}

/// Decoded states and averaged posteriors at the decision rate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    /// Time of the first decision (end of the first full window), s.
    pub t0: f64,
    /// Decision period, s.
    pub step: f64,
    pub states: Vec<ClassLabel>,
    pub posteriors: Vec<f64>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.step
    }

    /// Binary walk indicator per decision.
    pub fn walk_timeline(&self) -> Vec<u8> {
        self.states
            .iter()
            .map(|&s| (s == ClassLabel::Walk) as u8)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# statetrace v1")?;
        writeln!(w, "t0 {}", self.t0)?;
        writeln!(w, "step {}", self.step)?;
        for (i, (s, p)) in self.states.iter().zip(&self.posteriors).enumerate() {
            writeln!(w, "{} {s} {p}", self.time_at(i))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty state trace".into()))??;
        if header.trim() != "# statetrace v1" {
            return Err(Error::Format(format!("bad state trace header {header:?}")));
        }
        let mut t0 = None;
        let mut step = None;
        let mut states = Vec::new();
        let mut posteriors = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_ascii_whitespace().collect();
            match parts.as_slice() {
                ["t0", v] => t0 = Some(parse_f64(v)?),
                ["step", v] => step = Some(parse_f64(v)?),
                [_, s, p] => {
                    states.push(ClassLabel::parse(s)?);
                    posteriors.push(parse_f64(p)?);
                }
                _ => return Err(Error::Format(format!("bad state trace line {line:?}"))),
            }
        }
        Ok(Self {
            t0: t0.ok_or_else(|| Error::Format("missing t0".into()))?,
            step: step.ok_or_else(|| Error::Format("missing step".into()))?,
            states,
            posteriors,
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("bad number {s:?}")))
}

/// Streaming decoder: feed raw multichannel samples in arbitrary chunk
/// sizes; decisions come out whenever a full window is available. The
/// replay path (`run_stream`) is this same object fed in one chunk, so
/// the two are identical by construction.
pub struct OnlineDecoder {
    model: PredictionModel,
    cfg: DecoderConfig,
    estimator: PsdEstimator,
    state: DecoderState,
    /// Buffered samples per retained channel, already channel-selected.
    buffers: Vec<Vec<f64>>,
    /// Absolute index of the first buffered sample.
    buffer_start: usize,
    /// Absolute start index of the next window to decode.
    next_window: usize,
    fs: f64,
    win: usize,
    step: usize,
    /// Raw single-window posteriors, one per decision, pre-averaging.
    raw_posteriors: Vec<f64>,
}

impl OnlineDecoder {
    pub fn new(model: PredictionModel, cfg: DecoderConfig, fs: f64) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.window.length_samples(fs);
        let step = cfg.window.step_samples(fs);
        let bins = BinSpec::new(model.bin_width, model.band.0, model.band.1);
        let estimator = PsdEstimator::new(fs, win, bins)?;
        let state = DecoderState::new(&cfg)?;
        let n_ch = model.retained_channels.len();
        Ok(Self {
            model,
            cfg,
            estimator,
            state,
            buffers: vec![Vec::new(); n_ch],
            buffer_start: 0,
            next_window: 0,
            fs,
            win,
            step,
            raw_posteriors: Vec::new(),
        })
    }

    /// Single-window posteriors seen so far, before ring averaging; the
    /// AR surrogate null is fitted on this sequence.
    pub fn raw_posteriors(&self) -> &[f64] {
        &self.raw_posteriors
    }

    pub fn config(&self) -> DecoderConfig {
        self.cfg
    }

    /// Time of decision for the window starting at absolute sample `k`:
    /// the window's end.
    fn decision_time(&self, k: usize) -> f64 {
        (k + self.win) as f64 / self.fs
    }

    /// Feed a chunk of raw samples (one slice per *original* channel;
    /// channel retention is applied here). Returns the decisions the
    /// chunk completed, as (t, state, P̄) triples.
    pub fn push(&mut self, chunk: &[&[f64]]) -> Result<Vec<(f64, ClassLabel, f64)>> {
        let n = chunk.first().map_or(0, |c| c.len());
        for (i, &ch) in self.model.retained_channels.iter().enumerate() {
            let src = chunk.get(ch).ok_or_else(|| Error::Decoder {
                t: self.decision_time(self.next_window),
                msg: format!("chunk has {} channels, model needs channel {ch}", chunk.len()),
            })?;
            if src.len() != n {
                return Err(Error::Decoder {
                    t: self.decision_time(self.next_window),
                    msg: "ragged chunk: unequal channel lengths".into(),
                });
            }
            self.buffers[i].extend_from_slice(src);
        }
        let mut out = Vec::new();
        loop {
            let have = self.buffer_start + self.buffers[0].len();
            if self.next_window + self.win > have {
                break;
            }
            let off = self.next_window - self.buffer_start;
            let channels: Vec<&[f64]> =
                self.buffers.iter().map(|b| &b[off..off + self.win]).collect();
            let t_start = self.next_window as f64 / self.fs;
            let sample = self.estimator.estimate(&channels, t_start)?;
            let (f, branch) = self.model.feature_extractor.extract(&sample)?;
            let posterior = self.model.bayes.posterior(f, branch);
            self.raw_posteriors.push(posterior);
            let (state, p_bar) = self.state.step(posterior, &self.cfg)?;
            out.push((self.decision_time(self.next_window), state, p_bar));
            self.next_window += self.step;
        }
        // Drop samples no future window can touch.
        let keep_from = self.next_window.saturating_sub(self.buffer_start);
        if keep_from > 0 {
            for b in &mut self.buffers {
                b.drain(..keep_from.min(b.len()));
            }
            self.buffer_start += keep_from;
        }
        Ok(out)
    }

    /// Decisions completed so far as a trace.
    fn trace_from(&self, decisions: &[(f64, ClassLabel, f64)]) -> StateTrace {
        StateTrace {
            t0: self.win as f64 / self.fs,
            step: self.step as f64 / self.fs,
            states: decisions.iter().map(|&(_, s, _)| s).collect(),
            posteriors: decisions.iter().map(|&(_, _, p)| p).collect(),
        }
    }
}

/// Replay a recorded session through the decoder.
pub fn run_stream(
    rec: &Recording,
    model: &PredictionModel,
    cfg: &DecoderConfig,
) -> Result<StateTrace> {
    run_stream_raw(rec, model, cfg).map(|(trace, _)| trace)
}

/// Replay, also returning the raw single-window posterior sequence.
pub fn run_stream_raw(
    rec: &Recording,
    model: &PredictionModel,
    cfg: &DecoderConfig,
) -> Result<(StateTrace, Vec<f64>)> {
    let mut dec = OnlineDecoder::new(model.clone(), *cfg, rec.fs())?;
    if rec.n_samples() < dec.win {
        return Err(Error::Decoder {
            t: rec.duration(),
            msg: format!(
                "recording holds {} samples, one window needs {}",
                rec.n_samples(),
                dec.win
            ),
        });
    }
    let chunk: Vec<&[f64]> = rec.channels().iter().map(|c| c.as_slice()).collect();
    let decisions = dec.push(&chunk)?;
    let trace = dec.trace_from(&decisions);
    Ok((trace, dec.raw_posteriors))
}

/// Run a raw posterior sequence through the state machine alone.
pub fn run_posteriors(posteriors: &[f64], cfg: &DecoderConfig) -> Result<StateTrace> {
    let mut state = DecoderState::new(cfg)?;
    let mut states = Vec::with_capacity(posteriors.len());
    let mut p_bars = Vec::with_capacity(posteriors.len());
    for &p in posteriors {
        let (s, p_bar) = state.step(p, cfg)?;
        states.push(s);
        p_bars.push(p_bar);
    }
    Ok(StateTrace {
        t0: cfg.window.length,
        step: cfg.window.step,
        states,
        posteriors: p_bars,
    })
}

//! Discrete-event model of the gait orthosis: a four-phase machine with
//! locked-in startup and shutdown sequences, a command transport delay,
//! and a synthetic gyroscope trace for session scoring.
//!
//! Commands arriving during StartingUp or ShuttingDown are dropped, not
//! queued; the device cannot be interrupted mid-sequence.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ClassLabel, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Locked-in startup sequence length, s.
    pub startup_latency: f64,
    /// Locked-in power-down sequence length, s.
    pub shutdown_latency: f64,
    /// Step rate while walking, steps/s.
    pub gait_cadence: f64,
    /// Command transport delay (control bridge), s.
    pub command_latency: f64,
    /// Gyro oscillation amplitude while walking, deg/s.
    pub gyro_amplitude: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            startup_latency: 5.0,
            shutdown_latency: 5.0,
            gait_cadence: 0.9,
            command_latency: 0.25,
            gyro_amplitude: 50.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.startup_latency < 0.0 || self.shutdown_latency < 0.0 || self.command_latency < 0.0
        {
            return Err(Error::Config("plant latencies must be non-negative".into()));
        }
        if !(self.gait_cadence > 0.0) {
            return Err(Error::Config("gait cadence must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Stopped,
    StartingUp,
    Walking,
    ShuttingDown,
}

impl Phase {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stopped" => Ok(Phase::Stopped),
            "starting_up" => Ok(Phase::StartingUp),
            "walking" => Ok(Phase::Walking),
            "shutting_down" => Ok(Phase::ShuttingDown),
            other => Err(Error::Format(format!("unknown plant phase {other:?}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Stopped => "stopped",
            Phase::StartingUp => "starting_up",
            Phase::Walking => "walking",
            Phase::ShuttingDown => "shutting_down",
        })
    }
}

/// Phase-entry events, chronological. The first entry is the initial
/// phase at the plant's start time.
pub type PlantLog = Vec<(f64, Phase)>;

pub struct Plant {
    cfg: PlantConfig,
    phase: Phase,
    phase_entered: f64,
    /// A command accepted but not yet applied (transport delay).
    pending: Option<(ClassLabel, f64)>,
    t: f64,
    log: PlantLog,
}

impl Plant {
    pub fn new(cfg: PlantConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            phase: Phase::Stopped,
            phase_entered: 0.0,
            pending: None,
            t: 0.0,
            log: vec![(0.0, Phase::Stopped)],
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn log(&self) -> &PlantLog {
        &self.log
    }

    fn enter(&mut self, phase: Phase, t: f64) {
        self.phase = phase;
        self.phase_entered = t;
        self.log.push((t, phase));
    }

    /// Time of the next scheduled internal event, if any.
    fn next_event(&self) -> Option<f64> {
        let completion = match self.phase {
            Phase::StartingUp => Some(self.phase_entered + self.cfg.startup_latency),
            Phase::ShuttingDown => Some(self.phase_entered + self.cfg.shutdown_latency),
            _ => None,
        };
        match (completion, self.pending.map(|(_, te)| te)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Apply every scheduled event with time <= t, in order.
    fn resolve_until(&mut self, t: f64) {
        while let Some(te) = self.next_event() {
            if te > t {
                break;
            }
            let completion = match self.phase {
                Phase::StartingUp => Some(self.phase_entered + self.cfg.startup_latency),
                Phase::ShuttingDown => Some(self.phase_entered + self.cfg.shutdown_latency),
                _ => None,
            };
            if completion == Some(te) {
                match self.phase {
                    Phase::StartingUp => self.enter(Phase::Walking, te),
                    Phase::ShuttingDown => self.enter(Phase::Stopped, te),
                    _ => unreachable!(),
                }
                continue;
            }
            // Pending command lands. Its admissibility was checked at
            // acceptance time, and nothing can leave Stopped or Walking
            // in between except another command, of which there is none.
            let (cmd, _) = self.pending.take().expect("pending event exists");
            match (self.phase, cmd) {
                (Phase::Stopped, ClassLabel::Walk) => self.enter(Phase::StartingUp, te),
                (Phase::Walking, ClassLabel::Idle) => self.enter(Phase::ShuttingDown, te),
                _ => unreachable!("pending command admissibility checked at acceptance"),
            }
        }
    }

    /// Issue a command at time `t`. Returns whether the device accepted
    /// it. Dropped (false): commands during locked-in phases, redundant
    /// commands, and commands while another is still in transport.
    pub fn command(&mut self, cmd: ClassLabel, t: f64) -> Result<bool> {
        if t < self.t {
            return Err(Error::Simulation(format!(
                "command time {t} precedes plant time {}",
                self.t
            )));
        }
        self.resolve_until(t);
        self.t = t;
        if self.pending.is_some() {
            return Ok(false);
        }
        let accepted = matches!(
            (self.phase, cmd),
            (Phase::Stopped, ClassLabel::Walk) | (Phase::Walking, ClassLabel::Idle)
        );
        if accepted {
            self.pending = Some((cmd, t + self.cfg.command_latency));
        }
        Ok(accepted)
    }

    /// Advance simulated time.
    pub fn advance(&mut self, dt: f64) -> Result<Phase> {
        if !(dt > 0.0) {
            return Err(Error::Simulation(format!("advance step {dt} must be positive")));
        }
        let target = self.t + dt;
        self.resolve_until(target);
        self.t = target;
        Ok(self.phase)
    }
}

/// Drive a plant with a decoded state trace: the decoder's state is
/// offered as a command at every decision time; the plant drops the
/// redundant ones, so only transitions take effect.
pub fn run_plant(trace: &crate::decoder::StateTrace, cfg: PlantConfig) -> Result<Plant> {
    let mut plant = Plant::new(cfg)?;
    for (i, &state) in trace.states.iter().enumerate() {
        plant.command(state, trace.time_at(i))?;
    }
    if !trace.is_empty() {
        // Let a trailing locked-in sequence finish.
        plant.advance(cfg.startup_latency.max(cfg.shutdown_latency) + cfg.command_latency)?;
    }
    Ok(plant)
}

/// Phase at time `t` according to a log (latest entry at or before `t`).
pub fn phase_at(log: &PlantLog, t: f64) -> Phase {
    let mut phase = log.first().map_or(Phase::Stopped, |&(_, p)| p);
    for &(te, p) in log {
        if te <= t {
            phase = p;
        } else {
            break;
        }
    }
    phase
}

/// Binary walking indicator sampled at `t0 + i * step` for `n` samples.
pub fn walking_timeline(log: &PlantLog, t0: f64, step: f64, n: usize) -> Vec<u8> {
    (0..n)
        .map(|i| (phase_at(log, t0 + i as f64 * step) == Phase::Walking) as u8)
        .collect()
}

/// Synthetic gyroscope trace: a sinusoid at the gait cadence during
/// Walking (phase referenced to each walking bout's onset), zero
/// elsewhere.
pub fn gyro(log: &PlantLog, fs: f64, duration: f64, cfg: &PlantConfig) -> Result<Recording> {
    if !(fs > 0.0 && duration > 0.0) {
        return Err(Error::Config("gyro needs positive fs and duration".into()));
    }
    let n = (duration * fs).round() as usize;
    let mut out = vec![0.0; n];
    // Walking bouts from the log.
    let mut bouts: Vec<(f64, f64)> = Vec::new();
    let mut walk_start: Option<f64> = None;
    for &(t, p) in log {
        match (walk_start, p) {
            (None, Phase::Walking) => walk_start = Some(t),
            (Some(s), p) if p != Phase::Walking => {
                bouts.push((s, t));
                walk_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = walk_start {
        bouts.push((s, duration));
    }
    for &(a, b) in &bouts {
        let i0 = (a * fs).ceil() as usize;
        let i1 = ((b * fs).ceil() as usize).min(n);
        for i in i0..i1 {
            let t = i as f64 / fs;
            out[i] = cfg.gyro_amplitude
                * (std::f64::consts::TAU * cfg.gait_cadence * (t - a)).sin();
        }
    }
    Recording::new(vec![out], fs, vec!["gyro".into()], 0.0)
}

/// Recover the walking indicator from a gyro trace: nonzero mask dilated
/// by one sample to bridge the sinusoid's isolated zero crossings.
pub fn detect_walking(gyro: &Recording, t0: f64, step: f64, n: usize) -> Vec<u8> {
    let x = gyro.channel(0);
    let fs = gyro.fs();
    let active = |i: usize| -> bool {
        let lo = i.saturating_sub(1);
        let hi = (i + 2).min(x.len());
        x[lo..hi].iter().any(|&v| v != 0.0)
    };
    (0..n)
        .map(|k| {
            let i = ((t0 + k as f64 * step) * fs).round() as usize;
            (i < x.len() && active(i)) as u8
        })
        .collect()
}

pub fn write_plant_log(log: &PlantLog, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# plantlog v1")?;
    for &(t, p) in log {
        writeln!(w, "{t} {p}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plant_log(path: &Path) -> Result<PlantLog> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty plant log".into()))??;
    if header.trim() != "# plantlog v1" {
        return Err(Error::Format(format!("bad plant log header {header:?}")));
    }
    let mut log = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_ascii_whitespace();
        let t = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("bad plant log line {line:?}")))?;
        let p = Phase::parse(parts.next().unwrap_or(""))?;
        log.push((t, p));
    }
    Ok(log)
}

//! Manifest-driven pipeline stages. Each stage reads its declared
//! inputs, writes exactly its documented artifacts into the output
//! directory, and never touches its input files.
//!
//! Stage artifacts (under `out_dir`):
//! - synth:      the recordings and cue files named by the manifest
//! - train:      `model.json`
//! - calibrate:  `calibration.json`, `calibration_hist.txt`
//! - run:        `trace.txt`, `posteriors.txt`, `plant.log`, `gyro.eeg`
//! - evaluate:   `report.json`
//! - montecarlo: `mc.json`, `null_maxima.txt`

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::{run_stream_raw, DecoderConfig, StateTrace};
use crate::error::{Error, Result};
use crate::eval::{
    calibrate, count_events, cross_correlate, cue_timeline, fit_null, monte_carlo_p,
    CalibrationResult, SessionReport,
};
use crate::plant::{gyro, run_plant, walking_timeline, write_plant_log, PlantConfig};
use crate::signal::{
    generate_synthetic, io as sigio, ClassLabel, CueSchedule, Recording, SynthConfig,
};
use crate::training::{train, PredictionModel, TrainConfig};

/// Cue schedule source: an explicit file or an alternating pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CueSpec {
    File { file: PathBuf },
    Alternating { first: String, epoch_s: f64, count: usize },
}

impl CueSpec {
    pub fn resolve(&self, base: &Path) -> Result<CueSchedule> {
        match self {
            CueSpec::File { file } => sigio::read_cues(&resolve_path(base, file)),
            CueSpec::Alternating { first, epoch_s, count } => {
                CueSchedule::alternating(ClassLabel::parse(first)?, *epoch_s, *count)
            }
        }
    }
}

/// One recorded (or to-be-synthesized) session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSection {
    /// Recording path; synth writes it, later stages read it.
    pub recording: PathBuf,
    pub cues: CueSpec,
    /// Present when the recording is to be synthesized.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderSection {
    pub t_idle: f64,
    pub t_walk: f64,
    #[serde(default = "default_avg_horizon")]
    pub avg_horizon: f64,
}

fn default_avg_horizon() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSection {
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    #[serde(default = "default_max_lag")]
    pub max_lag: f64,
}

fn default_n_trials() -> usize {
    10_000
}

fn default_max_lag() -> f64 {
    30.0
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { n_trials: default_n_trials(), max_lag: default_max_lag() }
    }
}

/// The one file that wires a whole experiment together (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Training data and its cues.
    pub training: Option<SessionSection>,
    /// Closed-loop session data and its cues.
    pub session: Option<SessionSection>,
    /// Model file path; train writes it, calibrate/run read it.
    #[serde(default = "default_model_path")]
    pub model: PathBuf,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Explicit thresholds; when absent, `run` uses the calibrate
    /// stage's suggestions.
    #[serde(default)]
    pub decoder: Option<DecoderSection>,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloSection>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model_path() -> PathBuf {
    PathBuf::from("model.json")
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("manifest parse failed: {e}")))
    }

    /// Directory all relative manifest paths resolve against.
    pub fn base_dir(manifest_path: &Path) -> PathBuf {
        manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
    }

    fn out(&self, base: &Path, name: &str) -> PathBuf {
        resolve_path(base, &self.out_dir).join(name)
    }

    fn plant_cfg(&self) -> PlantConfig {
        self.plant.unwrap_or_default()
    }

    fn training(&self) -> Result<&SessionSection> {
        self.training
            .as_ref()
            .ok_or_else(|| Error::Config("manifest has no [training] section".into()))
    }

    fn session(&self) -> Result<&SessionSection> {
        self.session
            .as_ref()
            .ok_or_else(|| Error::Config("manifest has no [session] section".into()))
    }

    /// Decoder configuration: explicit thresholds, or the calibrate
    /// stage's output.
    fn decoder_cfg(&self, base: &Path) -> Result<DecoderConfig> {
        let (t_idle, t_walk, avg_horizon) = match &self.decoder {
            Some(d) => (d.t_idle, d.t_walk, d.avg_horizon),
            None => {
                let path = self.out(base, "calibration.json");
                let cal = load_calibration(&path).map_err(|_| {
                    Error::Config(
                        "no [decoder] thresholds in the manifest and no calibration.json; \
                         run `calibrate` first or set thresholds explicitly"
                            .into(),
                    )
                })?;
                (cal.t_idle, cal.t_walk, default_avg_horizon())
            }
        };
        let mut cfg = DecoderConfig::new(t_idle, t_walk);
        cfg.avg_horizon = avg_horizon;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_recording(path: &Path) -> Result<Recording> {
    if path.extension().is_some_and(|e| e == "txt") {
        sigio::read_recording_text(path)
    } else {
        sigio::read_recording_binary(path)
    }
}

fn ensure_out_dir(manifest: &RunManifest, base: &Path) -> Result<PathBuf> {
    let dir = resolve_path(base, &manifest.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

/// Synthesize every session whose manifest section carries a generator
/// config. Cue schedules are also written next to the recordings so the
/// artifacts are self-describing.
pub fn synth_stage(manifest: &RunManifest, base: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(manifest, base)?;
    let mut written = Vec::new();
    let sections = [&manifest.training, &manifest.session];
    let mut any = false;
    for section in sections.into_iter().flatten() {
        let Some(synth) = &section.synth else { continue };
        any = true;
        let cues = section.cues.resolve(base)?;
        let rec = generate_synthetic(synth, &cues)?;
        let rec_path = resolve_path(base, &section.recording);
        if let Some(parent) = rec_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        sigio::write_recording_binary(&rec, &rec_path)?;
        written.push(rec_path.clone());
        let cue_path = rec_path.with_extension("cues.txt");
        sigio::write_cues(&cues, &cue_path)?;
        written.push(cue_path);
    }
    if !any {
        return Err(Error::Config("no manifest section has a [*.synth] generator config".into()));
    }
    Ok(written)
}

/// Train a prediction model from the training session.
pub fn train_stage(manifest: &RunManifest, base: &Path) -> Result<(PathBuf, PredictionModel)> {
    ensure_out_dir(manifest, base)?;
    let section = manifest.training()?;
    let rec_path = resolve_path(base, &section.recording);
    require_exists(&rec_path, "training recording")?;
    let rec = read_recording(&rec_path)?;
    let cues = section.cues.resolve(base)?;
    let mut cfg = manifest.train.clone().unwrap_or_default();
    cfg.seed = cfg.seed.wrapping_add(manifest.seed);
    let model = train(&rec, &cues, &cfg)?;
    let model_path = resolve_path(base, &manifest.model);
    if let Some(parent) = model_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save(&model_path)?;
    Ok((model_path, model))
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    format: String,
    version: u32,
    calibration: CalibrationResult,
}

pub fn save_calibration(cal: &CalibrationResult, path: &Path) -> Result<()> {
    let file = CalibrationFile {
        format: "gaitbci-calibration".into(),
        version: 1,
        calibration: cal.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("calibration serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_calibration(path: &Path) -> Result<CalibrationResult> {
    let json = std::fs::read_to_string(path)?;
    let file: CalibrationFile = serde_json::from_str(&json)
        .map_err(|e| Error::Format(format!("calibration parse failed: {e}")))?;
    if file.format != "gaitbci-calibration" || file.version != 1 {
        return Err(Error::Format("unsupported calibration file".into()));
    }
    Ok(file.calibration)
}

/// Replay the training session through the decoder pipeline, histogram
/// the averaged posteriors per cue phase, and suggest thresholds.
pub fn calibrate_stage(manifest: &RunManifest, base: &Path) -> Result<CalibrationResult> {
    ensure_out_dir(manifest, base)?;
    let section = manifest.training()?;
    let rec_path = resolve_path(base, &section.recording);
    let model_path = resolve_path(base, &manifest.model);
    require_exists(&rec_path, "training recording")?;
    require_exists(&model_path, "model file")?;
    let rec = read_recording(&rec_path)?;
    let cues = section.cues.resolve(base)?;
    let model = PredictionModel::load(&model_path)?;
    // Thresholds are unknown at calibration time; the averaging path is
    // threshold-independent, so placeholders are fine.
    let mut cfg = DecoderConfig::new(0.5, 0.5);
    if let Some(d) = &manifest.decoder {
        cfg.avg_horizon = d.avg_horizon;
    }
    let (trace, _) = run_stream_raw(&rec, &model, &cfg)?;
    let labeled: Vec<(f64, ClassLabel)> = trace
        .posteriors
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, cues.state_at(trace.time_at(i))))
        .collect();
    let cal = calibrate(&labeled)?;
    save_calibration(&cal, &manifest.out(base, "calibration.json"))?;
    cal.save_histogram(&manifest.out(base, "calibration_hist.txt"))?;
    Ok(cal)
}

pub fn write_posteriors(posteriors: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# posteriors v1")?;
    for p in posteriors {
        writeln!(w, "{p}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_posteriors(path: &Path) -> Result<Vec<f64>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty posterior file".into()))??;
    if header.trim() != "# posteriors v1" {
        return Err(Error::Format(format!("bad posterior file header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad posterior {line:?}")))?,
        );
    }
    Ok(out)
}

/// Closed-loop session replay: decode, drive the plant, synthesize the
/// gyro trace.
pub fn run_stage(manifest: &RunManifest, base: &Path) -> Result<StateTrace> {
    ensure_out_dir(manifest, base)?;
    let section = manifest.session()?;
    let rec_path = resolve_path(base, &section.recording);
    let model_path = resolve_path(base, &manifest.model);
    require_exists(&rec_path, "session recording")?;
    require_exists(&model_path, "model file")?;
    let rec = read_recording(&rec_path)?;
    let model = PredictionModel::load(&model_path)?;
    let cfg = manifest.decoder_cfg(base)?;
    let (trace, raw) = run_stream_raw(&rec, &model, &cfg)?;
    let plant_cfg = manifest.plant_cfg();
    let plant = run_plant(&trace, plant_cfg)?;
    trace.save(&manifest.out(base, "trace.txt"))?;
    write_posteriors(&raw, &manifest.out(base, "posteriors.txt"))?;
    write_plant_log(plant.log(), &manifest.out(base, "plant.log"))?;
    let g = gyro(plant.log(), rec.fs(), plant.time().max(rec.duration()), &plant_cfg)?;
    sigio::write_recording_binary(&g, &manifest.out(base, "gyro.eeg"))?;
    Ok(trace)
}

/// Score the run-stage artifacts against the session cues.
pub fn evaluate_stage(manifest: &RunManifest, base: &Path) -> Result<SessionReport> {
    ensure_out_dir(manifest, base)?;
    let section = manifest.session()?;
    let cues = section.cues.resolve(base)?;
    let trace_path = manifest.out(base, "trace.txt");
    let log_path = manifest.out(base, "plant.log");
    require_exists(&trace_path, "state trace (run the `run` stage first)")?;
    require_exists(&log_path, "plant log (run the `run` stage first)")?;
    let trace = StateTrace::load(&trace_path)?;
    let log = crate::plant::read_plant_log(&log_path)?;
    let max_lag = manifest.montecarlo.unwrap_or_default().max_lag;

    let n = trace.len();
    let cue_tl = cue_timeline(&cues, trace.t0, trace.step, n);
    let plant_tl = walking_timeline(&log, trace.t0, trace.step, n);
    let xc = cross_correlate(&cue_tl, &plant_tl, trace.step, max_lag)?;
    let xc_dec = cross_correlate(&cue_tl, &trace.walk_timeline(), trace.step, max_lag)?;
    let (omissions, false_alarms, fa_durations) =
        count_events(&cues, &plant_tl, trace.t0, trace.step)?;
    let report = SessionReport {
        xcorr_max: xc.max,
        lag_at_max: xc.lag_at_max,
        xcorr_decoder_max: xc_dec.max,
        omissions,
        false_alarms,
        fa_durations,
        p_value: None,
        n_mc: 0,
    };
    report.save(&manifest.out(base, "report.json"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub p_value: f64,
    pub n_trials: usize,
    pub observed_max: f64,
    pub null_max_highest: f64,
    pub null: crate::eval::ArNullModel,
}

/// Fit the AR null on the session's raw posteriors and compute the
/// empirical p-value of the observed maximum correlation.
pub fn montecarlo_stage(manifest: &RunManifest, base: &Path) -> Result<MonteCarloOutcome> {
    ensure_out_dir(manifest, base)?;
    let section = manifest.session()?;
    let cues = section.cues.resolve(base)?;
    let posteriors_path = manifest.out(base, "posteriors.txt");
    let report_path = manifest.out(base, "report.json");
    require_exists(&posteriors_path, "posterior log (run the `run` stage first)")?;
    require_exists(&report_path, "session report (run the `evaluate` stage first)")?;
    let posteriors = read_posteriors(&posteriors_path)?;
    let report = SessionReport::load(&report_path)?;
    let mc = manifest.montecarlo.unwrap_or_default();
    let null = fit_null(&posteriors)?;
    let decoder_cfg = manifest.decoder_cfg(base)?;
    let (p_value, maxima) = monte_carlo_p(
        &cues,
        report.xcorr_max,
        &null,
        &decoder_cfg,
        &manifest.plant_cfg(),
        mc.n_trials,
        manifest.seed,
    )?;
    let mut w = BufWriter::new(std::fs::File::create(manifest.out(base, "null_maxima.txt"))?);
    writeln!(w, "# null-maxima v1 sorted")?;
    for m in &maxima {
        writeln!(w, "{m}")?;
    }
    w.flush()?;
    let outcome = MonteCarloOutcome {
        p_value,
        n_trials: mc.n_trials,
        observed_max: report.xcorr_max,
        null_max_highest: maxima.last().copied().unwrap_or(f64::NAN),
        null,
    };
    let json = serde_json::to_string_pretty(&outcome)
        .map_err(|e| Error::Format(format!("outcome serialization failed: {e}")))?;
    std::fs::write(manifest.out(base, "mc.json"), json)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_manifest(dir: &Path) -> RunManifest {
        let synth = SynthConfig {
            n_channels: 8,
            active_channels: vec![2, 3, 4],
            seed: 21,
            ..Default::default()
        };
        RunManifest {
            out_dir: dir.join("out"),
            seed: 5,
            training: Some(SessionSection {
                recording: dir.join("train.eeg"),
                cues: CueSpec::Alternating { first: "idle".into(), epoch_s: 15.0, count: 8 },
                synth: Some(synth.clone()),
            }),
            session: Some(SessionSection {
                recording: dir.join("session.eeg"),
                cues: CueSpec::Alternating { first: "idle".into(), epoch_s: 20.0, count: 3 },
                synth: Some(SynthConfig { seed: 22, ..synth }),
            }),
            model: dir.join("out/model.json"),
            train: Some(TrainConfig { folds: 5, ..Default::default() }),
            decoder: None,
            plant: None,
            montecarlo: Some(MonteCarloSection { n_trials: 40, max_lag: 30.0 }),
        }
    }

    #[test]
    fn manifest_toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_manifest(dir.path());
        let text = toml::to_string_pretty(&m).unwrap();
        let back: RunManifest = toml::from_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn full_pipeline_runs_end_to_end_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let m = small_manifest(base);

        synth_stage(&m, base).unwrap();
        let (_, model) = train_stage(&m, base).unwrap();
        assert!(model.cv_accuracy.0 > 0.6, "cv accuracy {:?}", model.cv_accuracy);
        let cal = calibrate_stage(&m, base).unwrap();
        assert!(cal.t_idle <= cal.t_walk);
        let trace = run_stage(&m, base).unwrap();
        assert!(!trace.is_empty());
        let report = evaluate_stage(&m, base).unwrap();
        assert!(report.xcorr_max <= 1.0 && report.xcorr_max >= -1.0);
        let mc = montecarlo_stage(&m, base).unwrap();
        assert!((0.0..=1.0).contains(&mc.p_value));

        // Byte-identical artifacts on a second pass.
        let files = [
            "out/model.json",
            "out/calibration.json",
            "out/calibration_hist.txt",
            "out/trace.txt",
            "out/posteriors.txt",
            "out/plant.log",
            "out/gyro.eeg",
            "out/report.json",
            "out/mc.json",
            "out/null_maxima.txt",
        ];
        let snapshot: Vec<Vec<u8>> =
            files.iter().map(|f| std::fs::read(base.join(f)).unwrap()).collect();
        synth_stage(&m, base).unwrap();
        train_stage(&m, base).unwrap();
        calibrate_stage(&m, base).unwrap();
        run_stage(&m, base).unwrap();
        evaluate_stage(&m, base).unwrap();
        montecarlo_stage(&m, base).unwrap();
        for (f, before) in files.iter().zip(&snapshot) {
            let after = std::fs::read(base.join(f)).unwrap();
            assert_eq!(&after, before, "{f} changed across identical runs");
        }
    }

    #[test]
    fn missing_inputs_fail_before_any_work() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let mut m = small_manifest(base);
        m.training.as_mut().unwrap().synth = None;
        // No recording on disk: train must refuse.
        assert!(matches!(train_stage(&m, base), Err(Error::Config(_))));
        // No model: run must refuse.
        assert!(matches!(run_stage(&m, base), Err(Error::Config(_))));
    }
}

//! Session scoring and statistical controls: cue/response
//! cross-correlation, omission and false-alarm accounting, threshold
//! calibration, and an AR(1) surrogate null with Monte Carlo p-values.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{run_posteriors, DecoderConfig};
use crate::error::{Error, Result};
use crate::plant::{run_plant, walking_timeline, PlantConfig};
use crate::signal::{ClassLabel, CueSchedule};

const MIN_OVERLAP: usize = 10;
const HIST_BIN: f64 = 0.02;

/// Full non-negative-lag correlation curve with its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    /// (lag seconds, Pearson r) per searched lag.
    pub curve: Vec<(f64, f64)>,
    pub max: f64,
    pub lag_at_max: f64,
}

fn pearson(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Constant sequences correlate 0 by convention.
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Pearson correlation between a cue sequence and a response shifted
/// later by each non-negative lag up to `max_lag`. Both sequences share
/// the step size. Ties in the maximum go to the earliest lag.
pub fn cross_correlate(
    cue: &[u8],
    response: &[u8],
    step: f64,
    max_lag: f64,
) -> Result<CrossCorrelation> {
    if cue.len() != response.len() {
        return Err(Error::Alignment(format!(
            "cue has {} steps, response {}",
            cue.len(),
            response.len()
        )));
    }
    if !(step > 0.0) || max_lag < 0.0 {
        return Err(Error::Config("need positive step and non-negative max_lag".into()));
    }
    let max_shift = ((max_lag / step).floor() as usize).min(cue.len().saturating_sub(1));
    if cue.len() < MIN_OVERLAP {
        return Err(Error::InsufficientData(format!(
            "overlap of {} steps is below the minimum {MIN_OVERLAP}",
            cue.len()
        )));
    }
    let mut curve = Vec::with_capacity(max_shift + 1);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for shift in 0..=max_shift {
        let overlap = cue.len() - shift;
        if overlap < MIN_OVERLAP {
            break;
        }
        // Response delayed by `shift`: response[k] answers cue[k - shift].
        let r = pearson(&cue[..overlap], &response[shift..]);
        let lag = shift as f64 * step;
        curve.push((lag, r));
        if r > best.0 {
            best = (r, lag);
        }
    }
    Ok(CrossCorrelation { curve, max: best.0, lag_at_max: best.1 })
}

/// Omissions and false alarms of a walking timeline against the cues.
///
/// Omission: a Walk cue epoch containing no walking sample. False alarm:
/// an onset of walking at a time whose cue state is Idle; its duration
/// is the contiguous walking time from the onset, capped at the end of
/// that Idle epoch. A bout that starts inside a Walk epoch and spills
/// into the following Idle epoch is not a false alarm.
pub fn count_events(
    cues: &CueSchedule,
    timeline: &[u8],
    t0: f64,
    step: f64,
) -> Result<(usize, usize, Vec<f64>)> {
    let total = cues.total_duration();
    let span = t0 + timeline.len() as f64 * step;
    if span + step < total {
        return Err(Error::Alignment(format!(
            "timeline covers {span:.2}s of a {total:.2}s cue schedule"
        )));
    }
    let time_at = |i: usize| t0 + i as f64 * step;

    // Epoch boundaries.
    let mut epochs: Vec<(ClassLabel, f64, f64)> = Vec::new();
    let mut acc = 0.0;
    for &(state, d) in cues.entries() {
        epochs.push((state, acc, acc + d));
        acc += d;
    }

    let mut omissions = 0;
    for &(state, a, b) in &epochs {
        if state != ClassLabel::Walk {
            continue;
        }
        let any = timeline
            .iter()
            .enumerate()
            .any(|(i, &v)| v == 1 && (a..b).contains(&time_at(i)));
        if !any {
            omissions += 1;
        }
    }

    let mut false_alarms = 0;
    let mut fa_durations = Vec::new();
    for i in 0..timeline.len() {
        let onset = timeline[i] == 1 && (i == 0 || timeline[i - 1] == 0);
        if !onset {
            continue;
        }
        let t = time_at(i);
        if t >= total || cues.state_at(t) != ClassLabel::Idle {
            continue;
        }
        false_alarms += 1;
        let epoch_end = epochs
            .iter()
            .find(|&&(_, a, b)| (a..b).contains(&t))
            .map(|&(_, _, b)| b)
            .unwrap_or(total);
        let mut j = i;
        while j < timeline.len() && timeline[j] == 1 && time_at(j) < epoch_end {
            j += 1;
        }
        fa_durations.push((j - i) as f64 * step);
    }
    Ok((omissions, false_alarms, fa_durations))
}

/// Cue state sampled at the decision grid as a binary walk indicator.
pub fn cue_timeline(cues: &CueSchedule, t0: f64, step: f64, n: usize) -> Vec<u8> {
    (0..n)
        .map(|i| (cues.state_at(t0 + i as f64 * step) == ClassLabel::Walk) as u8)
        .collect()
}

/// First-order autoregressive surrogate for the posterior sequence,
/// moment-matched to its mean and lag-1 autocorrelation, clamped to
/// [0, 1] when simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArNullModel {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
    /// Sample variance, kept as a diagnostic; the recursion is fixed by
    /// (mu, rho) alone.
    pub sigma2: f64,
}

impl ArNullModel {
    /// The moment-matching algebra: alpha = rho, and the stationary-mean
    /// identity alpha * mu + beta / 2 = mu gives beta = 2 mu (1 - alpha).
    pub fn from_moments(mu: f64, rho: f64, sigma2: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::Numerical(format!("lag-1 autocorrelation {rho} not in (-1, 1)")));
        }
        let alpha = rho;
        let beta = 2.0 * mu * (1.0 - alpha);
        if beta < 0.0 {
            return Err(Error::Numerical(format!("negative innovation gain {beta}")));
        }
        Ok(Self { alpha, beta, mu, rho, sigma2 })
    }

    /// One surrogate posterior sequence of length `n`.
    pub fn simulate(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut x: f64 = rng.gen();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(x.clamp(0.0, 1.0));
            x = self.alpha * x + self.beta * rng.gen::<f64>();
        }
        out
    }
}

/// Fit the null from an observed posterior sequence.
pub fn fit_null(posteriors: &[f64]) -> Result<ArNullModel> {
    if posteriors.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "null fit needs at least 100 posteriors, got {}",
            posteriors.len()
        )));
    }
    let n = posteriors.len() as f64;
    let mu = posteriors.iter().sum::<f64>() / n;
    let var = posteriors.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / n;
    // Float summation noise can leave a constant sequence with a tiny
    // nonzero variance; treat anything at rounding scale as constant.
    if var <= f64::EPSILON * (1.0 + mu * mu) {
        return Err(Error::DegenerateData("constant posterior sequence".into()));
    }
    let cov1 = posteriors
        .windows(2)
        .map(|w| (w[0] - mu) * (w[1] - mu))
        .sum::<f64>()
        / n;
    let rho = cov1 / var;
    ArNullModel::from_moments(mu, rho, var)
}

/// Empirical significance of an observed maximum correlation: the
/// fraction of surrogate sessions (null posteriors run through the same
/// decoder state machine and plant) whose maximum exceeds it.
/// Returns (p, sorted null maxima). Trials use independent deterministic
/// substreams of `seed`, so the result is order-independent.
pub fn monte_carlo_p(
    cues: &CueSchedule,
    observed_max: f64,
    null: &ArNullModel,
    decoder_cfg: &DecoderConfig,
    plant_cfg: &PlantConfig,
    n_trials: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if n_trials == 0 {
        return Err(Error::Config("need at least one Monte Carlo trial".into()));
    }
    decoder_cfg.validate()?;
    let total = cues.total_duration();
    let step = decoder_cfg.window.step;
    let t0 = decoder_cfg.window.length;
    let n_dec = ((total - t0) / step).floor() as usize + 1;
    let cue_tl = cue_timeline(cues, t0, step, n_dec);
    let mut maxima: Vec<f64> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64 + 1);
            let posteriors = null.simulate(n_dec, &mut rng);
            let trace = run_posteriors(&posteriors, decoder_cfg)?;
            let plant = run_plant(&trace, *plant_cfg)?;
            let tl = walking_timeline(plant.log(), t0, step, n_dec);
            Ok(cross_correlate(&cue_tl, &tl, step, 30.0)?.max)
        })
        .collect::<Result<_>>()?;
    let exceed = maxima.iter().filter(|&&m| m > observed_max).count();
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((exceed as f64 / n_trials as f64, maxima))
}

/// Averaged-posterior histogram and suggested thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// (bin lower edge, count) rows, bin width 0.02 over [0, 1].
    pub histogram: Vec<(f64, usize)>,
    pub t_idle: f64,
    pub t_walk: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // Nearest-rank on the sorted sample.
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Suggest thresholds from a calibration log of averaged posteriors with
/// their cue phase: T_W at the 95th percentile of idle-phase values, T_I
/// at the 5th percentile of walk-phase values, clamped so T_I <= T_W.
/// Suggestions are advisory starting points, not guarantees.
pub fn calibrate(pbars: &[(f64, ClassLabel)]) -> Result<CalibrationResult> {
    let mut idle: Vec<f64> = pbars
        .iter()
        .filter(|&&(_, c)| c == ClassLabel::Idle)
        .map(|&(p, _)| p)
        .collect();
    let mut walk: Vec<f64> = pbars
        .iter()
        .filter(|&&(_, c)| c == ClassLabel::Walk)
        .map(|&(p, _)| p)
        .collect();
    if idle.is_empty() || walk.is_empty() {
        return Err(Error::InsufficientData(
            "calibration needs averaged posteriors from both phases".into(),
        ));
    }
    if let Some(&(p, _)) = pbars.iter().find(|&&(p, _)| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Data(format!("averaged posterior {p} outside [0, 1]")));
    }
    idle.sort_by(|a, b| a.partial_cmp(b).unwrap());
    walk.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t_walk = percentile(&idle, 0.95);
    let t_idle = percentile(&walk, 0.05).min(t_walk);

    let n_bins = (1.0 / HIST_BIN).round() as usize;
    let mut histogram: Vec<(f64, usize)> =
        (0..n_bins).map(|b| (b as f64 * HIST_BIN, 0)).collect();
    for &(p, _) in pbars {
        let b = ((p / HIST_BIN).floor() as usize).min(n_bins - 1);
        histogram[b].1 += 1;
    }
    Ok(CalibrationResult { histogram, t_idle, t_walk })
}

impl CalibrationResult {
    /// Histogram as (bin, count) rows for external plotting.
    pub fn save_histogram(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# pbar-histogram v1 bin_width {HIST_BIN}")?;
        for &(lo, count) in &self.histogram {
            writeln!(w, "{lo} {count}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything `evaluate` reports for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub xcorr_max: f64,
    pub lag_at_max: f64,
    /// Decoder-state correlation, before plant latencies; diagnostic.
    pub xcorr_decoder_max: f64,
    pub omissions: usize,
    pub false_alarms: usize,
    pub fa_durations: Vec<f64>,
    pub p_value: Option<f64>,
    pub n_mc: usize,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    format: String,
    version: u32,
    report: SessionReport,
}

const REPORT_FORMAT: &str = "gaitbci-report";
const REPORT_VERSION: u32 = 1;

impl SessionReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ReportFile {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            report: self.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let file: ReportFile = serde_json::from_str(&json)
            .map_err(|e| Error::Format(format!("report parse failed: {e}")))?;
        if file.format != REPORT_FORMAT || file.version != REPORT_VERSION {
            return Err(Error::Format(format!(
                "unsupported report file ({}, v{})",
                file.format, file.version
            )));
        }
        Ok(file.report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating_cues(epoch_s: f64, n: usize) -> CueSchedule {
        CueSchedule::alternating(ClassLabel::Idle, epoch_s, n).unwrap()
    }

    #[test]
    fn identity_correlates_one_at_lag_zero() {
        let cues = alternating_cues(60.0, 5);
        let tl = cue_timeline(&cues, 0.0, 0.25, 1200);
        let xc = cross_correlate(&tl, &tl, 0.25, 30.0).unwrap();
        assert!((xc.max - 1.0).abs() < 1e-12);
        assert_eq!(xc.lag_at_max, 0.0);
    }

    #[test]
    fn pure_delay_is_found_at_its_lag() {
        let cues = alternating_cues(60.0, 5);
        let n = 1200;
        let cue_tl = cue_timeline(&cues, 0.0, 0.25, n);
        let shift = 25; // 6.25 s at 4 Hz
        let mut delayed = vec![0u8; n];
        for i in shift..n {
            delayed[i] = cue_tl[i - shift];
        }
        let xc = cross_correlate(&cue_tl, &delayed, 0.25, 30.0).unwrap();
        assert_eq!(xc.lag_at_max, 6.25);
        assert!(xc.max > 0.9);
    }

    #[test]
    fn random_sequences_rarely_exceed_point_two() {
        // 5 minutes at 4 Hz, independent fair coins per step blocks.
        let mut low = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<u8> = (0..1200).map(|_| rng.gen::<bool>() as u8).collect();
            let b: Vec<u8> = (0..1200).map(|_| rng.gen::<bool>() as u8).collect();
            let xc = cross_correlate(&a, &b, 0.25, 30.0).unwrap();
            if xc.max.abs() < 0.2 {
                low += 1;
            }
        }
        assert!(low >= 18, "only {low}/20 seeds stayed below 0.2");
    }

    #[test]
    fn constant_sequences_correlate_zero() {
        let a = vec![1u8; 100];
        let b = vec![0u8; 100];
        let xc = cross_correlate(&a, &b, 0.25, 5.0).unwrap();
        assert!(xc.curve.iter().all(|&(_, r)| r == 0.0));
        assert_eq!(xc.max, 0.0);
    }

    #[test]
    fn short_overlap_is_an_error() {
        let a = vec![1u8, 0, 1, 0, 1];
        assert!(matches!(
            cross_correlate(&a, &a, 0.25, 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn correlation_matches_a_direct_oracle_and_survives_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<u8> = (0..400).map(|_| rng.gen::<bool>() as u8).collect();
        let b: Vec<u8> = (0..400).map(|_| (rng.gen::<f64>() < 0.3) as u8).collect();
        let xc = cross_correlate(&a, &b, 0.5, 20.0).unwrap();
        for &(lag, r) in &xc.curve {
            let shift = (lag / 0.5).round() as usize;
            // Direct two-pass Pearson on the overlap.
            let x: Vec<f64> = a[..a.len() - shift].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = b[shift..].iter().map(|&v| v as f64).collect();
            let n = x.len() as f64;
            let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
            let num: f64 = x.iter().zip(&y).map(|(u, v)| (u - mx) * (v - my)).sum();
            let dx: f64 = x.iter().map(|u| (u - mx).powi(2)).sum();
            let dy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
            let want = if dx == 0.0 || dy == 0.0 { 0.0 } else { num / (dx * dy).sqrt() };
            assert!((r - want).abs() < 1e-12, "lag {lag}: {r} vs {want}");
        }

        // Jointly inverting both sequences preserves the whole curve.
        let ai: Vec<u8> = a.iter().map(|&v| 1 - v).collect();
        let bi: Vec<u8> = b.iter().map(|&v| 1 - v).collect();
        let xci = cross_correlate(&ai, &bi, 0.5, 20.0).unwrap();
        for (&(_, r0), &(_, r1)) in xc.curve.iter().zip(&xci.curve) {
            assert!((r0 - r1).abs() < 1e-12);
        }
        assert!((xc.max - xci.max).abs() < 1e-12);
    }

    #[test]
    fn perfect_timeline_has_no_events() {
        let cues = alternating_cues(60.0, 5);
        let tl = cue_timeline(&cues, 0.0, 0.25, 1200);
        let (om, fa, durs) = count_events(&cues, &tl, 0.0, 0.25).unwrap();
        assert_eq!((om, fa), (0, 0));
        assert!(durs.is_empty());
    }

    #[test]
    fn silent_timeline_counts_every_walk_cue_as_omission() {
        let cues = CueSchedule::alternating(ClassLabel::Idle, 30.0, 10).unwrap();
        let tl = vec![0u8; 1200];
        let (om, fa, _) = count_events(&cues, &tl, 0.0, 0.25).unwrap();
        assert_eq!(om, 5);
        assert_eq!(fa, 0);
    }

    #[test]
    fn one_false_alarm_of_twelve_seconds() {
        let cues = alternating_cues(60.0, 5);
        let mut tl = cue_timeline(&cues, 0.0, 0.25, 1200);
        // Walking from t = 130.0 for 12.00 s inside the Idle epoch
        // [120, 180).
        for i in 520..568 {
            tl[i] = 1;
        }
        let (om, fa, durs) = count_events(&cues, &tl, 0.0, 0.25).unwrap();
        assert_eq!((om, fa), (0, 1));
        assert_eq!(durs, vec![12.00]);
    }

    #[test]
    fn spillover_into_idle_is_not_a_false_alarm() {
        let cues = alternating_cues(60.0, 5);
        let mut tl = cue_timeline(&cues, 0.0, 0.25, 1200);
        // The bout cued at [60, 120) keeps walking until 130.
        for i in 480..520 {
            tl[i] = 1;
        }
        let (om, fa, _) = count_events(&cues, &tl, 0.0, 0.25).unwrap();
        assert_eq!((om, fa), (0, 0));
    }

    #[test]
    fn short_timeline_is_an_alignment_error() {
        let cues = alternating_cues(60.0, 5);
        let tl = vec![0u8; 100];
        assert!(matches!(
            count_events(&cues, &tl, 0.0, 0.25),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn moment_matching_algebra_is_exact() {
        let m = ArNullModel::from_moments(0.4, 0.5, 0.01).unwrap();
        assert_eq!(m.alpha, 0.5);
        assert_eq!(m.beta, 0.4);
    }

    #[test]
    fn iid_posteriors_fit_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let posteriors: Vec<f64> = (0..50_000).map(|_| rng.gen()).collect();
        let m = fit_null(&posteriors).unwrap();
        assert!(m.alpha.abs() < 0.02, "alpha {}", m.alpha);
        assert!((m.beta - 2.0 * m.mu).abs() < 0.05, "beta {} mu {}", m.beta, m.mu);
        assert!((m.mu - 0.5).abs() < 0.01);
    }

    #[test]
    fn constant_posteriors_are_degenerate_and_short_input_insufficient() {
        assert!(matches!(fit_null(&vec![0.3; 500]), Err(Error::DegenerateData(_))));
        assert!(matches!(fit_null(&vec![0.3; 50]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn simulate_then_refit_recovers_parameters() {
        let truth = ArNullModel::from_moments(0.4, 0.6, 0.0).unwrap();
        let n = 20_000usize;
        // Standard error of the lag-1 autocorrelation estimate.
        let se_rho = ((1.0 - truth.rho * truth.rho) / n as f64).sqrt();
        let mut fails = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = truth.simulate(n, &mut rng);
            let refit = fit_null(&y).unwrap();
            if (refit.alpha - truth.alpha).abs() > 3.0 * se_rho + 0.01 {
                fails += 1;
            }
        }
        // 3-sigma misses should be rare.
        assert!(fails <= 3, "{fails}/100 refits off by more than 3 SE");
    }

    #[test]
    fn simulated_null_matches_requested_moments() {
        // Non-negative rho keeps the recursion inside [0, 1] closely
        // enough that clamping stays negligible; negative rho does not.
        for &(mu, rho) in &[(0.2, 0.0), (0.5, 0.5), (0.8, 0.9)] {
            let m = ArNullModel::from_moments(mu, rho, 0.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let y = m.simulate(1_000_000, &mut rng);
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let cov1 = y.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n;
            assert!((mean - mu).abs() < 0.02, "mu {mu} rho {rho}: mean {mean}");
            assert!((cov1 / var - rho).abs() < 0.05, "mu {mu} rho {rho}: rho {}", cov1 / var);
        }
    }

    #[test]
    fn sentinel_maxima_pin_the_p_value() {
        let cues = alternating_cues(30.0, 4);
        let null = ArNullModel::from_moments(0.5, 0.8, 0.0).unwrap();
        let dcfg = DecoderConfig::new(0.3, 0.7);
        let pcfg = PlantConfig::default();
        let (p_hi, maxima) =
            monte_carlo_p(&cues, 1.01, &null, &dcfg, &pcfg, 50, 7).unwrap();
        assert_eq!(p_hi, 0.0);
        let (p_lo, _) = monte_carlo_p(&cues, -1.01, &null, &dcfg, &pcfg, 50, 7).unwrap();
        assert_eq!(p_lo, 1.0);
        assert_eq!(maxima.len(), 50);
        assert!(maxima.windows(2).all(|w| w[0] <= w[1]), "maxima must come back sorted");
    }

    #[test]
    fn p_value_is_monotone_in_the_observed_maximum() {
        let cues = alternating_cues(30.0, 4);
        let null = ArNullModel::from_moments(0.5, 0.8, 0.0).unwrap();
        let dcfg = DecoderConfig::new(0.3, 0.7);
        let pcfg = PlantConfig::default();
        let mut last = f64::INFINITY;
        for obs in [-0.5, 0.0, 0.2, 0.5, 0.9] {
            let (p, _) = monte_carlo_p(&cues, obs, &null, &dcfg, &pcfg, 100, 3).unwrap();
            assert!(p <= last, "p rose from {last} to {p} at obs {obs}");
            last = p;
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let cues = alternating_cues(30.0, 4);
        let null = ArNullModel::from_moments(0.5, 0.8, 0.0).unwrap();
        let dcfg = DecoderConfig::new(0.3, 0.7);
        let pcfg = PlantConfig::default();
        let a = monte_carlo_p(&cues, 0.3, &null, &dcfg, &pcfg, 64, 11).unwrap();
        let b = monte_carlo_p(&cues, 0.3, &null, &dcfg, &pcfg, 64, 11).unwrap();
        assert_eq!(a, b);
    }

    fn bimodal_log(seed: u64, n_per_phase: usize) -> Vec<(f64, ClassLabel)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log = Vec::new();
        for _ in 0..n_per_phase {
            let idle = (0.1 + 0.08 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
            let walk = (0.9 + 0.08 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0);
            log.push((idle, ClassLabel::Idle));
            log.push((walk, ClassLabel::Walk));
        }
        log
    }

    #[test]
    fn bimodal_calibration_brackets_the_modes() {
        let log = bimodal_log(2, 500);
        let cal = calibrate(&log).unwrap();
        assert!(cal.t_idle < 0.5, "t_idle {}", cal.t_idle);
        assert!(cal.t_walk < 0.5, "t_walk {} should sit atop the idle mode", cal.t_walk);
        assert!(cal.t_idle <= cal.t_walk);
        let total: usize = cal.histogram.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, log.len());
        // Mass concentrates in the two modes.
        let mode_mass: usize = cal
            .histogram
            .iter()
            .filter(|&&(lo, _)| (0.04..0.16).contains(&lo) || (0.84..0.96).contains(&lo))
            .map(|&(_, c)| c)
            .sum();
        assert_eq!(mode_mass, log.len());
    }

    #[test]
    fn single_phase_log_is_insufficient() {
        let log: Vec<(f64, ClassLabel)> = (0..100).map(|_| (0.5, ClassLabel::Idle)).collect();
        assert!(matches!(calibrate(&log), Err(Error::InsufficientData(_))));
    }

    /// Count OM + FA if the hysteresis machine ran directly on the
    /// calibration P̄ sequence with a given threshold pair.
    fn events_for_thresholds(log: &[(f64, ClassLabel)], t_i: f64, t_w: f64) -> usize {
        let mut state = ClassLabel::Idle;
        let mut walked_this_epoch = false;
        let mut events = 0;
        let mut prev_phase = ClassLabel::Idle;
        let mut prev_state = ClassLabel::Idle;
        for &(p, phase) in log {
            if phase != prev_phase {
                if prev_phase == ClassLabel::Walk && !walked_this_epoch {
                    events += 1; // omission
                }
                walked_this_epoch = false;
                prev_phase = phase;
            }
            state = match state {
                ClassLabel::Idle if p > t_w => ClassLabel::Walk,
                ClassLabel::Walk if p < t_i => ClassLabel::Idle,
                s => s,
            };
            if phase == ClassLabel::Walk && state == ClassLabel::Walk {
                walked_this_epoch = true;
            }
            if phase == ClassLabel::Idle
                && state == ClassLabel::Walk
                && prev_state == ClassLabel::Idle
            {
                events += 1; // false alarm onset
            }
            prev_state = state;
        }
        if prev_phase == ClassLabel::Walk && !walked_this_epoch {
            events += 1;
        }
        events
    }

    #[test]
    fn percentile_rule_is_near_the_grid_search_optimum() {
        // Phase-coherent log shaped like a saturated decoder's averaged
        // posteriors: heavy atoms near 0 and 1 with quantized excursions
        // (ring averaging quantizes P̄ in eighths). The percentile rule
        // targets this separated regime; with broadly overlapping
        // continuous distributions no fixed percentile can match an
        // exhaustive search.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut log = Vec::new();
        for _ in 0..10 {
            for _ in 0..40 {
                let p = if rng.gen::<f64>() < 0.8 { 0.02 } else { 0.02 + 1.0 / 8.0 };
                log.push((p, ClassLabel::Idle));
            }
            for _ in 0..40 {
                let p = if rng.gen::<f64>() < 0.8 { 0.97 } else { 0.97 - 1.0 / 8.0 };
                log.push((p, ClassLabel::Walk));
            }
        }
        let cal = calibrate(&log).unwrap();
        let suggested = events_for_thresholds(&log, cal.t_idle, cal.t_walk);
        let mut best = usize::MAX;
        for i in 0..=50 {
            for j in i..=50 {
                let (t_i, t_w) = (i as f64 * 0.02, j as f64 * 0.02);
                best = best.min(events_for_thresholds(&log, t_i, t_w));
            }
        }
        assert!(
            suggested <= best + 1,
            "suggested thresholds give {suggested} events, grid best {best}"
        );
    }

    #[test]
    fn report_round_trip() {
        let report = SessionReport {
            xcorr_max: 0.81,
            lag_at_max: 7.25,
            xcorr_decoder_max: 0.9,
            omissions: 0,
            false_alarms: 1,
            fa_durations: vec![12.0],
            p_value: Some(0.0),
            n_mc: 10_000,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(SessionReport::load(&path).unwrap(), report);
    }
}

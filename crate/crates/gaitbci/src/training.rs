//! Offline trainer: artifact channel rejection, windowed band-power
//! trial extraction, greedy frequency-band search under stratified
//! cross-validation, and prediction-model persistence.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::BayesModel;
use crate::error::{Error, Result};
use crate::features::{Criterion, FeatureExtractor};
use crate::signal::{label_epochs, ClassLabel, CueSchedule, Recording};
use crate::spectral::{restrict_band, BinSpec, PsdEstimator, SpectralSample, WindowSpec};

const MODEL_FORMAT: &str = "gaitbci-model";
const MODEL_VERSION: u32 = 1;

/// Everything the trainer needs beyond the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Retained variance fraction per class subspace.
    pub kappa: f64,
    pub criterion: Criterion,
    /// One-sided robust-z thresholds for channel rejection.
    pub z_var: f64,
    pub z_kurt: f64,
    /// Starting band for the greedy search, Hz.
    pub seed_band: (f64, f64),
    /// Minimum CV-accuracy gain for a band move to be taken.
    pub band_epsilon: f64,
    pub folds: usize,
    /// Guard margin trimmed from each cue epoch, seconds.
    pub guard: f64,
    pub window: WindowSpec,
    pub bin_width: f64,
    pub seed: u64,
    /// Override for (P(Idle), P(Walk)); empirical frequencies otherwise.
    pub priors: Option<(f64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kappa: 0.9,
            criterion: Criterion::Aida,
            z_var: 4.0,
            z_kurt: 4.0,
            seed_band: (6.0, 14.0),
            band_epsilon: 0.001,
            folds: 10,
            guard: 0.0,
            window: WindowSpec::default(),
            bin_width: 2.0,
            seed: 1,
            priors: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !(self.z_var > 0.0 && self.z_kurt > 0.0) {
            return Err(Error::Config("rejection thresholds must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config("kappa must be in (0, 1]".into()));
        }
        self.window.validate()
    }
}

/// The trained artifact: everything the online decoder needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub retained_channels: Vec<usize>,
    /// Selected frequency band [F_L, F_H) in Hz.
    pub band: (f64, f64),
    pub bin_width: f64,
    pub window: WindowSpec,
    pub feature_extractor: FeatureExtractor,
    pub bayes: BayesModel,
    /// (mean, sd) of fold accuracies at the selected band.
    pub cv_accuracy: (f64, f64),
    /// SHA-256 over training samples, cues, and config.
    pub training_fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: PredictionModel,
}

impl PredictionModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Format(format!("model serialization failed: {e}")))?;
        // Write via a temp file so a failure never leaves a partial model.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&json)
            .map_err(|e| Error::Format(format!("model parse failed: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model file: format {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model file version {} does not match supported version {MODEL_VERSION}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn robust_z(stats: &[f64]) -> Vec<f64> {
    let mut tmp = stats.to_vec();
    let med = median(&mut tmp);
    let mut dev: Vec<f64> = stats.iter().map(|s| (s - med).abs()).collect();
    let mad = median(&mut dev);
    let scale = 1.4826 * mad + 1e-12;
    stats.iter().map(|s| (s - med) / scale).collect()
}

/// Exclude channels whose log-variance or kurtosis sticks out above the
/// channel population (one-sided robust z). Never returns an empty set.
///
/// Statistics are computed per ~5 s block and aggregated with the
/// median across blocks, so a channel is flagged for what it looks like
/// most of the time. Whole-recording moments would instead see slow,
/// task-locked amplitude changes as a heavy-tailed mixture and flag
/// exactly the channels that carry the signal of interest.
pub fn reject_channels(rec: &Recording, z_var: f64, z_kurt: f64) -> Result<Vec<usize>> {
    let n_ch = rec.n_channels();
    if n_ch < 2 {
        return Err(Error::InsufficientData("need at least 2 channels".into()));
    }
    let block = ((rec.fs() * 5.0).round() as usize).clamp(1, rec.n_samples());
    let mut log_var = Vec::with_capacity(n_ch);
    let mut kurt = Vec::with_capacity(n_ch);
    for c in 0..n_ch {
        let x = rec.channel(c);
        let mut block_lv = Vec::new();
        let mut block_kurt = Vec::new();
        for chunk in x.chunks(block) {
            if chunk.len() < block.min(x.len()) {
                break; // drop a short trailing remainder
            }
            let n = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m4 = chunk.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
            block_lv.push(var.max(f64::MIN_POSITIVE).ln());
            block_kurt.push(if var > 0.0 { m4 / (var * var) - 3.0 } else { 0.0 });
        }
        log_var.push(median(&mut block_lv));
        kurt.push(median(&mut block_kurt));
    }
    if log_var.iter().all(|&v| v == f64::MIN_POSITIVE.ln()) {
        return Err(Error::DegenerateData("all channels are zero".into()));
    }
    let zv = robust_z(&log_var);
    let zk = robust_z(&kurt);
    let retained: Vec<usize> = (0..n_ch)
        .filter(|&c| zv[c] <= z_var && zk[c] <= z_kurt)
        .collect();
    if retained.is_empty() {
        // Keep the single least-outlying channel.
        let best = (0..n_ch)
            .min_by(|&a, &b| {
                let sa = zv[a].max(zk[a]);
                let sb = zv[b].max(zk[b]);
                sa.partial_cmp(&sb).unwrap()
            })
            .unwrap();
        return Ok(vec![best]);
    }
    Ok(retained)
}

/// Slice each labeled epoch with the training window geometry and reduce
/// every window to a full-grid band-power trial.
pub fn extract_trials(
    rec: &Recording,
    cues: &CueSchedule,
    window: &WindowSpec,
    bins: BinSpec,
    guard: f64,
) -> Result<Vec<(SpectralSample, ClassLabel)>> {
    let fs = rec.fs();
    let epochs = label_epochs(rec, cues, guard)?;
    let win = window.length_samples(fs);
    let step = window.step_samples(fs);
    let est = PsdEstimator::new(fs, win, bins)?;
    let mut trials = Vec::new();
    for epoch in &epochs {
        let a = (epoch.start * fs).round() as usize;
        let b = ((epoch.end * fs).round() as usize).min(rec.n_samples());
        if b <= a || b - a < win {
            continue;
        }
        let mut k = a;
        while k + win <= b {
            let channels: Vec<&[f64]> =
                rec.channels().iter().map(|ch| &ch[k..k + win]).collect();
            trials.push((est.estimate(&channels, k as f64 / fs)?, epoch.class));
            k += step;
        }
    }
    if trials.is_empty() {
        return Err(Error::InsufficientData("no trials could be extracted".into()));
    }
    Ok(trials)
}

/// Class-stratified fold assignment, one fold index per trial.
pub fn stratified_folds(labels: &[ClassLabel], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in [ClassLabel::Idle, ClassLabel::Walk] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < folds {
            return Err(Error::InsufficientData(format!(
                "class {class} has {} trials for {folds} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    Ok(assignment)
}

/// Fit the feature map and classifier on every trial not in `fold`.
/// This is the only fitting path cross-validation uses, so held-out
/// samples can never leak into the fitted parameters.
pub fn fit_on_training_folds(
    trials: &[(SpectralSample, ClassLabel)],
    assignment: &[usize],
    fold: usize,
    kappa: f64,
    criterion: Criterion,
    priors: Option<(f64, f64)>,
) -> Result<(FeatureExtractor, BayesModel)> {
    let train: Vec<(SpectralSample, ClassLabel)> = trials
        .iter()
        .zip(assignment)
        .filter(|(_, &a)| a != fold)
        .map(|((s, c), _)| (s.clone(), *c))
        .collect();
    fit_full(&train, kappa, criterion, priors)
}

/// Fit feature map and classifier on a trial set.
pub fn fit_full(
    trials: &[(SpectralSample, ClassLabel)],
    kappa: f64,
    criterion: Criterion,
    priors: Option<(f64, f64)>,
) -> Result<(FeatureExtractor, BayesModel)> {
    let fx = FeatureExtractor::fit(trials, kappa, criterion)?;
    // Every trial contributes to both branches so each branch carries a
    // full pair of class densities in its own coordinates; at decode
    // time only the routed branch's pair is consulted.
    let mut feats: Vec<(f64, ClassLabel, ClassLabel)> =
        Vec::with_capacity(2 * trials.len());
    for (s, c) in trials {
        for branch in [ClassLabel::Idle, ClassLabel::Walk] {
            feats.push((fx.extract_in_branch(s, branch)?, branch, *c));
        }
    }
    let bayes = BayesModel::fit(&feats, priors)?;
    Ok((fx, bayes))
}

/// Stratified k-fold cross-validated accuracy with a fixed fold
/// assignment. Returns (mean, sd) over folds.
pub fn cross_validate(
    trials: &[(SpectralSample, ClassLabel)],
    assignment: &[usize],
    folds: usize,
    kappa: f64,
    criterion: Criterion,
    priors: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    let fold_acc: Vec<f64> = (0..folds)
        .into_par_iter()
        .map(|fold| -> Result<f64> {
            let (fx, bayes) =
                fit_on_training_folds(trials, assignment, fold, kappa, criterion, priors)?;
            let mut correct = 0usize;
            let mut total = 0usize;
            for ((s, c), &a) in trials.iter().zip(assignment) {
                if a != fold {
                    continue;
                }
                let (f, branch) = fx.extract(s)?;
                if bayes.classify(f, branch) == *c {
                    correct += 1;
                }
                total += 1;
            }
            Ok(correct as f64 / total as f64)
        })
        .collect::<Result<_>>()?;
    let n = fold_acc.len() as f64;
    let mean = fold_acc.iter().sum::<f64>() / n;
    let sd = (fold_acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok((mean, sd))
}

fn cv_for_band(
    full_trials: &[(SpectralSample, ClassLabel)],
    band: (f64, f64),
    assignment: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let restricted: Vec<(SpectralSample, ClassLabel)> = full_trials
        .iter()
        .map(|(s, c)| Ok((restrict_band(s, band.0, band.1)?, *c)))
        .collect::<Result<_>>()?;
    cross_validate(&restricted, assignment, cfg.folds, cfg.kappa, cfg.criterion, cfg.priors)
}

/// Greedy hill-climbing band search: from the seed band, repeatedly take
/// the single bin-width boundary move that most improves CV accuracy;
/// stop when no move gains more than `band_epsilon`. Fold assignments
/// are fixed across candidates, so comparisons are deterministic.
/// Returns the best visited band and its (mean, sd) accuracy.
pub fn search_band(
    full_trials: &[(SpectralSample, ClassLabel)],
    cfg: &TrainConfig,
    assignment: &[usize],
) -> Result<((f64, f64), (f64, f64))> {
    let grid = full_trials
        .first()
        .map(|(s, _)| s.bins)
        .ok_or_else(|| Error::InsufficientData("no trials".into()))?;
    let bw = cfg.bin_width;
    let valid = |band: (f64, f64)| {
        band.0 >= grid.f_lo - 1e-9 && band.1 <= grid.f_hi + 1e-9 && band.1 - band.0 >= bw - 1e-9
    };
    if !valid(cfg.seed_band) {
        return Err(Error::Config(format!(
            "seed band [{}, {}) outside available grid [{}, {})",
            cfg.seed_band.0, cfg.seed_band.1, grid.f_lo, grid.f_hi
        )));
    }
    let mut cache: std::collections::HashMap<(i64, i64), (f64, f64)> = Default::default();
    let key = |b: (f64, f64)| ((b.0 * 1000.0).round() as i64, (b.1 * 1000.0).round() as i64);
    let mut eval = |band: (f64, f64)| -> Result<(f64, f64)> {
        if let Some(&acc) = cache.get(&key(band)) {
            return Ok(acc);
        }
        let acc = cv_for_band(full_trials, band, assignment, cfg)?;
        cache.insert(key(band), acc);
        Ok(acc)
    };

    let mut current = cfg.seed_band;
    let mut current_acc = eval(current)?;
    let mut best = (current, current_acc);
    loop {
        let (lo, hi) = current;
        // Fixed move order breaks accuracy ties deterministically.
        let moves = [(lo - bw, hi), (lo, hi + bw), (lo + bw, hi), (lo, hi - bw)];
        let mut chosen: Option<((f64, f64), (f64, f64))> = None;
        for mv in moves {
            if !valid(mv) {
                continue;
            }
            let acc = eval(mv)?;
            if acc.0 > current_acc.0 + cfg.band_epsilon
                && chosen.map_or(true, |(_, a)| acc.0 > a.0)
            {
                chosen = Some((mv, acc));
            }
        }
        match chosen {
            Some((mv, acc)) => {
                current = mv;
                current_acc = acc;
                if acc.0 > best.1 .0 {
                    best = (mv, acc);
                }
            }
            None => break,
        }
    }
    Ok(best)
}

fn fingerprint(rec: &Recording, cues: &CueSchedule, cfg: &TrainConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(rec.fs().to_le_bytes());
    for ch in rec.channels() {
        for &v in ch {
            hasher.update(v.to_le_bytes());
        }
    }
    for &(state, d) in cues.entries() {
        hasher.update([state as u8]);
        hasher.update(d.to_le_bytes());
    }
    hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// End-to-end offline training.
pub fn train(rec: &Recording, cues: &CueSchedule, cfg: &TrainConfig) -> Result<PredictionModel> {
    cfg.validate()?;
    let retained = reject_channels(rec, cfg.z_var, cfg.z_kurt)?;
    let reduced = rec.select_channels(&retained)?;
    let grid = BinSpec { bin_width: cfg.bin_width, ..BinSpec::full_grid(rec.fs()) };
    let full_trials = extract_trials(&reduced, cues, &cfg.window, grid, cfg.guard)?;
    let labels: Vec<ClassLabel> = full_trials.iter().map(|(_, c)| *c).collect();
    let assignment = stratified_folds(&labels, cfg.folds, cfg.seed)?;
    let (band, cv_accuracy) = search_band(&full_trials, cfg, &assignment)?;
    let final_trials: Vec<(SpectralSample, ClassLabel)> = full_trials
        .iter()
        .map(|(s, c)| Ok((restrict_band(s, band.0, band.1)?, *c)))
        .collect::<Result<_>>()?;
    let (feature_extractor, bayes) =
        fit_full(&final_trials, cfg.kappa, cfg.criterion, cfg.priors)?;
    Ok(PredictionModel {
        retained_channels: retained,
        band,
        bin_width: cfg.bin_width,
        window: cfg.window,
        feature_extractor,
        bayes,
        cv_accuracy,
        training_fingerprint: fingerprint(rec, cues, cfg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn noise_recording(n_ch: usize, dur_s: f64, fs: f64, seed: u64) -> Recording {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (dur_s * fs) as usize;
        let samples: Vec<Vec<f64>> = (0..n_ch)
            .map(|_| (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let labels = (0..n_ch).map(|i| format!("ch{i}")).collect();
        Recording::new(samples, fs, labels, 0.0).unwrap()
    }

    #[test]
    fn homogeneous_channels_all_retained() {
        let rec = noise_recording(16, 10.0, 256.0, 3);
        let kept = reject_channels(&rec, 4.0, 4.0).unwrap();
        assert_eq!(kept.len(), 16);
    }

    #[test]
    fn scaled_channel_is_excluded() {
        let mut rec = noise_recording(16, 10.0, 256.0, 3);
        let mut samples: Vec<Vec<f64>> = rec.channels().to_vec();
        for v in samples[5].iter_mut() {
            *v *= 100.0;
        }
        rec = Recording::new(samples, 256.0, rec.channel_labels().to_vec(), 0.0).unwrap();
        let kept = reject_channels(&rec, 4.0, 4.0).unwrap();
        assert!(!kept.contains(&5));
        assert_eq!(kept.len(), 15);
    }

    #[test]
    fn rejection_decision_follows_the_channel_under_permutation() {
        let mut rec = noise_recording(12, 8.0, 256.0, 9);
        let mut samples: Vec<Vec<f64>> = rec.channels().to_vec();
        for v in samples[2].iter_mut() {
            *v *= 50.0;
        }
        rec = Recording::new(samples.clone(), 256.0, rec.channel_labels().to_vec(), 0.0).unwrap();
        let kept_a = reject_channels(&rec, 4.0, 4.0).unwrap();

        // Permute channels; the same waveform must get the same verdict.
        let perm: Vec<usize> = (0..12).rev().collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| samples[i].clone()).collect();
        let rec_p = Recording::new(
            permuted,
            256.0,
            perm.iter().map(|i| format!("ch{i}")).collect(),
            0.0,
        )
        .unwrap();
        let kept_b = reject_channels(&rec_p, 4.0, 4.0).unwrap();
        let verdict_a: Vec<bool> = (0..12).map(|c| kept_a.contains(&c)).collect();
        let verdict_b: Vec<bool> = (0..12).map(|c| kept_b.contains(&perm[c])).collect();
        let verdict_b_orig: Vec<bool> = perm
            .iter()
            .enumerate()
            .map(|(pos, &orig)| {
                let _ = orig;
                verdict_b[pos]
            })
            .collect();
        // kept_b indexes positions in the permuted recording; map back.
        let mut back = vec![false; 12];
        for (pos, &orig) in perm.iter().enumerate() {
            back[orig] = kept_b.contains(&pos);
        }
        let _ = verdict_b_orig;
        assert_eq!(verdict_a, back);
    }

    #[test]
    fn all_zero_channels_are_degenerate() {
        let rec = Recording::new(
            vec![vec![0.0; 512], vec![0.0; 512]],
            256.0,
            vec!["a".into(), "b".into()],
            0.0,
        )
        .unwrap();
        assert!(matches!(reject_channels(&rec, 4.0, 4.0), Err(Error::DegenerateData(_))));
    }

    fn toy_trial(dims: usize, mut fill: impl FnMut(usize) -> f64) -> SpectralSample {
        let values = DMatrix::from_fn(dims, 1, |r, _| fill(r));
        SpectralSample {
            values,
            window_start: 0.0,
            bins: BinSpec::new(2.0, 2.0, 2.0 + 2.0 * dims as f64),
        }
    }

    fn separable_trials(n_per_class: usize, seed: u64) -> Vec<(SpectralSample, ClassLabel)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trials = Vec::new();
        for _ in 0..n_per_class {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            trials.push((toy_trial(3, |r| if r == 0 { a } else { b * 0.1 }), ClassLabel::Idle));
            trials.push((
                toy_trial(3, |r| if r == 0 { a + 10.0 } else { b * 0.1 }),
                ClassLabel::Walk,
            ));
        }
        trials
    }

    #[test]
    fn perfectly_separable_trials_reach_full_accuracy() {
        let trials = separable_trials(30, 5);
        let labels: Vec<ClassLabel> = trials.iter().map(|(_, c)| *c).collect();
        let assignment = stratified_folds(&labels, 10, 0).unwrap();
        let (mean, sd) =
            cross_validate(&trials, &assignment, 10, 0.95, Criterion::Lda, None).unwrap();
        assert_eq!(mean, 1.0);
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut trials = separable_trials(60, 5);
        // Destroy the label-feature link, keep the class balance.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut labels: Vec<ClassLabel> = trials.iter().map(|(_, c)| *c).collect();
        labels.shuffle(&mut rng);
        for ((_, c), l) in trials.iter_mut().zip(&labels) {
            *c = *l;
        }
        let assignment = stratified_folds(&labels, 10, 0).unwrap();
        let (mean, _) =
            cross_validate(&trials, &assignment, 10, 0.95, Criterion::Lda, None).unwrap();
        assert!((0.4..=0.6).contains(&mean), "shuffled accuracy {mean}");
    }

    #[test]
    fn folds_are_stratified_within_one_trial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..100 {
            let n_idle = 40 + (rng.gen::<u64>() % 20) as usize;
            let n_walk = 40 + (rng.gen::<u64>() % 20) as usize;
            let labels: Vec<ClassLabel> = (0..n_idle)
                .map(|_| ClassLabel::Idle)
                .chain((0..n_walk).map(|_| ClassLabel::Walk))
                .collect();
            let folds = 10;
            let assignment = stratified_folds(&labels, folds, seed).unwrap();
            for fold in 0..folds {
                for class in [ClassLabel::Idle, ClassLabel::Walk] {
                    let total = labels.iter().filter(|&&c| c == class).count();
                    let in_fold = labels
                        .iter()
                        .zip(&assignment)
                        .filter(|(&c, &a)| c == class && a == fold)
                        .count();
                    let expected = total as f64 / folds as f64;
                    assert!(
                        (in_fold as f64 - expected).abs() <= 1.0,
                        "fold {fold} has {in_fold} of {total} {class} trials"
                    );
                }
            }
        }
    }

    #[test]
    fn corrupting_the_test_fold_never_changes_fitted_parameters() {
        let trials = separable_trials(20, 8);
        let labels: Vec<ClassLabel> = trials.iter().map(|(_, c)| *c).collect();
        let assignment = stratified_folds(&labels, 5, 2).unwrap();
        let (fx_a, bayes_a) =
            fit_on_training_folds(&trials, &assignment, 0, 0.95, Criterion::Lda, None).unwrap();
        let mut corrupted = trials.clone();
        for ((s, _), &a) in corrupted.iter_mut().zip(&assignment) {
            if a == 0 {
                s.values.fill(1e9);
            }
        }
        let (fx_b, bayes_b) =
            fit_on_training_folds(&corrupted, &assignment, 0, 0.95, Criterion::Lda, None).unwrap();
        assert_eq!(fx_a, fx_b);
        assert_eq!(bayes_a, bayes_b);
    }

    /// Synthetic full-grid trials whose only class information lives in
    /// the [8, 12) bins.
    fn band_limited_trials(n_per_class: usize, seed: u64) -> Vec<(SpectralSample, ClassLabel)> {
        let bins = BinSpec::new(2.0, 2.0, 30.0);
        let nb = bins.n_bins();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for _ in 0..n_per_class {
            for class in [ClassLabel::Idle, ClassLabel::Walk] {
                let values = DMatrix::from_fn(nb, 2, |r, _| {
                    let f = bins.bin_lo(r);
                    let base: f64 = 1.0 + 0.2 * rng.gen::<f64>();
                    if (8.0..12.0).contains(&f) && class == ClassLabel::Walk {
                        base * 0.3
                    } else {
                        base
                    }
                });
                out.push((SpectralSample { values, window_start: 0.0, bins }, class));
            }
        }
        out
    }

    #[test]
    fn band_search_finds_the_informative_band() {
        let trials = band_limited_trials(60, 4);
        let labels: Vec<ClassLabel> = trials.iter().map(|(_, c)| *c).collect();
        let cfg = TrainConfig { seed_band: (6.0, 14.0), ..Default::default() };
        let assignment = stratified_folds(&labels, cfg.folds, cfg.seed).unwrap();
        let (band, acc) = search_band(&trials, &cfg, &assignment).unwrap();
        assert!(band.0 <= 8.0 && band.1 >= 12.0, "band {band:?} misses [8, 12)");
        // Exhaustive oracle over the small grid: the greedy result must
        // not trail the best band by more than epsilon noise.
        let mut best = (0.0, (0.0, 0.0));
        for lo_i in 0..14 {
            for hi_i in (lo_i + 1)..15 {
                let band = (2.0 + 2.0 * lo_i as f64, 2.0 + 2.0 * hi_i as f64);
                let a = cv_for_band(&trials, band, &assignment, &cfg).unwrap();
                if a.0 > best.0 {
                    best = (a.0, band);
                }
            }
        }
        assert!(
            acc.0 >= best.0 - 0.02,
            "greedy accuracy {} well below exhaustive optimum {} at {:?}",
            acc.0,
            best.0,
            best.1
        );
    }

    #[test]
    fn flat_data_keeps_the_seed_band() {
        let bins = BinSpec::new(2.0, 2.0, 30.0);
        let nb = bins.n_bins();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials: Vec<(SpectralSample, ClassLabel)> = (0..200)
            .map(|i| {
                // Bin-constant power: every band restriction sees the
                // same data up to scale, so no move can help.
                let levels = [1.0 + 0.2 * rng.gen::<f64>(), 1.0 + 0.2 * rng.gen::<f64>()];
                let values = DMatrix::from_fn(nb, 2, |_, c| levels[c]);
                let class = if i % 2 == 0 { ClassLabel::Idle } else { ClassLabel::Walk };
                (SpectralSample { values, window_start: 0.0, bins }, class)
            })
            .collect();
        let labels: Vec<ClassLabel> = trials.iter().map(|(_, c)| *c).collect();
        let cfg = TrainConfig::default();
        let assignment = stratified_folds(&labels, cfg.folds, cfg.seed).unwrap();
        let (band, acc) = search_band(&trials, &cfg, &assignment).unwrap();
        // No move can clear the epsilon gate on uninformative data, and
        // greedy never returns worse than its start.
        assert_eq!(band, cfg.seed_band);
        let seed_acc = cv_for_band(&trials, cfg.seed_band, &assignment, &cfg).unwrap();
        assert!(acc.0 >= seed_acc.0);
    }

    #[test]
    fn model_file_round_trip_is_exact_and_versioned() {
        let trials = separable_trials(20, 13);
        let (fx, bayes) = fit_full(&trials, 0.95, Criterion::Aida, None).unwrap();
        let model = PredictionModel {
            retained_channels: vec![0, 1, 2],
            band: (8.0, 12.0),
            bin_width: 2.0,
            window: WindowSpec::default(),
            feature_extractor: fx,
            bayes,
            cv_accuracy: (0.97, 0.01),
            training_fingerprint: "feed".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = PredictionModel::load(&path).unwrap();
        assert_eq!(model, back);

        // Loaded model agrees bitwise with the in-memory one.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let s = toy_trial(3, |_| rng.gen::<f64>() * 20.0 - 10.0);
            let (f_a, b_a) = model.feature_extractor.extract(&s).unwrap();
            let (f_b, b_b) = back.feature_extractor.extract(&s).unwrap();
            assert_eq!(f_a.to_bits(), f_b.to_bits());
            assert_eq!(b_a, b_b);
            assert_eq!(
                model.bayes.posterior(f_a, b_a).to_bits(),
                back.bayes.posterior(f_b, b_b).to_bits()
            );
        }

        // Version mismatch fails loudly.
        let json = std::fs::read_to_string(&path).unwrap();
        let bumped = json.replacen("\"version\": 1", "\"version\": 999", 1);
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(PredictionModel::load(&path), Err(Error::Format(_))));
    }
}

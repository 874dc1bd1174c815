//! Spatio-spectral feature extraction: per-class PCA subspaces with a
//! likelihood-based piecewise branch rule, followed by a 1-D linear
//! discriminant per branch.
//!
//! A datum (bins x channels band-power matrix) is flattened, assigned to
//! the class subspace under which it is most likely, projected there,
//! and reduced to a scalar by that branch's discriminant vector. Within
//! a branch the whole map is affine.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ClassLabel;
use crate::spectral::SpectralSample;

/// Diagonal loading factor applied to covariances before inversion.
const COV_REG: f64 = 1e-6;
/// Relative floor for eigenvalues and residual variances.
const VAR_FLOOR_REL: f64 = 1e-9;

const AIDA_TOL: f64 = 1e-8;
const AIDA_MAX_ITER: usize = 500;
const AIDA_RANDOM_STARTS: usize = 8;
const AIDA_SEED: u64 = 0xA1DA;

/// Which 1-D criterion the discriminant fit maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// Approximate mutual information between class label and projection,
    /// sensitive to both mean and variance differences.
    Aida,
    /// Fisher discriminant: pooled-covariance whitened mean difference.
    Lda,
}

/// One class's principal subspace plus the Gaussian description used by
/// the branch-selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubspace {
    pub class: ClassLabel,
    /// Mean of this class's flattened training trials (length p).
    pub mean: DVector<f64>,
    /// Orthonormal basis, p x m.
    pub basis: DMatrix<f64>,
    /// Variance along each basis vector (PCA eigenvalues), length m.
    pub basis_variances: Vec<f64>,
    /// Isotropic variance of the residual off-subspace directions.
    pub residual_variance: f64,
    /// Total variance of the class cloud (trace of its covariance).
    pub total_variance: f64,
    /// (mean, variance) of this class's training trials after projection
    /// and discrimination through this branch.
    pub gauss_1d: (f64, f64),
}

impl ClassSubspace {
    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn var_floor(&self) -> f64 {
        VAR_FLOOR_REL * self.total_variance / self.basis.nrows() as f64 + f64::MIN_POSITIVE
    }

    /// Log-likelihood of a flattened datum under this class's
    /// probabilistic-PCA Gaussian (subspace variances plus isotropic
    /// residual).
    pub fn log_likelihood(&self, x: &DVector<f64>) -> f64 {
        let p = self.basis.nrows() as f64;
        let m = self.basis.ncols() as f64;
        let floor = self.var_floor();
        let centered = x - &self.mean;
        let z = self.basis.transpose() * &centered;
        let r2 = (centered.norm_squared() - z.norm_squared()).max(0.0);
        let sigma2 = self.residual_variance.max(floor);
        let mut ll = -0.5 * p * (std::f64::consts::TAU).ln();
        for (zj, &lj) in z.iter().zip(&self.basis_variances) {
            let l = lj.max(floor);
            ll -= 0.5 * (zj * zj / l + l.ln());
        }
        ll -= 0.5 * (r2 / sigma2 + (p - m) * sigma2.ln());
        ll
    }
}

/// Unit-norm 1-D discriminant direction for one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantVector {
    pub branch: ClassLabel,
    pub w: DVector<f64>,
}

/// The fitted piecewise-linear feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub idle: ClassSubspace,
    pub walk: ClassSubspace,
    pub disc_idle: DiscriminantVector,
    pub disc_walk: DiscriminantVector,
    pub variance_fraction: f64,
    /// Expected datum shape (bins, channels).
    pub shape: (usize, usize),
}

fn flatten(sample: &SpectralSample) -> DVector<f64> {
    DVector::from_column_slice(sample.values.as_slice())
}

/// Per-class principal subspaces capturing at least `kappa` of each
/// class's variance. Returns (idle, walk) with placeholder 1-D moments;
/// `FeatureExtractor::fit` fills those in.
pub fn fit_cpca(
    trials: &[(SpectralSample, ClassLabel)],
    kappa: f64,
) -> Result<(ClassSubspace, ClassSubspace)> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Config(format!("variance fraction {kappa} not in (0, 1]")));
    }
    let shape = match trials.first() {
        Some((s, _)) => (s.n_bins(), s.n_channels()),
        None => return Err(Error::InsufficientData("no training trials".into())),
    };
    if trials.iter().any(|(s, _)| (s.n_bins(), s.n_channels()) != shape) {
        return Err(Error::Geometry("training trials have mixed shapes".into()));
    }
    let idle = fit_class_subspace(trials, ClassLabel::Idle, kappa)?;
    let walk = fit_class_subspace(trials, ClassLabel::Walk, kappa)?;
    Ok((idle, walk))
}

fn fit_class_subspace(
    trials: &[(SpectralSample, ClassLabel)],
    class: ClassLabel,
    kappa: f64,
) -> Result<ClassSubspace> {
    let xs: Vec<DVector<f64>> = trials
        .iter()
        .filter(|(_, c)| *c == class)
        .map(|(s, _)| flatten(s))
        .collect();
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "class {class} has {n} trials, need at least 2"
        )));
    }
    let p = xs[0].len();
    let mut mean = DVector::zeros(p);
    for x in &xs {
        mean += x;
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(p, n);
    for (j, x) in xs.iter().enumerate() {
        centered.set_column(j, &(x - &mean));
    }
    let cov = &centered * centered.transpose() / (n as f64 - 1.0);
    let total_variance = cov.trace();
    if total_variance <= 0.0 {
        return Err(Error::DegenerateData(format!(
            "class {class} training data has zero variance"
        )));
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rank_cap = p.min(n - 1);
    let mut m = 0;
    let mut captured = 0.0;
    while m < rank_cap {
        captured += eig.eigenvalues[order[m]].max(0.0);
        m += 1;
        if captured >= kappa * total_variance - 1e-12 * total_variance {
            break;
        }
    }
    let m = m.max(1);
    let mut basis = DMatrix::zeros(p, m);
    let mut basis_variances = Vec::with_capacity(m);
    for (col, &idx) in order[..m].iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(idx));
        basis_variances.push(eig.eigenvalues[idx].max(0.0));
    }
    let retained: f64 = basis_variances.iter().sum();
    let residual_variance = if p > m {
        ((total_variance - retained) / (p - m) as f64).max(0.0)
    } else {
        0.0
    };
    Ok(ClassSubspace {
        class,
        mean,
        basis,
        basis_variances,
        residual_variance,
        total_variance,
        gauss_1d: (0.0, 1.0),
    })
}

/// Class-wise means and regularized covariances of projected trials.
struct BranchStats {
    mean_idle: DVector<f64>,
    mean_walk: DVector<f64>,
    cov_idle: DMatrix<f64>,
    cov_walk: DMatrix<f64>,
}

fn branch_stats(idle: &[DVector<f64>], walk: &[DVector<f64>]) -> Result<BranchStats> {
    if idle.len() < 2 || walk.len() < 2 {
        return Err(Error::InsufficientData(
            "both classes need at least 2 projected trials".into(),
        ));
    }
    let m = idle[0].len();
    let stat = |xs: &[DVector<f64>]| {
        let n = xs.len() as f64;
        let mut mean = DVector::zeros(m);
        for x in xs {
            mean += x;
        }
        mean /= n;
        let mut cov = DMatrix::zeros(m, m);
        for x in xs {
            let d = x - &mean;
            cov.syger(1.0 / (n - 1.0), &d, &d, 1.0);
        }
        cov.fill_upper_triangle_with_lower_triangle();
        // Diagonal loading keeps the p >> n regime invertible.
        let load = COV_REG * cov.trace() / m as f64 + f64::MIN_POSITIVE;
        for i in 0..m {
            cov[(i, i)] += load;
        }
        (mean, cov)
    };
    let (mean_idle, cov_idle) = stat(idle);
    let (mean_walk, cov_walk) = stat(walk);
    Ok(BranchStats { mean_idle, mean_walk, cov_idle, cov_walk })
}

fn lda_direction(stats: &BranchStats) -> Result<DVector<f64>> {
    let pooled = (&stats.cov_idle + &stats.cov_walk) * 0.5;
    let delta = &stats.mean_walk - &stats.mean_idle;
    let chol = pooled
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("pooled covariance singular after regularization".into()))?;
    let mut w = chol.solve(&delta);
    let norm = w.norm();
    if norm == 0.0 || !norm.is_finite() {
        // Equal means: no Fisher direction; fall back to the first axis.
        w = DVector::zeros(delta.len());
        w[0] = 1.0;
        return Ok(w);
    }
    Ok(w / norm)
}

/// Approximate mutual-information score of a unit direction: a
/// Chernoff-style bound built from the two projected class Gaussians.
fn aida_objective(w: &DVector<f64>, stats: &BranchStats) -> f64 {
    let vi = (stats.cov_idle.clone() * w).dot(w);
    let vw = (stats.cov_walk.clone() * w).dot(w);
    let avg = 0.5 * (vi + vw);
    let dm = w.dot(&stats.mean_walk) - w.dot(&stats.mean_idle);
    0.5 * (avg / (vi * vw).sqrt()).ln() + 0.25 * dm * dm / avg
}

fn aida_gradient(w: &DVector<f64>, stats: &BranchStats) -> DVector<f64> {
    let si_w = &stats.cov_idle * w;
    let sw_w = &stats.cov_walk * w;
    let vi = si_w.dot(w);
    let vw = sw_w.dot(w);
    let avg = 0.5 * (vi + vw);
    let delta = &stats.mean_walk - &stats.mean_idle;
    let dm = w.dot(&delta);
    let sum_w = &si_w + &sw_w;
    // d/dw of 0.5 ln(avg) - 0.25 ln(vi) - 0.25 ln(vw) + 0.25 dm^2 / avg
    let mut g = &sum_w * (0.25 / avg);
    g -= &si_w * (0.5 / vi);
    g -= &sw_w * (0.5 / vw);
    g += &delta * (0.5 * dm / avg);
    g -= &sum_w * (0.125 * dm * dm / (avg * avg));
    g
}

fn ascend(start: DVector<f64>, stats: &BranchStats) -> (DVector<f64>, f64) {
    let mut w = start.normalize();
    let mut score = aida_objective(&w, stats);
    let mut eta = 0.1;
    for _ in 0..AIDA_MAX_ITER {
        let g = aida_gradient(&w, stats);
        // Tangential component; the objective is scale invariant.
        let g_t = &g - &w * g.dot(&w);
        if g_t.norm() < AIDA_TOL {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let cand = (&w + &g_t * eta).normalize();
            let s = aida_objective(&cand, stats);
            if s > score {
                w = cand;
                score = s;
                eta *= 1.5;
                improved = true;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (w, score)
}

/// Fit the 1-D discriminant for one branch from projected trials of both
/// classes. For `Criterion::Aida` the result never scores below the LDA
/// direction on the information objective, since LDA seeds the search.
pub fn fit_discriminant(
    branch: ClassLabel,
    projected_idle: &[DVector<f64>],
    projected_walk: &[DVector<f64>],
    criterion: Criterion,
) -> Result<DiscriminantVector> {
    let stats = branch_stats(projected_idle, projected_walk)?;
    let m = stats.mean_idle.len();
    let lda = lda_direction(&stats)?;
    let mut w = match criterion {
        Criterion::Lda => lda,
        Criterion::Aida => {
            if m == 1 {
                DVector::from_element(1, 1.0)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(AIDA_SEED);
                let mut best = ascend(lda.clone(), &stats);
                for _ in 0..AIDA_RANDOM_STARTS {
                    let v = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                    if v.norm() == 0.0 {
                        continue;
                    }
                    let cand = ascend(v, &stats);
                    if cand.1 > best.1 {
                        best = cand;
                    }
                }
                best.0
            }
        }
    };
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("discriminant direction is not finite".into()));
    }
    // Sign convention: walking projects higher than idling when the
    // means differ.
    if w.dot(&(&stats.mean_walk - &stats.mean_idle)) < 0.0 {
        w = -w;
    }
    Ok(DiscriminantVector { branch, w: w.normalize() })
}

impl FeatureExtractor {
    /// Full fit: class subspaces, per-branch discriminants,
    /// and the per-branch 1-D training moments.
    pub fn fit(
        trials: &[(SpectralSample, ClassLabel)],
        kappa: f64,
        criterion: Criterion,
    ) -> Result<Self> {
        let (idle, walk) = fit_cpca(trials, kappa)?;
        let shape = (trials[0].0.n_bins(), trials[0].0.n_channels());
        let project = |sub: &ClassSubspace, class: ClassLabel| -> Vec<DVector<f64>> {
            trials
                .iter()
                .filter(|(_, c)| *c == class)
                .map(|(s, _)| sub.basis.transpose() * (flatten(s) - &sub.mean))
                .collect()
        };
        let disc_idle = fit_discriminant(
            ClassLabel::Idle,
            &project(&idle, ClassLabel::Idle),
            &project(&idle, ClassLabel::Walk),
            criterion,
        )?;
        let disc_walk = fit_discriminant(
            ClassLabel::Walk,
            &project(&walk, ClassLabel::Idle),
            &project(&walk, ClassLabel::Walk),
            criterion,
        )?;
        let mut fx = Self { idle, walk, disc_idle, disc_walk, variance_fraction: kappa, shape };
        for class in [ClassLabel::Idle, ClassLabel::Walk] {
            let fs: Vec<f64> = trials
                .iter()
                .filter(|(_, c)| *c == class)
                .map(|(s, _)| fx.feature_in_branch(&flatten(s), class))
                .collect();
            let n = fs.len() as f64;
            let mean = fs.iter().sum::<f64>() / n;
            let var = fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
            match class {
                ClassLabel::Idle => fx.idle.gauss_1d = (mean, var),
                ClassLabel::Walk => fx.walk.gauss_1d = (mean, var),
            }
        }
        Ok(fx)
    }

    pub fn subspace(&self, branch: ClassLabel) -> &ClassSubspace {
        match branch {
            ClassLabel::Idle => &self.idle,
            ClassLabel::Walk => &self.walk,
        }
    }

    pub fn discriminant(&self, branch: ClassLabel) -> &DiscriminantVector {
        match branch {
            ClassLabel::Idle => &self.disc_idle,
            ClassLabel::Walk => &self.disc_walk,
        }
    }

    fn feature_in_branch(&self, x: &DVector<f64>, branch: ClassLabel) -> f64 {
        let sub = self.subspace(branch);
        let z = sub.basis.transpose() * (x - &sub.mean);
        self.discriminant(branch).w.dot(&z)
    }

    fn check_shape(&self, sample: &SpectralSample) -> Result<()> {
        if (sample.n_bins(), sample.n_channels()) != self.shape {
            return Err(Error::Geometry(format!(
                "sample is {}x{}, extractor expects {}x{}",
                sample.n_bins(),
                sample.n_channels(),
                self.shape.0,
                self.shape.1
            )));
        }
        Ok(())
    }

    /// Scalar feature of a sample expressed in a chosen branch,
    /// bypassing the likelihood routing. Training uses this to fit both
    /// class densities inside each branch.
    pub fn extract_in_branch(&self, sample: &SpectralSample, branch: ClassLabel) -> Result<f64> {
        self.check_shape(sample)?;
        Ok(self.feature_in_branch(&flatten(sample), branch))
    }

    /// Select a branch by class-conditional likelihood (ties go to Walk)
    /// and return the scalar feature of that branch.
    pub fn extract(&self, sample: &SpectralSample) -> Result<(f64, ClassLabel)> {
        self.check_shape(sample)?;
        let x = flatten(sample);
        let ll_idle = self.idle.log_likelihood(&x);
        let ll_walk = self.walk.log_likelihood(&x);
        let branch = if ll_idle > ll_walk { ClassLabel::Idle } else { ClassLabel::Walk };
        Ok((self.feature_in_branch(&x, branch), branch))
    }
}

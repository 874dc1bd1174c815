//! Linear Bayesian classifier in the 1-D feature domain.
//!
//! Each feature-map branch carries its own pair of class-conditional
//! Gaussians; posteriors are computed in the log domain and the decision
//! rule sends exact ties to Walk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ClassLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1d {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian1d {
    fn log_pdf(&self, f: f64) -> f64 {
        let d = f - self.mean;
        -0.5 * ((std::f64::consts::TAU * self.var).ln() + d * d / self.var)
    }
}

/// Class-conditional feature Gaussians for one branch of the feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchGaussians {
    pub idle: Gaussian1d,
    pub walk: Gaussian1d,
}

/// The full feature-domain classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesModel {
    pub idle_branch: BranchGaussians,
    pub walk_branch: BranchGaussians,
    /// (P(Idle), P(Walk)) class priors.
    pub priors: (f64, f64),
}

impl BayesModel {
    pub fn validate(&self) -> Result<()> {
        for b in [&self.idle_branch, &self.walk_branch] {
            for g in [&b.idle, &b.walk] {
                if !(g.var > 0.0) || !g.var.is_finite() || !g.mean.is_finite() {
                    return Err(Error::Config(format!(
                        "invalid class Gaussian (mean {}, var {})",
                        g.mean, g.var
                    )));
                }
            }
        }
        let (pi, pw) = self.priors;
        if !(pi >= 0.0 && pw >= 0.0 && (pi + pw - 1.0).abs() < 1e-9) {
            return Err(Error::Config(format!("priors ({pi}, {pw}) must be non-negative and sum to 1")));
        }
        Ok(())
    }

    /// Fit from training features routed through the feature map:
    /// (feature, branch it selected, true class). A branch missing one
    /// class (or holding a single point of it) falls back to that
    /// class's pooled feature statistics.
    pub fn fit(
        features: &[(f64, ClassLabel, ClassLabel)],
        prior_override: Option<(f64, f64)>,
    ) -> Result<Self> {
        let n_idle = features.iter().filter(|&&(_, _, c)| c == ClassLabel::Idle).count();
        let n_walk = features.len() - n_idle;
        if n_idle < 2 || n_walk < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 training features per class".into(),
            ));
        }
        let moments = |vals: &[f64]| -> Option<Gaussian1d> {
            if vals.len() < 2 {
                return None;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Some(Gaussian1d { mean, var })
        };
        let pooled_of = |class: ClassLabel| -> Gaussian1d {
            let vals: Vec<f64> = features
                .iter()
                .filter(|&&(_, _, c)| c == class)
                .map(|&(f, _, _)| f)
                .collect();
            moments(&vals).expect("class counts checked above")
        };
        let branch_of = |branch: ClassLabel, class: ClassLabel| -> Gaussian1d {
            let vals: Vec<f64> = features
                .iter()
                .filter(|&&(_, b, c)| b == branch && c == class)
                .map(|&(f, _, _)| f)
                .collect();
            let mut g = moments(&vals).unwrap_or_else(|| pooled_of(class));
            if !(g.var > 0.0) {
                g.var = pooled_of(class).var.max(f64::MIN_POSITIVE);
            }
            if !(g.var > 0.0) {
                g.var = 1e-12;
            }
            g
        };
        let priors = prior_override.unwrap_or((
            n_idle as f64 / features.len() as f64,
            n_walk as f64 / features.len() as f64,
        ));
        let model = Self {
            idle_branch: BranchGaussians {
                idle: branch_of(ClassLabel::Idle, ClassLabel::Idle),
                walk: branch_of(ClassLabel::Idle, ClassLabel::Walk),
            },
            walk_branch: BranchGaussians {
                idle: branch_of(ClassLabel::Walk, ClassLabel::Idle),
                walk: branch_of(ClassLabel::Walk, ClassLabel::Walk),
            },
            priors,
        };
        model.validate()?;
        Ok(model)
    }

    fn branch(&self, branch: ClassLabel) -> &BranchGaussians {
        match branch {
            ClassLabel::Idle => &self.idle_branch,
            ClassLabel::Walk => &self.walk_branch,
        }
    }

    /// Log joint densities (idle, walk) of a feature in a branch.
    pub fn log_joint(&self, f: f64, branch: ClassLabel) -> (f64, f64) {
        let b = self.branch(branch);
        (
            self.priors.0.max(f64::MIN_POSITIVE).ln() + b.idle.log_pdf(f),
            self.priors.1.max(f64::MIN_POSITIVE).ln() + b.walk.log_pdf(f),
        )
    }

    /// P(Walk | f), computed in the log domain; never NaN for finite f.
    pub fn posterior(&self, f: f64, branch: ClassLabel) -> f64 {
        let (li, lw) = self.log_joint(f, branch);
        sigmoid(lw - li)
    }

    /// The decision rule: Idle iff P(Idle|f) > P(Walk|f), ties to Walk.
    pub fn classify(&self, f: f64, branch: ClassLabel) -> ClassLabel {
        if self.posterior(f, branch) >= 0.5 {
            ClassLabel::Walk
        } else {
            ClassLabel::Idle
        }
    }
}

fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

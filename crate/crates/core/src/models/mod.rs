//! Binary classifiers trained from scratch: an RBF soft-margin SVM solved
//! with SMO-style pairwise updates and Platt-calibrated, and elastic-net
//! logistic regression solved with proximal SAGA.
//!
//! Labels encode `pd = 1`, `healthy = 0` (`+1` / `-1` inside the SVM dual).

mod artifact;
mod logreg;
mod platt;
mod svm;

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{invalid, Error, Result};

pub use artifact::{deserialize_model, serialize_model, ModelArtifact, Provenance, ARTIFACT_FORMAT, ARTIFACT_VERSION};
pub use logreg::{
    elastic_net_objective, smooth_gradient, smooth_objective, train_logreg, LogRegModel, LogRegParams,
};
pub use platt::fit_platt;
pub use svm::{
    kernel_matrix, kkt_violation, rbf_kernel, scale_gamma, solve_dual, train_svm, DualSolution, Gamma, SvmModel,
    SvmParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub healthy: f64,
    pub pd: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights { healthy: 1.0, pd: 1.0 };

    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Healthy => self.healthy,
            Label::Pd => self.pd,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightMode {
    None,
    #[default]
    Balanced,
}

impl ClassWeightMode {
    pub fn resolve(self, labels: &[Label]) -> Result<ClassWeights> {
        match self {
            ClassWeightMode::None => {
                require_both_classes(labels)?;
                Ok(ClassWeights::UNIFORM)
            }
            ClassWeightMode::Balanced => balanced_class_weights(labels),
        }
    }
}

pub(crate) fn require_both_classes(labels: &[Label]) -> Result<(usize, usize)> {
    let pd = labels.iter().filter(|l| l.is_pd()).count();
    let healthy = labels.len() - pd;
    if pd == 0 || healthy == 0 {
        return Err(Error::SingleClass(format!("{healthy} healthy and {pd} pd samples")));
    }
    Ok((healthy, pd))
}

/// `n_total / (2 * n_class)` for each class.
pub fn balanced_class_weights(labels: &[Label]) -> Result<ClassWeights> {
    let (healthy, pd) = require_both_classes(labels)?;
    let n = labels.len() as f64;
    Ok(ClassWeights { healthy: n / (2.0 * healthy as f64), pd: n / (2.0 * pd as f64) })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solver outcome; models are returned either way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Converged { iterations: usize },
    /// `residual` is the final KKT violation (SVM) or the last epoch's
    /// objective change (logistic regression).
    NotConverged { iterations: usize, residual: f64 },
}

impl TrainStatus {
    pub fn converged(&self) -> bool {
        matches!(self, TrainStatus::Converged { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub status: TrainStatus,
}

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Svm(SvmModel),
    Logreg(LogRegModel),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Logreg(_) => "logreg",
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        match self {
            Classifier::Svm(m) => m.predict_proba(x),
            Classifier::Logreg(m) => m.predict_proba(x),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Classifier::Svm(m) => m.threshold,
            Classifier::Logreg(m) => m.threshold,
        }
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        match self {
            Classifier::Svm(m) => m.threshold = threshold,
            Classifier::Logreg(m) => m.threshold = threshold,
        }
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<Label> {
        predict_label(self.predict_proba(x)?, self.threshold())
    }
}

/// `pd` iff `proba >= threshold`.
pub fn predict_label(proba: f64, threshold: f64) -> Result<Label> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(if proba >= threshold { Label::Pd } else { Label::Healthy })
}

pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[Label]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(invalid(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(invalid("training needs at least 2 samples"));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(invalid("rows must share a non-zero dimension"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("training rows contain non-finite values"));
    }
    require_both_classes(y)?;
    Ok(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(healthy: usize, pd: usize) -> Vec<Label> {
        let mut v = vec![Label::Healthy; healthy];
        v.extend(vec![Label::Pd; pd]);
        v
    }

    #[test]
    fn balanced_weights_examples() {
        let w = balanced_class_weights(&labels(53, 74)).unwrap();
        assert!((w.healthy - 127.0 / 106.0).abs() < 1e-12 && (w.pd - 127.0 / 148.0).abs() < 1e-12);
        assert!((w.healthy - 1.1981).abs() < 1e-4 && (w.pd - 0.8581).abs() < 1e-4);
        assert_eq!(balanced_class_weights(&labels(10, 10)).unwrap(), ClassWeights::UNIFORM);
        let w = balanced_class_weights(&labels(1, 99)).unwrap();
        assert_eq!(w.healthy, 50.0);
        assert!((w.pd - 0.5051).abs() < 1e-4);
        assert!(matches!(balanced_class_weights(&labels(0, 5)), Err(Error::SingleClass(_))));
    }

    #[test]
    fn threshold_tie_goes_to_pd() {
        assert_eq!(predict_label(0.65, 0.65).unwrap(), Label::Pd);
        assert_eq!(predict_label(0.64, 0.65).unwrap(), Label::Healthy);
        assert_eq!(predict_label(0.5 + 1e-12, 0.5).unwrap(), Label::Pd);
        assert!(predict_label(0.5, 1.0).is_err());
        assert!(predict_label(0.5, 0.0).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::svm::clamp_open;
use super::{check_training_set, sigmoid, ClassWeightMode, ClassWeights, TrainStatus, Trained};
use crate::dataset::Label;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Inverse regularization strength; the penalty is scaled by `1 / c`.
    pub c: f64,
    /// Share of the penalty on the L1 term.
    pub l1_ratio: f64,
    pub class_weight: ClassWeightMode,
    /// Stop once an epoch moves no coefficient by more than `tol * max|beta|`.
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            c: 0.1,
            l1_ratio: 0.75,
            class_weight: ClassWeightMode::Balanced,
            tol: 1e-6,
            max_epochs: 1000,
            seed: 0,
            threshold: 0.62,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    /// Always 0; the model is fit without an intercept.
    pub intercept: f64,
    pub c: f64,
    pub l1_ratio: f64,
    pub class_weights: ClassWeights,
    pub threshold: f64,
}

impl LogRegModel {
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if self.weights.is_empty() {
            return Err(invalid("logistic model has no weights"));
        }
        if x.len() != self.weights.len() {
            return Err(invalid(format!("expected {} features, got {}", self.weights.len(), x.len())));
        }
        Ok(dot(&self.weights, x) + self.intercept)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(clamp_open(sigmoid(self.decision_function(x)?)))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^z) - y z`.
fn logloss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

fn targets(y: &[Label]) -> Vec<f64> {
    y.iter().map(|l| l.encode() as f64).collect()
}

/// `sum_i w_i * logloss(y_i, sigmoid(x_i . beta))`.
pub fn smooth_objective(x: &[Vec<f64>], y: &[Label], weights: ClassWeights, beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, &l)| weights.of(l) * logloss(dot(row, beta), l.encode() as f64))
        .sum()
}

pub fn smooth_gradient(x: &[Vec<f64>], y: &[Label], weights: ClassWeights, beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (row, &l) in x.iter().zip(y) {
        let s = weights.of(l) * (sigmoid(dot(row, beta)) - l.encode() as f64);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += s * xj;
        }
    }
    g
}

/// Smooth part plus `(1/c) * (l1_ratio * |beta|_1 + (1 - l1_ratio)/2 * |beta|_2^2)`.
pub fn elastic_net_objective(
    x: &[Vec<f64>],
    y: &[Label],
    weights: ClassWeights,
    beta: &[f64],
    c: f64,
    l1_ratio: f64,
) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    smooth_objective(x, y, weights, beta) + (l1_ratio * l1 + (1.0 - l1_ratio) / 2.0 * l2) / c
}

fn prox(v: f64, shrink: f64, scale: f64) -> f64 {
    let s = if v > shrink {
        v - shrink
    } else if v < -shrink {
        v + shrink
    } else {
        0.0
    };
    s / scale
}

/// Proximal SAGA on the objective divided by `n`.
pub fn train_logreg(x: &[Vec<f64>], y: &[Label], params: &LogRegParams) -> Result<Trained<LogRegModel>> {
    let dim = check_training_set(x, y)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(invalid(format!("C must be positive, got {}", params.c)));
    }
    if !(0.0..=1.0).contains(&params.l1_ratio) {
        return Err(invalid(format!("l1_ratio must lie in [0, 1], got {}", params.l1_ratio)));
    }
    if !(params.threshold > 0.0 && params.threshold < 1.0) {
        return Err(invalid("threshold must lie in (0, 1)"));
    }
    let weights = params.class_weight.resolve(y)?;
    let n = x.len();
    let nf = n as f64;
    let t = targets(y);
    let w: Vec<f64> = y.iter().map(|&l| weights.of(l)).collect();

    let lambda = 1.0 / (params.c * nf);
    let l_max = x
        .iter()
        .zip(&w)
        .map(|(row, wi)| wi * dot(row, row) / 4.0)
        .fold(0.0, f64::max);
    let eta = if l_max > 0.0 { 1.0 / (3.0 * l_max) } else { 1.0 };
    let shrink = eta * lambda * params.l1_ratio;
    let scale = 1.0 + eta * lambda * (1.0 - params.l1_ratio);

    let mut beta = vec![0.0; dim];
    // Gradient memory starts at the full gradient for beta = 0.
    let mut memory: Vec<f64> = (0..n).map(|i| w[i] * (0.5 - t[i])).collect();
    let mut avg = vec![0.0; dim];
    for (row, s) in x.iter().zip(&memory) {
        for (a, xj) in avg.iter_mut().zip(row) {
            *a += s * xj / nf;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let objective = |b: &[f64]| elastic_net_objective(x, y, weights, b, params.c, params.l1_ratio);
    let mut last_obj = objective(&beta);
    let mut status = None;
    let mut epoch_start = beta.clone();
    let mut obj_delta = f64::INFINITY;
    for epoch in 1..=params.max_epochs {
        epoch_start.copy_from_slice(&beta);
        for _ in 0..n {
            let j = rng.random_range(0..n);
            let s_new = w[j] * (sigmoid(dot(&x[j], &beta)) - t[j]);
            let ds = s_new - memory[j];
            for k in 0..dim {
                let v = beta[k] - eta * (ds * x[j][k] + avg[k]);
                avg[k] += ds * x[j][k] / nf;
                beta[k] = prox(v, shrink, scale);
            }
            memory[j] = s_new;
        }
        let max_change = beta.iter().zip(&epoch_start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let max_weight = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
        let obj = objective(&beta);
        obj_delta = (last_obj - obj).abs();
        last_obj = obj;
        if max_change <= params.tol * max_weight {
            status = Some(TrainStatus::Converged { iterations: epoch });
            break;
        }
    }
    let status =
        status.unwrap_or(TrainStatus::NotConverged { iterations: params.max_epochs, residual: obj_delta });
    Ok(Trained {
        model: LogRegModel {
            weights: beta,
            intercept: 0.0,
            c: params.c,
            l1_ratio: params.l1_ratio,
            class_weights: weights,
            threshold: params.threshold,
        },
        status,
    })
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::platt::fit_platt;
use super::{check_training_set, sigmoid, ClassWeightMode, ClassWeights, TrainStatus, Trained};
use crate::dataset::Label;
use crate::error::{invalid, Result};

/// Lower clamp for the curvature of a working pair.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `1 / (n_features * var(X))` over every training entry.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint before class weighting.
    pub c: f64,
    pub gamma: Gamma,
    pub class_weight: ClassWeightMode,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub threshold: f64,
    /// Folds used to collect held-out decision values for calibration.
    pub calibration_folds: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            gamma: Gamma::Scale,
            class_weight: ClassWeightMode::Balanced,
            tol: 1e-3,
            max_iter: 10_000,
            threshold: 0.65,
            calibration_folds: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub class_weights: ClassWeights,
    pub platt_a: f64,
    pub platt_b: f64,
    pub threshold: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if self.support_vectors.is_empty() {
            return Err(invalid("SVM has no support vectors"));
        }
        if x.len() != self.dim() {
            return Err(invalid(format!("expected {} features, got {}", self.dim(), x.len())));
        }
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            f += coef * rbf(sv, x, self.gamma);
        }
        Ok(f)
    }

    /// `sigmoid(platt_a * f(x) + platt_b)`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let f = self.decision_function(x)?;
        Ok(clamp_open(sigmoid(self.platt_a * f + self.platt_b)))
    }
}

pub(crate) fn clamp_open(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

#[inline]
fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    if !(gamma > 0.0) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(rbf(x, y, gamma))
}

/// Dense row-major Gram matrix. Every entry is computed independently, so
/// the parallel fill is bit-identical to a serial one.
pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = rbf(&x[i], &x[j], gamma);
        }
    });
    k
}

/// Population variance of all entries, as the "scale" heuristic uses.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let dim = x.first().map_or(0, Vec::len);
    let n = (x.len() * dim) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal KKT violation `m(alpha) - M(alpha)` recomputed from scratch.
pub fn kkt_violation(kernel: &[f64], y: &[f64], alpha: &[f64], upper: &[f64]) -> f64 {
    let n = y.len();
    let mut m_up = f64::NEG_INFINITY;
    let mut m_low = f64::INFINITY;
    for t in 0..n {
        let g: f64 = (0..n).map(|s| y[t] * y[s] * kernel[t * n + s] * alpha[s]).sum::<f64>() - 1.0;
        let v = -y[t] * g;
        if in_up(y[t], alpha[t], upper[t]) {
            m_up = m_up.max(v);
        }
        if in_low(y[t], alpha[t], upper[t]) {
            m_low = m_low.min(v);
        }
    }
    if m_up.is_finite() && m_low.is_finite() {
        (m_up - m_low).max(0.0)
    } else {
        0.0
    }
}

/// Solves `min 1/2 a'Qa - e'a` subject to `y'a = 0`, `0 <= a_i <= upper_i`
/// with `Q_ij = y_i y_j K_ij`, using maximal-gain (second-order) working
/// pair selection.
pub fn solve_dual(kernel: &[f64], y: &[f64], upper: &[f64], tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut violation;

    loop {
        // i maximises -y G over I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(y[t], alpha[t], upper[t]) {
                let v = -y[t] * grad[t];
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        // j minimises the second-order objective estimate over I_low.
        let mut g_min = f64::INFINITY;
        let mut best_gain = f64::INFINITY;
        let mut j_sel = None;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(y[t], alpha[t], upper[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                g_min = g_min.min(v);
                let diff = g_max - v;
                if diff > 0.0 {
                    let mut quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let gain = -(diff * diff) / quad;
                    if gain <= best_gain {
                        best_gain = gain;
                        j_sel = Some(t);
                    }
                }
            }
        }
        violation = if g_max.is_finite() && g_min.is_finite() { (g_max - g_min).max(0.0) } else { 0.0 };
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if violation < tol || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai.clamp(0.0, ci);
        alpha[j] = aj.clamp(0.0, cj);
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= upper[t];
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if at_lower {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };
    DualSolution { alpha, bias: -rho, violation, iterations, converged: violation < tol }
}

struct RawSvm {
    model: SvmModel,
    status: TrainStatus,
}

fn fit_uncalibrated(x: &[Vec<f64>], y: &[Label], c: f64, gamma: f64, weights: ClassWeights, params: &SvmParams) -> RawSvm {
    let ys: Vec<f64> = y.iter().map(|l| if l.is_pd() { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = y.iter().map(|&l| c * weights.of(l)).collect();
    let kernel = kernel_matrix(x, gamma);
    let sol = solve_dual(&kernel, &ys, &upper, params.tol, params.max_iter);
    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x[t].clone());
            dual_coefficients.push(a * ys[t]);
        }
    }
    if support_vectors.is_empty() {
        // A zero solution still needs one vector for a well-formed model.
        support_vectors.push(x[0].clone());
        dual_coefficients.push(0.0);
    }
    let status = if sol.converged {
        TrainStatus::Converged { iterations: sol.iterations }
    } else {
        TrainStatus::NotConverged { iterations: sol.iterations, residual: sol.violation }
    };
    RawSvm {
        model: SvmModel {
            support_vectors,
            dual_coefficients,
            bias: sol.bias,
            gamma,
            c,
            class_weights: weights,
            platt_a: 1.0,
            platt_b: 0.0,
            threshold: params.threshold,
        },
        status,
    }
}

/// Stratified fold index per sample, or `None` when some training part
/// would lack a class.
fn stratified_folds(y: &[Label], folds: usize, seed: u64) -> Option<Vec<usize>> {
    if folds < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; y.len()];
    for label in [Label::Healthy, Label::Pd] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if idx.len() < folds {
            return None;
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Some(assignment)
}

/// Trains the SVM and fits Platt scaling on held-out decision values from
/// `calibration_folds` stratified folds (in-sample values when the folds
/// cannot be formed).
pub fn train_svm(x: &[Vec<f64>], y: &[Label], params: &SvmParams) -> Result<Trained<SvmModel>> {
    check_training_set(x, y)?;
    if !(params.c > 0.0) {
        return Err(invalid(format!("C must be positive, got {}", params.c)));
    }
    if !(params.threshold > 0.0 && params.threshold < 1.0) {
        return Err(invalid("threshold must lie in (0, 1)"));
    }
    let gamma = match params.gamma {
        Gamma::Scale => scale_gamma(x),
        Gamma::Value(g) if g > 0.0 && g.is_finite() => g,
        Gamma::Value(g) => return Err(invalid(format!("gamma must be positive, got {g}"))),
    };
    let weights = params.class_weight.resolve(y)?;
    let RawSvm { mut model, status } = fit_uncalibrated(x, y, params.c, gamma, weights, params);

    let mut decisions = vec![0.0; x.len()];
    match stratified_folds(y, params.calibration_folds, params.seed) {
        Some(folds) => {
            for fold in 0..params.calibration_folds {
                let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| folds[i] != fold);
                let xs: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
                let ys: Vec<Label> = train_idx.iter().map(|&i| y[i]).collect();
                let sub = fit_uncalibrated(&xs, &ys, params.c, gamma, weights, params).model;
                for i in test_idx {
                    decisions[i] = sub.decision_function(&x[i])?;
                }
            }
        }
        None => {
            for (d, row) in decisions.iter_mut().zip(x) {
                *d = model.decision_function(row)?;
            }
        }
    }
    let (a, b) = fit_platt(&decisions, y);
    model.platt_a = a;
    model.platt_b = b;
    Ok(Trained { model, status })
}

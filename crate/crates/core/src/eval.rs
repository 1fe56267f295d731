//! Metrics, ROC analysis, threshold selection, patient-level cross-validation
//! and aggregation of per-image probabilities into patient verdicts.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{invalid, Error, Result};
use crate::models::{
    predict_label, require_both_classes, train_logreg, train_svm, Classifier, LogRegParams, SvmParams, TrainStatus,
    Trained,
};
use crate::table::{design_matrix, fit_stats, FeatureRow};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts with `pd` as the positive class.
pub fn confusion(labels: &[Label], predictions: &[Label]) -> Result<ConfusionCounts> {
    if labels.len() != predictions.len() {
        return Err(invalid(format!("{} labels but {} predictions", labels.len(), predictions.len())));
    }
    if labels.is_empty() {
        return Err(invalid("confusion needs at least one sample"));
    }
    let mut c = ConfusionCounts::default();
    for (l, p) in labels.iter().zip(predictions) {
        match (l.is_pd(), p.is_pd()) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Ratios are `None` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub auc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: Option<f64>,
    pub counts: ConfusionCounts,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: ConfusionCounts) -> MetricsReport {
    MetricsReport {
        acc: ratio(c.tp + c.tn, c.total()),
        auc: None,
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        ppv: ratio(c.tp, c.tp + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
        fp: c.fp,
        fn_: c.fn_,
        threshold: None,
        counts: c,
    }
}

/// Thresholds `probabilities` and fills in AUC as well.
pub fn image_metrics(labels: &[Label], probabilities: &[f64], threshold: f64) -> Result<MetricsReport> {
    let preds = probabilities.iter().map(|&p| predict_label(p, threshold)).collect::<Result<Vec<_>>>()?;
    let mut m = metrics(confusion(labels, &preds)?);
    m.threshold = Some(threshold);
    m.auc = roc(labels, probabilities).ok().map(|r| r.auc);
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps every distinct probability as a cutoff. The area is accumulated in
/// integer units so it equals the Mann-Whitney statistic exactly.
pub fn roc(labels: &[Label], probabilities: &[f64]) -> Result<RocCurve> {
    if labels.len() != probabilities.len() {
        return Err(invalid(format!("{} labels but {} probabilities", labels.len(), probabilities.len())));
    }
    let (neg, pos) = require_both_classes(labels)?;
    if probabilities.iter().any(|p| p.is_nan()) {
        return Err(invalid("probabilities contain NaN"));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area = 0u64;
    let mut i = 0;
    while i < order.len() {
        let p = probabilities[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && probabilities[order[i]] == p {
            if labels[order[i]].is_pd() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = twice_area as f64 / (2 * pos as u64 * neg as u64) as f64;
    Ok(RocCurve { points, auc })
}

/// Accuracy-maximising cutoff among midpoints of the sorted distinct
/// probabilities; ties go to the lowest cutoff. With a single distinct value
/// that value is returned.
pub fn select_threshold(labels: &[Label], probabilities: &[f64]) -> Result<f64> {
    if labels.len() != probabilities.len() {
        return Err(invalid(format!("{} labels but {} probabilities", labels.len(), probabilities.len())));
    }
    require_both_classes(labels)?;
    let mut distinct: Vec<f64> = probabilities.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() == 1 {
        return Ok(distinct[0]);
    }
    let mut best = (0usize, f64::NAN);
    for w in distinct.windows(2) {
        let cut = (w[0] + w[1]) / 2.0;
        let correct = labels.iter().zip(probabilities).filter(|(l, &p)| (p >= cut) == l.is_pd()).count();
        if correct > best.0 || best.1.is_nan() {
            best = (correct, cut);
        }
    }
    Ok(best.1)
}

/// Patient-level aggregation rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// PD when at least two images are classified PD.
    A,
    /// PD when the mean probability exceeds 0.5.
    B,
    /// PD when strictly more than half the images are classified PD.
    #[default]
    C,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::A => "a",
            Scheme::B => "b",
            Scheme::C => "c",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Scheme::A),
            "b" => Ok(Scheme::B),
            "c" => Ok(Scheme::C),
            other => Err(invalid(format!("unknown scheme `{other}`, expected a, b or c"))),
        }
    }
}

pub fn aggregate_patient(probabilities: &[f64], scheme: Scheme, threshold: f64) -> Result<Label> {
    if probabilities.is_empty() || probabilities.len() > 8 {
        return Err(invalid(format!("expected 1 to 8 probabilities, got {}", probabilities.len())));
    }
    let positives = probabilities
        .iter()
        .map(|&p| predict_label(p, threshold).map(Label::is_pd))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    let pd = match scheme {
        Scheme::A => positives >= 2,
        Scheme::B => probabilities.iter().sum::<f64>() / probabilities.len() as f64 > 0.5,
        Scheme::C => 2 * positives > probabilities.len(),
    };
    Ok(if pd { Label::Pd } else { Label::Healthy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub patient_id: String,
    pub label: Label,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientVerdict {
    pub patient_id: String,
    pub label: Label,
    pub verdict: Label,
    pub mean_probability: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientLevelReport {
    pub scheme: Scheme,
    pub metrics: MetricsReport,
    pub verdicts: Vec<PatientVerdict>,
    /// Patients with no usable image.
    pub skipped: Vec<String>,
}

/// Aggregates each patient's images with `scheme`. The patient-level AUC
/// ranks patients by mean probability. At most 8 images per patient are used.
pub fn evaluate_patient_level(
    patients: &[(String, Label)],
    images: &[ScoredImage],
    scheme: Scheme,
    threshold: f64,
) -> Result<PatientLevelReport> {
    let mut by_patient: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for img in images {
        by_patient.entry(img.patient_id.as_str()).or_default().push(img.probability);
    }
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    for (id, label) in patients {
        match by_patient.get(id.as_str()) {
            Some(probs) if !probs.is_empty() => {
                let probs = &probs[..probs.len().min(8)];
                verdicts.push(PatientVerdict {
                    patient_id: id.clone(),
                    label: *label,
                    verdict: aggregate_patient(probs, scheme, threshold)?,
                    mean_probability: probs.iter().sum::<f64>() / probs.len() as f64,
                    images: probs.len(),
                });
            }
            _ => skipped.push(id.clone()),
        }
    }
    if verdicts.is_empty() {
        return Err(invalid("no patient has a usable image"));
    }
    let labels: Vec<Label> = verdicts.iter().map(|v| v.label).collect();
    let preds: Vec<Label> = verdicts.iter().map(|v| v.verdict).collect();
    let means: Vec<f64> = verdicts.iter().map(|v| v.mean_probability).collect();
    let mut m = metrics(confusion(&labels, &preds)?);
    m.threshold = Some(threshold);
    m.auc = roc(&labels, &means).ok().map(|r| r.auc);
    Ok(PatientLevelReport { scheme, metrics: m, verdicts, skipped })
}

/// Patient-level ROC curves over `draws` random test sets of `n_pd` PD and
/// `n_healthy` healthy patients (fewer when not enough are available).
pub fn patient_roc_redraws(
    patients: &[(Label, f64)],
    draws: usize,
    n_pd: usize,
    n_healthy: usize,
    seed: u64,
) -> Result<Vec<RocCurve>> {
    let pd: Vec<f64> = patients.iter().filter(|p| p.0.is_pd()).map(|p| p.1).collect();
    let healthy: Vec<f64> = patients.iter().filter(|p| !p.0.is_pd()).map(|p| p.1).collect();
    if pd.is_empty() || healthy.is_empty() {
        return Err(Error::SingleClass("patient ROC needs both classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curves = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut labels = Vec::new();
        let mut probs = Vec::new();
        for (pool, label, n) in [(&pd, Label::Pd, n_pd), (&healthy, Label::Healthy, n_healthy)] {
            for &p in pool.choose_multiple(&mut rng, n.min(pool.len())) {
                labels.push(label);
                probs.push(p);
            }
        }
        curves.push(roc(&labels, &probs)?);
    }
    Ok(curves)
}

/// One model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Svm(SvmParams),
    Logreg(LogRegParams),
}

impl ModelSpec {
    pub fn c(&self) -> f64 {
        match self {
            ModelSpec::Svm(p) => p.c,
            ModelSpec::Logreg(p) => p.c,
        }
    }

    pub fn train(&self, x: &[Vec<f64>], y: &[Label]) -> Result<Trained<Classifier>> {
        Ok(match self {
            ModelSpec::Svm(p) => {
                let t = train_svm(x, y, p)?;
                Trained { model: Classifier::Svm(t.model), status: t.status }
            }
            ModelSpec::Logreg(p) => {
                let t = train_logreg(x, y, p)?;
                Trained { model: Classifier::Logreg(t.model), status: t.status }
            }
        })
    }
}

/// Stratified patient-level folds. Each class is shuffled and dealt round
/// robin, the second class continuing where the first stopped.
pub fn patient_folds(patients: &[(String, Label)], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 folds, got {k}")));
    }
    let labels: Vec<Label> = patients.iter().map(|p| p.1).collect();
    let (healthy, pd) = require_both_classes(&labels)?;
    if patients.len() < k || healthy < 2 || pd < 2 {
        return Err(invalid(format!(
            "CV pool too small: {} patients ({pd} pd, {healthy} healthy) for {k} folds",
            patients.len()
        )));
    }
    let mut ids: Vec<&(String, Label)> = patients.iter().collect();
    ids.sort();
    ids.dedup_by(|a, b| a.0 == b.0);
    if ids.len() != patients.len() {
        return Err(invalid("duplicate patient ids in CV pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for label in [Label::Pd, Label::Healthy] {
        let mut members: Vec<&String> = ids.iter().filter(|p| p.1 == label).map(|p| &p.0).collect();
        members.shuffle(&mut rng);
        for id in members {
            folds[slot % k].push(id.clone());
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub spec: ModelSpec,
    pub fold_scores: Vec<f64>,
    pub mean_accuracy: f64,
    pub unconverged_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cells: Vec<CellScore>,
    pub best: usize,
    pub folds: Vec<Vec<String>>,
    pub seed: u64,
}

impl CvReport {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.cells[self.best].spec
    }
}

/// k-fold CV over patients. Each fold fits normalisation on its own training
/// rows. Cells are ranked by mean image-level accuracy at their thresholds;
/// ties go to the smaller `c` (stronger regularisation), then grid order.
pub fn cross_validate(rows: &[FeatureRow], grid: &[ModelSpec], k: usize, seed: u64) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(invalid("empty hyperparameter grid"));
    }
    let patients = crate::table::patients_of(rows);
    let folds = patient_folds(&patients, k, seed)?;
    let fold_of: BTreeMap<&str, usize> =
        folds.iter().enumerate().flat_map(|(f, ids)| ids.iter().map(move |id| (id.as_str(), f))).collect();

    let fold_data = (0..k)
        .map(|f| {
            let (train, test): (Vec<FeatureRow>, Vec<FeatureRow>) =
                rows.iter().cloned().partition(|r| fold_of[r.patient_id.as_str()] != f);
            let stats = fit_stats(&train)?;
            let (xtr, ytr) = design_matrix(&train, &stats)?;
            let (xte, yte) = design_matrix(&test, &stats)?;
            Ok((xtr, ytr, xte, yte))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (xtr, ytr, xte, yte) = &fold_data[f];
            let fit = grid[c].train(xtr, ytr)?;
            let mut correct = 0;
            for (x, y) in xte.iter().zip(yte) {
                if fit.model.predict_label(x)? == *y {
                    correct += 1;
                }
            }
            Ok((correct as f64 / yte.len().max(1) as f64, fit.status))
        })
        .collect::<Result<Vec<(f64, TrainStatus)>>>()?;

    let cells: Vec<CellScore> = grid
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            let fold = &results[c * k..(c + 1) * k];
            let fold_scores: Vec<f64> = fold.iter().map(|r| r.0).collect();
            CellScore {
                spec: spec.clone(),
                mean_accuracy: fold_scores.iter().sum::<f64>() / k as f64,
                fold_scores,
                unconverged_folds: fold.iter().filter(|r| !r.1.converged()).count(),
            }
        })
        .collect();
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        if cell.mean_accuracy > b.mean_accuracy || (cell.mean_accuracy == b.mean_accuracy && cell.spec.c() < b.spec.c())
        {
            best = i;
        }
    }
    Ok(CvReport { cells, best, folds, seed })
}

/// One row of the results table.
pub struct TableRow<'a> {
    pub model: &'a str,
    pub metrics: &'a MetricsReport,
}

/// Reference image-level results for the two models:
/// (model, acc, auc, fp, fn, sensitivity, specificity, ppv, npv, threshold).
pub const REFERENCE_TABLE: [(&str, f64, f64, usize, usize, f64, f64, f64, f64, f64); 2] = [
    ("SVM (reference)", 0.92, 0.93, 12, 0, 1.0, 0.81, 0.89, 1.0, 0.65),
    ("Logistic Regression (reference)", 0.93, 0.96, 3, 7, 0.92, 0.95, 0.90, 0.96, 0.62),
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

/// Plain-text table with the reference rows appended.
pub fn render_table(rows: &[TableRow<'_>]) -> String {
    let mut out = String::new();
    let header = ["Model", "ACC", "AUC", "FP", "FN", "Sensitivity", "Specificity", "PPV", "NPV", "Threshold"];
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let m = r.metrics;
        lines.push(vec![
            r.model.to_string(),
            cell(m.acc),
            cell(m.auc),
            m.fp.to_string(),
            m.fn_.to_string(),
            cell(m.sensitivity),
            cell(m.specificity),
            cell(m.ppv),
            cell(m.npv),
            cell(m.threshold),
        ]);
    }
    for (name, acc, auc, fp, fnn, sens, spec, ppv, npv, thr) in REFERENCE_TABLE {
        lines.push(vec![
            name.to_string(),
            format!("{acc:.2}"),
            format!("{auc:.2}"),
            fp.to_string(),
            fnn.to_string(),
            format!("{sens:.2}"),
            format!("{spec:.2}"),
            format!("{ppv:.2}"),
            format!("{npv:.2}"),
            format!("{thr:.2}"),
        ]);
    }
    let widths: Vec<usize> = (0..header.len()).map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0)).collect();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

pub fn roc_csv(curve: &RocCurve, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fpr", "tpr"])?;
    for (x, y) in &curve.points {
        w.write_record([format!("{x:.16e}"), format!("{y:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Draws ROC curves as step lines on a white square with the chance diagonal.
pub fn render_roc_png(curves: &[RocCurve], size: usize) -> Result<crate::imaging::RasterImage> {
    use crate::imaging::{stroke_coverage, RasterImage, WHITE};
    if size < 64 {
        return Err(invalid("plot must be at least 64 px"));
    }
    let mut img = RasterImage::filled(size, size, WHITE)?;
    let margin = size as f64 * 0.08;
    let span = size as f64 - 2.0 * margin;
    let to_px = |(x, y): (f64, f64)| (margin + x * span, size as f64 - margin - y * span);
    let mut paint = |poly: &[(f64, f64)], color: [u8; 3], width: f64| {
        let cov = stroke_coverage(size, size, poly, width);
        for (i, c) in cov.iter().enumerate() {
            if *c {
                img.set_pixel(i % size, i / size, color);
            }
        }
    };
    let frame = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)].map(to_px);
    paint(&frame, [0, 0, 0], 1.5);
    paint(&[to_px((0.0, 0.0)), to_px((1.0, 1.0))], [170, 170, 170], 1.0);
    let palette = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189]];
    for (i, c) in curves.iter().enumerate() {
        let mut poly = Vec::with_capacity(2 * c.points.len());
        for w in c.points.windows(2) {
            poly.push(to_px(w[0]));
            poly.push(to_px((w[1].0, w[0].1)));
        }
        if let Some(&last) = c.points.last() {
            poly.push(to_px(last));
        }
        paint(&poly, palette[i % palette.len()], 2.0);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use Label::{Healthy as H, Pd as P};

    /// Correctly ordered (pd, healthy) pairs with half credit for ties.
    fn pair_count_auc(labels: &[Label], probs: &[f64]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if li.is_pd() && !lj.is_pd() {
                    pairs += 1;
                    if probs[i] > probs[j] {
                        twice += 2;
                    } else if probs[i] == probs[j] {
                        twice += 1;
                    }
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[P, H, P, H], &[P, P, H, H]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let c = confusion(&[H; 5], &[P; 5]).unwrap();
        assert_eq!(c.fp, 5);
        assert!(confusion(&[H], &[]).is_err());
        let c = confusion(&[P, H], &[P, H]).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
    }

    #[test]
    fn metrics_hand_example() {
        let m = metrics(ConfusionCounts { tp: 9, fp: 1, tn: 8, fn_: 2 });
        assert_eq!(m.acc, Some(17.0 / 20.0));
        assert_eq!(m.sensitivity, Some(9.0 / 11.0));
        assert_eq!(m.specificity, Some(8.0 / 9.0));
        assert_eq!(m.ppv, Some(0.9));
        assert_eq!(m.npv, Some(0.8));
        let perfect = metrics(ConfusionCounts { tp: 3, fp: 0, tn: 4, fn_: 0 });
        for v in [perfect.acc, perfect.sensitivity, perfect.specificity, perfect.ppv, perfect.npv] {
            assert_eq!(v, Some(1.0));
        }
        let none = metrics(ConfusionCounts { tp: 0, fp: 0, tn: 4, fn_: 0 });
        assert_eq!(none.sensitivity, None);
        assert_eq!(none.ppv, None);
    }

    #[test]
    fn svm_reference_row_shape() {
        // 11 pd patients x 8 images, no false negatives.
        let m = metrics(ConfusionCounts { tp: 88, fp: 12, tn: 52, fn_: 0 });
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.npv, Some(1.0));
    }

    #[test]
    fn roc_examples() {
        let labels = [P, H, P, H, H];
        let exact: Vec<f64> = labels.iter().map(|l| l.encode()).collect();
        assert_eq!(roc(&labels, &exact).unwrap().auc, 1.0);
        let flat = roc(&labels, &[0.5; 5]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(roc(&[P, P], &[0.1, 0.2]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn auc_equals_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = 20;
            let mut labels: Vec<Label> = (0..n).map(|_| if rng.random_bool(0.5) { P } else { H }).collect();
            labels[0] = P;
            labels[1] = H;
            // coarse values force ties
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
            assert_eq!(roc(&labels, &probs).unwrap().auc, pair_count_auc(&labels, &probs));
        }
    }

    #[test]
    fn threshold_selection() {
        let labels = [H, H, P, P];
        assert_eq!(select_threshold(&labels, &[0.1, 0.2, 0.7, 0.9]).unwrap(), (0.2 + 0.7) / 2.0);
        // 0.15 and 0.35 both misclassify one sample; lowest wins
        let t = select_threshold(&[H, P, H, P], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(t, (0.1 + 0.2) / 2.0);
        assert_eq!(select_threshold(&[H, P, P], &[0.4; 3]).unwrap(), 0.4);
    }

    #[test]
    fn aggregation_examples() {
        let five = [0.9, 0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1];
        assert_eq!(aggregate_patient(&five, Scheme::C, 0.5).unwrap(), P);
        let two = [0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        assert_eq!(aggregate_patient(&two, Scheme::A, 0.5).unwrap(), P);
        assert_eq!(aggregate_patient(&two, Scheme::C, 0.5).unwrap(), H);
        for s in [Scheme::A, Scheme::B, Scheme::C] {
            assert_eq!(aggregate_patient(&[0.0; 8], s, 0.5).unwrap(), H);
        }
        assert!(aggregate_patient(&[], Scheme::C, 0.5).is_err());
        // 4 of 8 is not a majority
        assert_eq!(aggregate_patient(&[0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1], Scheme::C, 0.5).unwrap(), H);
        assert_eq!(aggregate_patient(&[0.6, 0.45], Scheme::B, 0.9).unwrap(), P);
    }

    #[test]
    fn patient_level_toy() {
        let patients = vec![("a".to_string(), P), ("b".to_string(), H), ("c".to_string(), P), ("d".to_string(), H)];
        let img = |id: &str, label, p| ScoredImage { patient_id: id.into(), label, probability: p };
        let images = vec![
            img("a", P, 0.9),
            img("a", P, 0.8),
            img("a", P, 0.2),
            img("b", H, 0.3),
            img("b", H, 0.7),
            img("c", P, 0.4),
        ];
        let r = evaluate_patient_level(&patients, &images, Scheme::C, 0.5).unwrap();
        let v: Vec<Label> = r.verdicts.iter().map(|v| v.verdict).collect();
        // a: 2 of 3 -> pd; b: 1 of 2 -> healthy; c: 0 of 1 -> healthy
        assert_eq!(v, vec![P, H, H]);
        assert_eq!(r.skipped, vec!["d".to_string()]);
        assert_eq!(r.metrics.acc, Some(2.0 / 3.0));
    }

    #[test]
    fn folds_are_stratified_and_disjoint() {
        let patients: Vec<(String, Label)> =
            (0..30).map(|i| (format!("p{i:02}"), if i < 18 { P } else { H })).collect();
        let folds = patient_folds(&patients, 10, 3).unwrap();
        assert_eq!(folds.len(), 10);
        let mut all: Vec<&String> = folds.iter().flatten().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 30);
        for f in &folds {
            assert_eq!(f.len(), 3);
        }
        assert_eq!(folds, patient_folds(&patients, 10, 3).unwrap());
        let lopo: Vec<(String, Label)> = (0..12).map(|i| (format!("q{i}"), if i % 2 == 0 { P } else { H })).collect();
        assert_eq!(patient_folds(&lopo, 12, 0).unwrap().len(), 12);
        assert!(patient_folds(&lopo, 13, 0).is_err());
    }

    #[test]
    fn table_lists_reference_rows() {
        let m = metrics(ConfusionCounts { tp: 9, fp: 1, tn: 8, fn_: 2 });
        let t = render_table(&[TableRow { model: "ours", metrics: &m }]);
        assert!(t.contains("ours") && t.contains("SVM (reference)") && t.contains("0.85"));
        assert_eq!(t.lines().count(), 4);
    }

    #[test]
    fn roc_png_is_deterministic() {
        let c = roc(&[P, H, P, H], &[0.9, 0.2, 0.4, 0.6]).unwrap();
        let a = render_roc_png(&[c.clone()], 200).unwrap().to_png_bytes().unwrap();
        let b = render_roc_png(&[c], 200).unwrap().to_png_bytes().unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn scheme_c_ignores_order(mut probs in prop::collection::vec(0.0f64..1.0, 1..=8), seed in 0u64..100) {
            let before = aggregate_patient(&probs, Scheme::C, 0.5).unwrap();
            probs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, aggregate_patient(&probs, Scheme::C, 0.5).unwrap());
        }

        #[test]
        fn raising_threshold_never_adds_false_positives(
            data in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 2..40),
            t1 in 0.01f64..0.99,
            t2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let labels: Vec<Label> = data.iter().map(|d| if d.0 { P } else { H }).collect();
            let probs: Vec<f64> = data.iter().map(|d| d.1).collect();
            let at = |t: f64| {
                let preds: Vec<Label> = probs.iter().map(|&p| predict_label(p, t).unwrap()).collect();
                confusion(&labels, &preds).unwrap().fp
            };
            prop_assert!(at(hi) <= at(lo));
        }

        #[test]
        fn metric_identities(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let c = ConfusionCounts { tp, fp, tn, fn_ };
            prop_assume!(c.total() > 0);
            let m = metrics(c);
            if let Some(s) = m.sensitivity {
                prop_assert!((s * (tp + fn_) as f64 - tp as f64).abs() < 1e-9);
            }
            if let (Some(s), Some(sp)) = (m.sensitivity, m.specificity) {
                let n = c.total() as f64;
                let prev = (tp + fn_) as f64 / n;
                prop_assert!((m.acc.unwrap() - (prev * s + (1.0 - prev) * sp)).abs() < 1e-12);
            }
        }

        #[test]
        fn roc_is_monotone(data in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 2..40)) {
            let mut labels: Vec<Label> = data.iter().map(|d| if d.0 { P } else { H }).collect();
            labels[0] = P;
            labels[1] = H;
            let probs: Vec<f64> = data.iter().map(|d| d.1).collect();
            let r = roc(&labels, &probs).unwrap();
            prop_assert_eq!(r.points[0], (0.0, 0.0));
            prop_assert_eq!(*r.points.last().unwrap(), (1.0, 1.0));
            for w in r.points.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
            prop_assert!((0.0..=1.0).contains(&r.auc));
        }
    }
}

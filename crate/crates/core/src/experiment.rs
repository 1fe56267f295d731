//! End-to-end runs shared by the command line and the acceptance checks:
//! featurize a corpus, train with cross-validated model selection, and
//! evaluate on the held-out test split.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DrawingKind, Gender, Label, PatientRecord, Split, SplitAssignment};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    cross_validate, evaluate_patient_level, image_metrics, patient_roc_redraws, roc, CvReport, MetricsReport,
    ModelSpec, PatientLevelReport, RocCurve, ScoredImage, Scheme,
};
use crate::imaging::RasterImage;
use crate::models::{ModelArtifact, Provenance, TrainStatus};
use crate::pipeline::{featurize_image, PipelineConfig};
use crate::table::{design_matrix, fit_stats, patients_of, rows_in, FeatureRow};

/// A drawing that could not be featurized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub patient_id: String,
    pub kind: DrawingKind,
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct Featurized {
    pub rows: Vec<FeatureRow>,
    pub failures: Vec<ImageFailure>,
}

struct Job<'a> {
    patient_id: &'a str,
    age: f64,
    gender: Gender,
    label: Label,
    kind: DrawingKind,
    source: String,
    image: ImageSource<'a>,
}

enum ImageSource<'a> {
    Path(&'a std::path::Path),
    Memory(&'a RasterImage),
}

fn run_jobs(jobs: Vec<Job<'_>>, config: &PipelineConfig) -> Featurized {
    let results: Vec<std::result::Result<FeatureRow, ImageFailure>> = jobs
        .par_iter()
        .map(|job| {
            let fail = |e: Error| ImageFailure {
                patient_id: job.patient_id.to_string(),
                kind: job.kind,
                source: job.source.clone(),
                error: e.to_string(),
            };
            let owned;
            let img = match job.image {
                ImageSource::Path(p) => {
                    owned = RasterImage::open(p).map_err(fail)?;
                    &owned
                }
                ImageSource::Memory(img) => img,
            };
            let f = featurize_image(img, config).map_err(fail)?;
            Ok(FeatureRow {
                patient_id: job.patient_id.to_string(),
                kind: job.kind,
                raw: f.features.to_array(),
                age: job.age,
                gender: job.gender,
                label: job.label,
            })
        })
        .collect();
    let mut out = Featurized::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

/// Featurizes every image of every record, in manifest order.
pub fn featurize_records(records: &[PatientRecord], config: &PipelineConfig) -> Featurized {
    let jobs = records
        .iter()
        .flat_map(|r| {
            r.images.iter().map(move |img| Job {
                patient_id: &r.patient_id,
                age: r.age,
                gender: r.gender,
                label: r.label,
                kind: img.kind,
                source: img.path.display().to_string(),
                image: ImageSource::Path(&img.path),
            })
        })
        .collect();
    run_jobs(jobs, config)
}

/// Same as [`featurize_records`] for images already in memory.
pub fn featurize_patients(patients: &[crate::synthetic::SyntheticPatient], config: &PipelineConfig) -> Featurized {
    let jobs = patients
        .iter()
        .flat_map(|p| {
            p.images.iter().enumerate().map(move |(i, (kind, img))| Job {
                patient_id: &p.patient_id,
                age: p.age,
                gender: p.gender,
                label: p.label,
                kind: *kind,
                source: format!("{}#{}", p.patient_id, i + 1),
                image: ImageSource::Memory(img),
            })
        })
        .collect();
    run_jobs(jobs, config)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub cv: Option<CvReport>,
    pub status: TrainStatus,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Folds for model selection; 0 skips cross-validation, which requires
    /// a single-cell grid.
    pub folds: usize,
    pub seed: u64,
    pub manifest_hash: Option<String>,
    pub pipeline: PipelineConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { folds: 10, seed: 0, manifest_hash: None, pipeline: PipelineConfig::default() }
    }
}

/// Selects hyperparameters by patient-level CV on the train and validation
/// splits together, then fits normalisation and the final model on that pool.
pub fn train_artifact(
    rows: &[FeatureRow],
    assignment: &SplitAssignment,
    grid: &[ModelSpec],
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let mut pool = rows_in(rows, assignment, Split::Train)?;
    pool.extend(rows_in(rows, assignment, Split::Validation)?);
    if pool.is_empty() {
        return Err(invalid("no training rows"));
    }
    let (spec, cv) = if options.folds >= 2 {
        let cv = cross_validate(&pool, grid, options.folds, options.seed)?;
        (cv.best_spec().clone(), Some(cv))
    } else {
        match grid {
            [only] => (only.clone(), None),
            _ => return Err(invalid("a grid with several cells needs cross-validation folds")),
        }
    };
    let stats = fit_stats(&pool)?;
    let (x, y) = design_matrix(&pool, &stats)?;
    let fit = spec.train(&x, &y)?;
    let hyperparameters = match serde_json::to_value(&spec) {
        Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    let stats_patients: BTreeSet<String> = pool.iter().map(|r| r.patient_id.clone()).collect();
    Ok(TrainOutcome {
        artifact: ModelArtifact {
            classifier: fit.model,
            normalization: stats,
            pipeline: options.pipeline,
            provenance: Provenance {
                seed: options.seed,
                manifest_hash: options.manifest_hash.clone(),
                stats_patients: stats_patients.into_iter().collect(),
                hyperparameters,
            },
        },
        cv,
        status: fit.status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model: String,
    pub image_level: MetricsReport,
    pub roc: RocCurve,
    pub patient_level: PatientLevelReport,
    /// Patient-level curves over random redraws of the test patients.
    pub patient_rocs: Vec<RocCurve>,
    pub scores: Vec<ScoredImage>,
}

/// Refuses artifacts whose normalisation saw any test patient.
pub fn check_artifact_leakage(artifact: &ModelArtifact, assignment: &SplitAssignment) -> Result<()> {
    let leaked: Vec<&String> =
        artifact.provenance.stats_patients.iter().filter(|id| assignment.test.contains(*id)).collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "normalisation stats were fit on {} test patient(s), e.g. `{}`",
            leaked.len(),
            leaked[0]
        )))
    }
}

/// Scores the test split at image and patient level.
pub fn evaluate_artifact(
    artifact: &ModelArtifact,
    rows: &[FeatureRow],
    assignment: &SplitAssignment,
    scheme: Scheme,
    seed: u64,
) -> Result<Evaluation> {
    check_artifact_leakage(artifact, assignment)?;
    let test = rows_in(rows, assignment, Split::Test)?;
    if test.is_empty() {
        return Err(invalid("the test split has no rows"));
    }
    let (x, y) = design_matrix(&test, &artifact.normalization)?;
    let probs = x.iter().map(|v| artifact.classifier.predict_proba(v)).collect::<Result<Vec<_>>>()?;
    let threshold = artifact.classifier.threshold();
    let image_level = image_metrics(&y, &probs, threshold)?;
    let curve = roc(&y, &probs)?;
    let scores: Vec<ScoredImage> = test
        .iter()
        .zip(&probs)
        .map(|(r, &p)| ScoredImage { patient_id: r.patient_id.clone(), label: r.label, probability: p })
        .collect();
    let mut patients: Vec<(String, Label)> = patients_of(&test);
    for id in &assignment.test {
        if !patients.iter().any(|p| &p.0 == id) {
            // Known test patient without a usable image; its label is unknown
            // here, which only matters for the skipped list.
            patients.push((id.clone(), Label::Healthy));
        }
    }
    let patient_level = evaluate_patient_level(&patients, &scores, scheme, threshold)?;
    let per_patient: Vec<(Label, f64)> =
        patient_level.verdicts.iter().map(|v| (v.label, v.mean_probability)).collect();
    let patient_rocs = patient_roc_redraws(&per_patient, 10, 11, 8, seed).unwrap_or_default();
    Ok(Evaluation {
        model: artifact.classifier.kind().to_string(),
        image_level,
        roc: curve,
        patient_level,
        patient_rocs,
        scores,
    })
}

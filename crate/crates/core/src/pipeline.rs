//! Image to probability, and exam-level assessment.

use serde::{Deserialize, Serialize};

use crate::dataset::{DrawingKind, Gender, Label};
use crate::error::{invalid, Error, Result};
use crate::eval::{aggregate_patient, Scheme};
use crate::features::{compute_features, FeatureConfig, FeatureVector, RawFeatures};
use crate::geometry::{radial_profile, ProfileConfig, RadialProfile};
use crate::imaging::{extract_exam_trace, extract_handwriting_trace, RasterImage, TracePair};
use crate::models::ModelArtifact;

/// Exams with fewer usable images than this are flagged low-confidence.
pub const CONFIDENT_IMAGE_COUNT: usize = 6;

/// Everything between raw pixels and the nine raw features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub profile: ProfileConfig,
    pub features: FeatureConfig,
}

pub fn extract_pair(img: &RasterImage, source_id: impl Into<String>) -> Result<TracePair> {
    let et = extract_exam_trace(img)?;
    let ht = extract_handwriting_trace(img, &et)?;
    TracePair::new(et, ht, source_id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub profile: RadialProfile,
    pub features: RawFeatures,
}

pub fn featurize_image(img: &RasterImage, config: &PipelineConfig) -> Result<ImageFeatures> {
    let pair = extract_pair(img, "")?;
    let profile = radial_profile(&pair, &config.profile)?;
    let features = compute_features(&profile, &config.features)?;
    Ok(ImageFeatures { profile, features })
}

/// PD probability for one drawing under a trained artifact.
pub fn score_image(artifact: &ModelArtifact, img: &RasterImage, age: f64, gender: Gender) -> Result<f64> {
    let raw = featurize_image(img, &artifact.pipeline)?.features;
    let z = artifact.normalization.normalize(&raw.to_array());
    let v = FeatureVector::new(z, age, gender, None, "", DrawingKind::Spiral)?;
    artifact.classifier.predict_proba(&v.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageOutcome {
    Scored { probability: f64, label: Label },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamAssessment {
    pub per_image: Vec<ImageOutcome>,
    pub verdict: Label,
    /// Mean probability over scored images.
    pub verdict_probability: f64,
    pub low_confidence: bool,
}

/// Scores each image and aggregates with scheme C at the artifact threshold.
/// Images whose extraction fails are reported and left out.
pub fn assess_exam(artifact: &ModelArtifact, images: &[RasterImage], age: f64, gender: Gender) -> Result<ExamAssessment> {
    if images.is_empty() || images.len() > 8 {
        return Err(invalid(format!("an exam holds 1 to 8 images, got {}", images.len())));
    }
    if !(age > 0.0) || !age.is_finite() {
        return Err(invalid(format!("age must be positive, got {age}")));
    }
    let threshold = artifact.classifier.threshold();
    let mut per_image = Vec::with_capacity(images.len());
    let mut probs = Vec::new();
    for img in images {
        match score_image(artifact, img, age, gender) {
            Ok(p) => {
                let label = crate::models::predict_label(p, threshold)?;
                probs.push(p);
                per_image.push(ImageOutcome::Scored { probability: p, label });
            }
            Err(e @ (Error::EmptyTrace(_) | Error::DegenerateTrace { .. })) => {
                per_image.push(ImageOutcome::Failed { error: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    if probs.is_empty() {
        return Err(Error::Validation("no image yielded usable traces".into()));
    }
    let verdict = aggregate_patient(&probs, Scheme::C, threshold)?;
    let verdict_probability = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok(ExamAssessment { per_image, verdict, verdict_probability, low_confidence: probs.len() < CONFIDENT_IMAGE_COUNT })
}

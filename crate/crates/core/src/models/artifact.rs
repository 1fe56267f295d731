use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::error::{Error, Result};
use crate::features::NormalizationStats;
use crate::pipeline::PipelineConfig;

pub const ARTIFACT_FORMAT: &str = "micrographia-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the manifest or feature table the model was trained from.
    pub manifest_hash: Option<String>,
    /// Patients whose rows were used to fit the normalisation stats.
    pub stats_patients: Vec<String>,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
}

/// Everything needed to score a new drawing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub classifier: Classifier,
    pub normalization: NormalizationStats,
    pub pipeline: PipelineConfig,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    artifact: &'a ModelArtifact,
}

/// Pretty-printed JSON with a `format` and `version` header.
pub fn serialize_model(artifact: &ModelArtifact) -> Result<Vec<u8>> {
    artifact.normalization.validate()?;
    let env = Envelope { format: ARTIFACT_FORMAT, version: ARTIFACT_VERSION, artifact };
    serde_json::to_vec_pretty(&env).map_err(|e| Error::CorruptArtifact(e.to_string()))
}

pub fn deserialize_model(bytes: &[u8]) -> Result<ModelArtifact> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptArtifact(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| Error::CorruptArtifact("artifact is not a JSON object".into()))?;
    if obj.get("format").and_then(|v| v.as_str()) != Some(ARTIFACT_FORMAT) {
        return Err(Error::CorruptArtifact(format!("missing or unknown format tag, expected {ARTIFACT_FORMAT}")));
    }
    let version = obj
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptArtifact("missing version".into()))?;
    if version != u64::from(ARTIFACT_VERSION) {
        return Err(Error::VersionMismatch { found: version as u32, expected: ARTIFACT_VERSION });
    }
    match obj.get("normalization") {
        None | Some(serde_json::Value::Null) => {
            return Err(Error::Validation("artifact carries no normalisation stats".into()))
        }
        Some(_) => {}
    }
    let artifact: ModelArtifact =
        serde_json::from_value(value).map_err(|e| Error::CorruptArtifact(e.to_string()))?;
    artifact.normalization.validate()?;
    Ok(artifact)
}

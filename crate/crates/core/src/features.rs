//! Tremor features F1 to F9 over a paired radial profile, plus z-score
//! normalisation.
//!
//! `diffs` below always means the signed per-sample differences
//! `r_ht - r_et`. The relative-tremor series pairs exam radius `i` with the
//! handwriting radius `d - 1` samples earlier.

use serde::{Deserialize, Serialize};

use crate::dataset::{DrawingKind, Gender, Label};
use crate::error::{invalid, Error, Result};
use crate::geometry::RadialProfile;

pub const FEATURE_NAMES: [&str; 9] = [
    "f1_rms",
    "f2_max_diff",
    "f3_min_diff",
    "f4_std_diff",
    "f5_mrt",
    "f6_max_rt",
    "f7_min_rt",
    "f8_std_rt",
    "f9_sign_changes",
];

/// Number of classifier inputs: nine tremor features, age and gender.
pub const VECTOR_LEN: usize = 11;

/// Relative-tremor neighbour offsets exposed for reproduction sweeps.
pub const D_SWEEP: [usize; 7] = [1, 3, 5, 7, 10, 15, 20];

/// How F4 and F8 compute their spread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// `sqrt(sum(x^2) / (n - 1))`, no mean subtraction.
    #[default]
    Uncentered,
    /// Sample standard deviation around the mean.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Neighbour offset for the relative-tremor features.
    pub d: usize,
    pub std: StdConvention,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { d: 10, std: StdConvention::Uncentered }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawFeatures {
    pub f1_rms: f64,
    pub f2_max_diff: f64,
    pub f3_min_diff: f64,
    pub f4_std_diff: f64,
    pub f5_mrt: f64,
    pub f6_max_rt: f64,
    pub f7_min_rt: f64,
    pub f8_std_rt: f64,
    pub f9_sign_changes: usize,
    pub d: usize,
}

impl RawFeatures {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.f1_rms,
            self.f2_max_diff,
            self.f3_min_diff,
            self.f4_std_diff,
            self.f5_mrt,
            self.f6_max_rt,
            self.f7_min_rt,
            self.f8_std_rt,
            self.f9_sign_changes as f64,
        ]
    }
}

fn non_empty(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid("feature input series is empty"));
    }
    Ok(())
}

fn spread(values: &[f64], convention: StdConvention) -> Result<f64> {
    if values.len() < 2 {
        return Err(invalid(format!("standard deviation needs >= 2 values, got {}", values.len())));
    }
    let denom = (values.len() - 1) as f64;
    let sum_sq = match convention {
        StdConvention::Uncentered => values.iter().map(|v| v * v).sum::<f64>(),
        StdConvention::Centered => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        }
    };
    Ok((sum_sq / denom).sqrt())
}

pub fn diff_series(profile: &RadialProfile) -> Vec<f64> {
    profile.samples().iter().map(|s| s.r_ht - s.r_et).collect()
}

/// F1: root mean square of the differences.
pub fn f1_rms(diffs: &[f64]) -> Result<f64> {
    non_empty(diffs)?;
    Ok((diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt())
}

/// F2: largest absolute difference.
pub fn f2_max_abs(diffs: &[f64]) -> Result<f64> {
    non_empty(diffs)?;
    Ok(diffs.iter().map(|d| d.abs()).fold(f64::NEG_INFINITY, f64::max))
}

/// F3: smallest absolute difference.
pub fn f3_min_abs(diffs: &[f64]) -> Result<f64> {
    non_empty(diffs)?;
    Ok(diffs.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min))
}

/// F4: spread of the differences.
pub fn f4_std(diffs: &[f64], convention: StdConvention) -> Result<f64> {
    spread(diffs, convention)
}

/// `|r_et[i] - r_ht[i - d + 1]|` for `i = d..=n` (1-based); length `n - d + 1`.
pub fn relative_tremor_series(profile: &RadialProfile, d: usize) -> Result<Vec<f64>> {
    let n = profile.len();
    if d == 0 || n <= d {
        return Err(invalid(format!("relative tremor needs n > d >= 1, got n = {n}, d = {d}")));
    }
    let s = profile.samples();
    Ok((d - 1..n).map(|i| (s[i].r_et - s[i + 1 - d].r_ht).abs()).collect())
}

/// F5: mean relative tremor, the relative-tremor sum over `n - d`.
pub fn f5_mrt(profile: &RadialProfile, d: usize) -> Result<f64> {
    let series = relative_tremor_series(profile, d)?;
    Ok(series.iter().sum::<f64>() / (profile.len() - d) as f64)
}

/// F6, F7, F8: maximum, minimum and spread of the relative-tremor series.
pub fn f6_f7_f8(series: &[f64], convention: StdConvention) -> Result<(f64, f64, f64)> {
    non_empty(series)?;
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max, min, spread(series, convention)?))
}

#[inline]
fn positive_to_nonpositive(a: f64, b: f64) -> bool {
    a > 0.0 && b <= 0.0
}

/// F9: number of positive-to-non-positive transitions between neighbours.
pub fn f9_sign_changes(diffs: &[f64]) -> usize {
    diffs.windows(2).filter(|w| positive_to_nonpositive(w[0], w[1])).count()
}

pub fn compute_features(profile: &RadialProfile, config: &FeatureConfig) -> Result<RawFeatures> {
    let diffs = diff_series(profile);
    let rt = relative_tremor_series(profile, config.d)?;
    let (f6, f7, f8) = f6_f7_f8(&rt, config.std)?;
    Ok(RawFeatures {
        f1_rms: f1_rms(&diffs)?,
        f2_max_diff: f2_max_abs(&diffs)?,
        f3_min_diff: f3_min_abs(&diffs)?,
        f4_std_diff: f4_std(&diffs, config.std)?,
        f5_mrt: rt.iter().sum::<f64>() / (profile.len() - config.d) as f64,
        f6_max_rt: f6,
        f7_min_rt: f7,
        f8_std_rt: f8,
        f9_sign_changes: f9_sign_changes(&diffs),
        d: config.d,
    })
}

/// Per-feature mean and sample standard deviation over the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; 9],
    pub std: [f64; 9],
}

pub fn fit_normalization(rows: &[[f64; 9]]) -> Result<NormalizationStats> {
    if rows.len() < 2 {
        return Err(invalid(format!("normalisation needs >= 2 training rows, got {}", rows.len())));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 9];
    let mut std = [0.0; 9];
    for j in 0..9 {
        mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let ss = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>();
        std[j] = (ss / (n - 1.0)).sqrt();
        if !(std[j] > 0.0) || !std[j].is_finite() {
            return Err(Error::ZeroVariance { feature: FEATURE_NAMES[j] });
        }
    }
    Ok(NormalizationStats { mean, std })
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        for j in 0..9 {
            if !self.mean[j].is_finite() || !(self.std[j] > 0.0) || !self.std[j].is_finite() {
                return Err(Error::Validation(format!("normalisation stats for {} are invalid", FEATURE_NAMES[j])));
            }
        }
        Ok(())
    }

    /// `(f[i] - mean[i]) / std[i]`, each feature independently.
    pub fn normalize(&self, raw: &[f64; 9]) -> [f64; 9] {
        std::array::from_fn(|i| (raw[i] - self.mean[i]) / self.std[i])
    }

    pub fn denormalize(&self, z: &[f64; 9]) -> [f64; 9] {
        std::array::from_fn(|i| z[i] * self.std[i] + self.mean[i])
    }
}

/// Classifier input for one drawing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Nine normalised features, then age in years, then gender (0 male, 1 female).
    pub values: [f64; VECTOR_LEN],
    pub label: Option<Label>,
    pub patient_id: String,
    pub kind: DrawingKind,
}

impl FeatureVector {
    pub fn new(
        normalized: [f64; 9],
        age: f64,
        gender: Gender,
        label: Option<Label>,
        patient_id: impl Into<String>,
        kind: DrawingKind,
    ) -> Result<Self> {
        if !(age > 0.0) || !age.is_finite() {
            return Err(invalid(format!("age must be positive, got {age}")));
        }
        let mut values = [0.0; VECTOR_LEN];
        values[..9].copy_from_slice(&normalized);
        values[9] = age;
        values[10] = gender.encode();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature vector contains non-finite values"));
        }
        Ok(Self { values, label, patient_id: patient_id.into(), kind })
    }
}

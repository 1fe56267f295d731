//! Image-level feature table: one row per drawing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DrawingKind, Gender, Label, Split, SplitAssignment};
use crate::error::{Error, Result};
use crate::features::{fit_normalization, FeatureVector, NormalizationStats};

pub const FEATURE_TABLE_HEADER: [&str; 14] = [
    "patient_id",
    "kind",
    "f1_rms",
    "f2_max_diff",
    "f3_min_diff",
    "f4_std_diff",
    "f5_mrt",
    "f6_max_rt",
    "f7_min_rt",
    "f8_std_rt",
    "f9_sign_changes",
    "age",
    "gender",
    "label",
];

/// Raw (unnormalised) features of one drawing plus the patient's demographics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub patient_id: String,
    pub kind: DrawingKind,
    pub raw: [f64; 9],
    pub age: f64,
    pub gender: Gender,
    pub label: Label,
}

impl FeatureRow {
    pub fn vector(&self, stats: &NormalizationStats) -> Result<FeatureVector> {
        FeatureVector::new(
            stats.normalize(&self.raw),
            self.age,
            self.gender,
            Some(self.label),
            self.patient_id.clone(),
            self.kind,
        )
    }
}

fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Floats carry 17 significant digits so re-runs are byte-identical.
pub fn write_feature_table(rows: &[FeatureRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_TABLE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.patient_id.clone(), r.kind.to_string()];
        for (j, v) in r.raw.iter().enumerate() {
            // Sign changes are counts.
            rec.push(if j == 8 { format!("{}", *v as u64) } else { format_float(*v) });
        }
        rec.push(format!("{}", r.age));
        rec.push(r.gender.to_string());
        rec.push(r.label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_table(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let load = |row: usize, message: String| Error::Load { path: path.to_path_buf(), row, message };
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != FEATURE_TABLE_HEADER {
        return Err(load(1, format!("expected header {}", FEATURE_TABLE_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != FEATURE_TABLE_HEADER.len() {
            return Err(load(line, format!("expected {} fields, got {}", FEATURE_TABLE_HEADER.len(), rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            let v: f64 = rec[j].trim().parse().map_err(|_| load(line, format!("bad number `{}` in {}", &rec[j], FEATURE_TABLE_HEADER[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(load(line, format!("non-finite {}", FEATURE_TABLE_HEADER[j])))
            }
        };
        let mut raw = [0.0; 9];
        for (j, slot) in raw.iter_mut().enumerate() {
            *slot = num(j + 2)?;
        }
        let age = num(11)?;
        if age <= 0.0 {
            return Err(load(line, format!("age must be positive, got {age}")));
        }
        let patient_id = rec[0].trim().to_owned();
        if patient_id.is_empty() {
            return Err(load(line, "empty patient_id".into()));
        }
        rows.push(FeatureRow {
            patient_id,
            kind: rec[1].parse().map_err(|e: Error| load(line, e.to_string()))?,
            raw,
            age,
            gender: rec[12].parse().map_err(|e: Error| load(line, e.to_string()))?,
            label: rec[13].parse().map_err(|e: Error| load(line, e.to_string()))?,
        });
    }
    Ok(rows)
}

/// Patients in first-appearance order with their labels.
pub fn patients_of(rows: &[FeatureRow]) -> Vec<(String, Label)> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for r in rows {
        if seen.insert(r.patient_id.as_str()) {
            out.push((r.patient_id.clone(), r.label));
        }
    }
    out
}

/// Rows whose patient belongs to `split`. Fails if any row's patient is
/// missing from the assignment.
pub fn rows_in(rows: &[FeatureRow], assignment: &SplitAssignment, split: Split) -> Result<Vec<FeatureRow>> {
    assignment.check_no_leakage(rows.iter().map(|r| r.patient_id.as_str()))?;
    let mut out = Vec::new();
    for r in rows {
        match assignment.which(&r.patient_id) {
            Some(s) if s == split => out.push(r.clone()),
            Some(_) => {}
            None => return Err(Error::Validation(format!("patient {} is not in the split", r.patient_id))),
        }
    }
    Ok(out)
}

/// Normalisation stats from these rows only.
pub fn fit_stats(rows: &[FeatureRow]) -> Result<NormalizationStats> {
    let raw: Vec<[f64; 9]> = rows.iter().map(|r| r.raw).collect();
    fit_normalization(&raw)
}

/// Classifier inputs and labels.
pub fn design_matrix(rows: &[FeatureRow], stats: &NormalizationStats) -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        x.push(r.vector(stats)?.values.to_vec());
        y.push(r.label);
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, v: f64, label: Label) -> FeatureRow {
        FeatureRow {
            patient_id: id.into(),
            kind: DrawingKind::Meander,
            raw: [v, 0.1 + v, 1.0 / 3.0, 2.5e-7, v * 1e10, -v, 0.0, 7.0, 3.0],
            age: 61.0,
            gender: Gender::Female,
            label,
        }
    }

    #[test]
    fn round_trip_is_exact_and_stable() {
        let rows = vec![row("p1", 0.123456789012345678, Label::Pd), row("p2", -4.0, Label::Healthy)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let mut bytes = Vec::new();
        write_feature_table(&rows, &mut bytes).unwrap();
        std::fs::write(&path, &bytes).unwrap();
        let back = read_feature_table(&path).unwrap();
        assert_eq!(back, rows);
        let mut again = Vec::new();
        write_feature_table(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 14);
    }

    #[test]
    fn bad_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut bytes = Vec::new();
        write_feature_table(&[row("p1", 1.0, Label::Pd)], &mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap().replace(",pd", ",maybe");
        std::fs::write(&path, text).unwrap();
        match read_feature_table(&path) {
            Err(Error::Load { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn patients_keep_first_appearance_order() {
        let rows = vec![row("b", 1.0, Label::Pd), row("a", 1.0, Label::Healthy), row("b", 2.0, Label::Pd)];
        assert_eq!(patients_of(&rows), vec![("b".to_string(), Label::Pd), ("a".to_string(), Label::Healthy)]);
    }
}

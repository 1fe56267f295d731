//! Cohort ingestion from a CSV manifest, cohort truncation and patient-level
//! stratified splitting.
//!
//! Manifest columns:
//! `patient_id,age,gender,handedness,label,cohort,spiral_1..spiral_4,meander_1..meander_4`.
//! Relative image paths resolve against the manifest's directory.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(invalid(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Label { Healthy => "healthy", Pd => "pd" });
text_enum!(Gender { Male => "male", Female => "female" });
text_enum!(Handedness { Left => "left", Right => "right" });
text_enum!(DrawingKind { Spiral => "spiral", Meander => "meander" });
text_enum!(Cohort { OldHandpd => "old_handpd", NewHandpd => "new_handpd" });
text_enum!(Split { Train => "train", Validation => "validation", Test => "test" });

impl Label {
    /// `pd = 1`, `healthy = 0`.
    pub fn encode(self) -> f64 {
        match self {
            Label::Healthy => 0.0,
            Label::Pd => 1.0,
        }
    }

    pub fn is_pd(self) -> bool {
        self == Label::Pd
    }
}

impl Gender {
    /// `male = 0`, `female = 1`.
    pub fn encode(self) -> f64 {
        match self {
            Gender::Male => 0.0,
            Gender::Female => 1.0,
        }
    }

    pub fn decode(v: f64) -> Option<Self> {
        match v {
            v if v == 0.0 => Some(Gender::Male),
            v if v == 1.0 => Some(Gender::Female),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub kind: DrawingKind,
    /// 1..=4 within its kind.
    pub index: u8,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age: f64,
    pub gender: Gender,
    pub handedness: Handedness,
    pub label: Label,
    pub cohort: Cohort,
    /// Spirals 1..4 then meanders 1..4.
    pub images: Vec<ImageRef>,
}

pub const MANIFEST_HEADER: [&str; 14] = [
    "patient_id", "age", "gender", "handedness", "label", "cohort",
    "spiral_1", "spiral_2", "spiral_3", "spiral_4",
    "meander_1", "meander_2", "meander_3", "meander_4",
];

fn image_columns() -> impl Iterator<Item = (DrawingKind, u8)> {
    [DrawingKind::Spiral, DrawingKind::Meander]
        .into_iter()
        .flat_map(|k| (1..=4).map(move |i| (k, i)))
}

/// Reads and validates a manifest; every referenced image must exist and be
/// a readable PNG or JPEG.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let load_err = |row: usize, message: String| Error::Load { path: path.to_path_buf(), row, message };

    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != MANIFEST_HEADER {
        return Err(load_err(1, format!("header must be `{}`", MANIFEST_HEADER.join(","))));
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(load_err(line, format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len())));
        }
        let field = |j: usize| row[j].trim();
        let patient_id = field(0).to_string();
        if patient_id.is_empty() {
            return Err(load_err(line, "empty patient_id".into()));
        }
        if !seen.insert(patient_id.clone()) {
            return Err(load_err(line, format!("duplicate patient_id `{patient_id}`")));
        }
        let age: f64 = field(1)
            .parse()
            .map_err(|_| load_err(line, format!("patient `{patient_id}`: bad age `{}`", field(1))))?;
        if !(age > 0.0) || !age.is_finite() {
            return Err(load_err(line, format!("patient `{patient_id}`: age must be positive")));
        }
        let wrap = |e: Error| load_err(line, format!("patient `{patient_id}`: {e}"));
        let gender = field(2).parse().map_err(wrap)?;
        let handedness = field(3).parse().map_err(wrap)?;
        let label = field(4).parse().map_err(wrap)?;
        let cohort = field(5).parse().map_err(wrap)?;

        let mut images = Vec::new();
        for (j, (kind, index)) in image_columns().enumerate() {
            let raw = field(6 + j);
            if raw.is_empty() {
                continue;
            }
            let p = PathBuf::from(raw);
            let full = if p.is_absolute() { p } else { base.join(p) };
            check_image(&full).map_err(|m| load_err(line, format!("patient `{patient_id}`: {m}")))?;
            images.push(ImageRef { kind, index, path: full });
        }
        if images.len() != 8 {
            return Err(load_err(
                line,
                format!("patient `{patient_id}` has {} images; expected 4 spirals and 4 meanders", images.len()),
            ));
        }
        records.push(PatientRecord { patient_id, age, gender, handedness, label, cohort, images });
    }
    Ok(records)
}

fn check_image(path: &Path) -> std::result::Result<(), String> {
    if !path.is_file() {
        return Err(format!("missing image {}", path.display()));
    }
    let reader = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        _ => return Err(format!("{} is not a PNG or JPEG", path.display())),
    }
    reader
        .into_dimensions()
        .map(|_| ())
        .map_err(|e| format!("cannot decode {}: {e}", path.display()))
}

pub fn write_manifest(records: &[PatientRecord], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        let mut row = vec![
            r.patient_id.clone(),
            r.age.to_string(),
            r.gender.to_string(),
            r.handedness.to_string(),
            r.label.to_string(),
            r.cohort.to_string(),
        ];
        for (kind, index) in image_columns() {
            let p = r.images.iter().find(|i| i.kind == kind && i.index == index);
            row.push(p.map(|i| i.path.display().to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Drops PD patients from the newer cohort; healthy patients of both cohorts stay.
pub fn apply_cohort_truncation(records: Vec<PatientRecord>) -> Vec<PatientRecord> {
    records
        .into_iter()
        .filter(|r| !(r.label == Label::Pd && r.cohort == Cohort::NewHandpd))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.765, validation: 0.085, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = Self { train, validation, test };
        f.validate()?;
        Ok(f)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    fn validate(&self) -> Result<()> {
        let f = self.as_array();
        if f.iter().any(|v| !(*v >= 0.0)) || ((f.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split fractions {f:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

impl FromStr for SplitFractions {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| invalid(format!("bad fraction `{p}`"))))
            .collect::<Result<_>>()?;
        let [train, validation, test] = parts[..] else {
            return Err(invalid("expected three comma-separated fractions"));
        };
        let f = Self { train, validation, test };
        f.validate()?;
        Ok(f)
    }
}

/// Largest-remainder apportionment of `total` items; ties go to the earlier slot.
pub fn largest_remainder(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * total as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = total - counts.iter().sum::<usize>().min(total);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn which(&self, patient_id: &str) -> Option<Split> {
        if self.train.contains(patient_id) {
            Some(Split::Train)
        } else if self.validation.contains(patient_id) {
            Some(Split::Validation)
        } else if self.test.contains(patient_id) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn part(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// `patient_id,split` rows, grouped by split.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "split"])?;
        for split in [Split::Train, Split::Validation, Split::Test] {
            for id in self.part(split) {
                w.write_record([id.as_str(), split.as_str()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let mut out = SplitAssignment {
            train: BTreeSet::new(),
            validation: BTreeSet::new(),
            test: BTreeSet::new(),
            seed: 0,
        };
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let err = |m: String| Error::Load { path: path.to_path_buf(), row: i + 2, message: m };
            if row.len() != 2 {
                return Err(err("expected patient_id,split".into()));
            }
            let split: Split = row[1].parse().map_err(|e: Error| err(e.to_string()))?;
            let id = row[0].trim().to_string();
            if out.which(&id).is_some() {
                return Err(err(format!("patient `{id}` assigned twice")));
            }
            match split {
                Split::Train => out.train.insert(id),
                Split::Validation => out.validation.insert(id),
                Split::Test => out.test.insert(id),
            };
        }
        Ok(out)
    }

    /// Every row's patient must belong to exactly one split.
    pub fn check_no_leakage<'a>(&self, patient_ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for (a, b) in [(&self.train, &self.validation), (&self.train, &self.test), (&self.validation, &self.test)] {
            if let Some(id) = a.intersection(b).next() {
                return Err(invalid(format!("patient `{id}` appears in two splits")));
            }
        }
        for id in patient_ids {
            if self.which(id).is_none() {
                return Err(invalid(format!("patient `{id}` has no split assignment")));
            }
        }
        Ok(())
    }
}

/// Patient-level random split, stratified by label and deterministic in `seed`.
pub fn split(patients: &[(String, Label)], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    fractions.validate()?;
    let mut ids = HashSet::new();
    for (id, _) in patients {
        if !ids.insert(id.as_str()) {
            return Err(invalid(format!("duplicate patient `{id}`")));
        }
    }
    let f = fractions.as_array();
    let sizes = largest_remainder(patients.len(), f);
    let mut pd: Vec<&str> = patients.iter().filter(|p| p.1 == Label::Pd).map(|p| p.0.as_str()).collect();
    let mut healthy: Vec<&str> = patients.iter().filter(|p| p.1 == Label::Healthy).map(|p| p.0.as_str()).collect();
    let mut pd_counts = largest_remainder(pd.len(), f);
    // Healthy counts fill each split up to its size; repair any negative cell.
    loop {
        let Some(j) = (0..3).find(|&j| pd_counts[j] > sizes[j]) else { break };
        let k = (0..3).find(|&k| pd_counts[k] < sizes[k]).expect("totals balance");
        pd_counts[j] -= 1;
        pd_counts[k] += 1;
    }
    for (j, &frac) in f.iter().enumerate() {
        if frac > 0.0 && sizes[j] == 0 {
            return Err(invalid(format!(
                "cohort of {} patients is too small to populate split {}",
                patients.len(),
                [Split::Train, Split::Validation, Split::Test][j]
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pd.sort_unstable();
    healthy.sort_unstable();
    pd.shuffle(&mut rng);
    healthy.shuffle(&mut rng);

    let mut parts: [BTreeSet<String>; 3] = Default::default();
    let (mut pi, mut hi) = (0, 0);
    for j in 0..3 {
        let take_pd = pd_counts[j];
        let take_h = sizes[j] - take_pd;
        parts[j].extend(pd[pi..pi + take_pd].iter().map(|s| s.to_string()));
        parts[j].extend(healthy[hi..hi + take_h].iter().map(|s| s.to_string()));
        pi += take_pd;
        hi += take_h;
    }
    let [train, validation, test] = parts;
    Ok(SplitAssignment { train, validation, test, seed })
}

/// Demographic summary for one label, in the layout of a cohort table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub label: Label,
    pub count: usize,
    pub mean_age: f64,
    pub sd_age: f64,
    pub left_handed: usize,
    pub right_handed: usize,
    pub percent_female: f64,
}

pub fn cohort_summary(records: &[PatientRecord], label: Label) -> Option<CohortSummary> {
    let rows: Vec<&PatientRecord> = records.iter().filter(|r| r.label == label).collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean_age = rows.iter().map(|r| r.age).sum::<f64>() / n;
    let sd_age = if rows.len() > 1 {
        (rows.iter().map(|r| (r.age - mean_age).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(CohortSummary {
        label,
        count: rows.len(),
        mean_age,
        sd_age,
        left_handed: rows.iter().filter(|r| r.handedness == Handedness::Left).count(),
        right_handed: rows.iter().filter(|r| r.handedness == Handedness::Right).count(),
        percent_female: 100.0 * rows.iter().filter(|r| r.gender == Gender::Female).count() as f64 / n,
    })
}

/// Reference demographics of the truncated cohort.
pub const REFERENCE_DEMOGRAPHICS: [CohortReference; 2] = [
    CohortReference { label: Label::Healthy, count: 53, mean_age: 44.11, percent_female: 54.7 },
    CohortReference { label: Label::Pd, count: 74, mean_age: 58.75, percent_female: 20.3 },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortReference {
    pub label: Label,
    pub count: usize,
    pub mean_age: f64,
    pub percent_female: f64,
}

/// Data-integrity check: counts must match exactly, means within 0.5.
pub fn compare_with_reference(records: &[PatientRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    for r in REFERENCE_DEMOGRAPHICS {
        let Some(s) = cohort_summary(records, r.label) else {
            problems.push(format!("{}: no patients", r.label));
            continue;
        };
        if s.count != r.count {
            problems.push(format!("{}: {} patients, expected {}", r.label, s.count, r.count));
        }
        if (s.mean_age - r.mean_age).abs() > 0.5 {
            problems.push(format!("{}: mean age {:.2}, expected {:.2}", r.label, s.mean_age, r.mean_age));
        }
        if (s.percent_female - r.percent_female).abs() > 0.5 {
            problems.push(format!("{}: {:.1}% female, expected {:.1}%", r.label, s.percent_female, r.percent_female));
        }
    }
    problems
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parses a HandPD-style drawing file name such as `sp1-H12.jpg` or
/// `meander3-P7.png` into (kind, exam index, label, patient number).
pub fn parse_handpd_name(name: &str) -> Option<(DrawingKind, u8, Label, u32)> {
    let lower = name.to_ascii_lowercase();
    let (stem, ext) = lower.rsplit_once('.')?;
    if !matches!(ext, "jpg" | "jpeg" | "png") {
        return None;
    }
    let (exam, patient) = stem.split_once('-')?;
    let digits = exam.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    let kind = match &exam[..exam.len() - digits.len()] {
        "sp" | "spiral" => DrawingKind::Spiral,
        "mea" | "me" | "meander" => DrawingKind::Meander,
        _ => return None,
    };
    let index: u8 = digits.parse().ok().filter(|i| (1..=4).contains(i))?;
    let label = match patient.as_bytes().first()? {
        b'h' => Label::Healthy,
        b'p' => Label::Pd,
        _ => return None,
    };
    let number: u32 = patient[1..].parse().ok()?;
    Some((kind, index, label, number))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub age: f64,
    pub gender: Gender,
    pub handedness: Handedness,
}

/// Reads `patient_id,age,gender,handedness`.
pub fn read_demographics(path: impl AsRef<Path>) -> Result<std::collections::BTreeMap<String, Demographics>> {
    let path = path.as_ref();
    let load_err = |row: usize, message: String| Error::Load { path: path.to_path_buf(), row, message };
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["patient_id", "age", "gender", "handedness"] {
        return Err(load_err(1, "header must be `patient_id,age,gender,handedness`".into()));
    }
    let mut out = std::collections::BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let age: f64 = row[1].trim().parse().map_err(|_| load_err(line, format!("bad age `{}`", &row[1])))?;
        if !(age > 0.0) || !age.is_finite() {
            return Err(load_err(line, "age must be positive".into()));
        }
        let gender = row[2].parse().map_err(|e: Error| load_err(line, e.to_string()))?;
        let handedness = row[3].parse().map_err(|e: Error| load_err(line, e.to_string()))?;
        if out.insert(row[0].trim().to_string(), Demographics { age, gender, handedness }).is_some() {
            return Err(load_err(line, format!("duplicate patient_id `{}`", row[0].trim())));
        }
    }
    Ok(out)
}

/// Builds manifest records from a HandPD-style tree. Drawing files are found
/// by name (see [`parse_handpd_name`]); a path component containing `new`
/// marks the newer cohort. Patient ids are `{old|new}-{h|p}{number}` and
/// must all appear in `demographics`. Image paths are relative to `root`.
pub fn scan_handpd(
    root: impl AsRef<Path>,
    demographics: &std::collections::BTreeMap<String, Demographics>,
) -> Result<Vec<PatientRecord>> {
    let root = root.as_ref();
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    let mut patients: std::collections::BTreeMap<(Cohort, Label, u32), Vec<ImageRef>> = Default::default();
    for path in files {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some((kind, index, label, number)) = parse_handpd_name(name) else { continue };
        let rel = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
        let newer = rel
            .parent()
            .map(|p| p.components().any(|c| c.as_os_str().to_string_lossy().to_ascii_lowercase().contains("new")))
            .unwrap_or(false);
        let cohort = if newer { Cohort::NewHandpd } else { Cohort::OldHandpd };
        let images = patients.entry((cohort, label, number)).or_default();
        if images.iter().any(|i| i.kind == kind && i.index == index) {
            return Err(invalid(format!("duplicate drawing {kind} {index} for {}", rel.display())));
        }
        images.push(ImageRef { kind, index, path: rel });
    }
    let mut records = Vec::with_capacity(patients.len());
    for ((cohort, label, number), mut images) in patients {
        let prefix = if cohort == Cohort::NewHandpd { "new" } else { "old" };
        let tag = if label.is_pd() { 'p' } else { 'h' };
        let patient_id = format!("{prefix}-{tag}{number}");
        if images.len() != 8 {
            return Err(invalid(format!("patient `{patient_id}` has {} drawings; expected 8", images.len())));
        }
        images.sort_by_key(|i| (i.kind, i.index));
        let demo = demographics
            .get(&patient_id)
            .ok_or_else(|| invalid(format!("no demographics for patient `{patient_id}`")))?;
        records.push(PatientRecord {
            patient_id,
            age: demo.age,
            gender: demo.gender,
            handedness: demo.handedness,
            label,
            cohort,
            images,
        });
    }
    if records.is_empty() {
        return Err(invalid(format!("no HandPD-style drawings under {}", root.display())));
    }
    Ok(records)
}

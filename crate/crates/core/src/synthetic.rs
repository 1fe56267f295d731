//! Rendered exams with a known guide and a controlled amount of radial
//! tremor in the pen stroke. Used by tests, examples and the demo corpus.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_manifest, Cohort, DrawingKind, Gender, Handedness, ImageRef, Label, PatientRecord};
use crate::error::{invalid, Result};
use crate::imaging::draw::composite;
use crate::imaging::template::GUIDE_COLOR;
use crate::imaging::{spiral_points, square_spiral_points, stroke_coverage, Blend, RasterImage, Rgb8, WHITE};

/// Ballpoint blue.
pub const PEN_COLOR: Rgb8 = [50, 70, 170];

/// Tremor amplitude of the healthy-like cohort, in pixels.
pub const LOW_TREMOR: f64 = 1.0;
/// Tremor amplitude of the PD-like cohort, in pixels.
pub const HIGH_TREMOR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub guide_width: f64,
    pub pen_width: f64,
    /// Distance between successive windings of either guide.
    pub spacing: f64,
    pub spiral_start: f64,
    pub turns: usize,
    /// Mean outward offset of the pen from the guide.
    pub pen_offset: f64,
    /// Peak radial deviation of the pen around its mean offset.
    pub tremor_amplitude: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 320,
            guide_width: 5.0,
            pen_width: 3.0,
            spacing: 36.0,
            spiral_start: 30.0,
            turns: 3,
            pen_offset: 6.0,
            tremor_amplitude: LOW_TREMOR,
        }
    }
}

fn resample(poly: &[(f64, f64)], step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (len / step).ceil().max(1.0) as usize;
        for i in 0..n {
            let t = i as f64 / n as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    if let Some(&last) = poly.last() {
        out.push(last);
    }
    out
}

/// Smooth noise in `[-amplitude, amplitude]` along arc length.
struct Wobble {
    terms: Vec<(f64, f64, f64)>,
    amplitude: f64,
}

impl Wobble {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let mut terms: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (rng.random_range(0.2..1.0), rng.random_range(18.0..60.0), rng.random_range(0.0..TAU)))
            .collect();
        let total: f64 = terms.iter().map(|t| t.0).sum();
        for t in &mut terms {
            t.0 /= total;
        }
        Self { terms, amplitude }
    }

    fn at(&self, s: f64) -> f64 {
        self.amplitude * self.terms.iter().map(|(c, wl, ph)| c * (TAU * s / wl + ph).sin()).sum::<f64>()
    }
}

/// Renders one exam drawing: the printed guide and a pen stroke that follows
/// it with an outward offset plus smooth radial wobble.
pub fn render_exam(kind: DrawingKind, spec: &SyntheticSpec, seed: u64) -> Result<RasterImage> {
    if spec.size < 64 || spec.turns == 0 {
        return Err(invalid("synthetic exam needs size >= 64 and at least one turn"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.size as f64 / 2.0;
    let rotation = rng.random_range(0.0..TAU);
    let guide = match kind {
        DrawingKind::Spiral => {
            spiral_points((c, c), spec.spiral_start, spec.spacing / TAU, spec.turns as f64, rotation, 0.5)
        }
        DrawingKind::Meander => {
            let half = spec.spacing * spec.turns as f64;
            // Start offset so the square spiral sits centred on the page.
            square_spiral_points((c - spec.spacing / 2.0, c - spec.spacing / 2.0), spec.spacing, spec.turns)
                .into_iter()
                .map(|(x, y)| (x.clamp(c - half - 1.0, c + half + 1.0), y.clamp(c - half - 1.0, c + half + 1.0)))
                .collect()
        }
    };
    let reach = guide.iter().map(|&(x, y)| (x - c).abs().max((y - c).abs())).fold(0.0, f64::max);
    let limit = c - spec.guide_width - spec.pen_offset - spec.tremor_amplitude - 2.0;
    if reach > limit {
        return Err(invalid(format!("guide reaches {reach:.0} px from the centre but the page allows {limit:.0}")));
    }

    let mut img = RasterImage::filled(spec.size, spec.size, WHITE)?;
    let cov = stroke_coverage(spec.size, spec.size, &guide, spec.guide_width);
    composite(&mut img, &cov, GUIDE_COLOR, Blend::Replace);

    let wobble = Wobble::new(&mut rng, spec.tremor_amplitude);
    let dense = resample(&guide, 1.0);
    let origin = match kind {
        DrawingKind::Spiral => (c, c),
        DrawingKind::Meander => dense[0],
    };
    let mut pen = Vec::with_capacity(dense.len());
    let mut s = 0.0;
    for (i, &(x, y)) in dense.iter().enumerate() {
        if i > 0 {
            s += ((x - dense[i - 1].0).powi(2) + (y - dense[i - 1].1).powi(2)).sqrt();
        }
        let (dx, dy) = (x - origin.0, y - origin.1);
        let r = (dx * dx + dy * dy).sqrt();
        if r < spec.spacing / 2.0 {
            continue;
        }
        let shift = spec.pen_offset + wobble.at(s);
        pen.push((x + dx / r * shift, y + dy / r * shift));
    }
    let cov = stroke_coverage(spec.size, spec.size, &pen, spec.pen_width);
    composite(&mut img, &cov, PEN_COLOR, Blend::Multiply);
    Ok(img)
}

#[derive(Debug, Clone)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub label: Label,
    pub age: f64,
    pub gender: Gender,
    /// Spirals 1..4 then meanders 1..4.
    pub images: Vec<(DrawingKind, RasterImage)>,
}

/// `n_healthy` low-tremor and `n_pd` high-tremor patients with eight drawings
/// each. Demographics are drawn from the same distribution for both classes.
pub fn synthetic_cohort(n_healthy: usize, n_pd: usize, seed: u64) -> Result<Vec<SyntheticPatient>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_healthy + n_pd);
    for i in 0..n_healthy + n_pd {
        let label = if i < n_healthy { Label::Healthy } else { Label::Pd };
        let amplitude = if label.is_pd() { HIGH_TREMOR } else { LOW_TREMOR };
        let spec = SyntheticSpec { tremor_amplitude: amplitude, ..Default::default() };
        let age = f64::from(rng.random_range(45u32..=85));
        let gender = if rng.random_bool(0.4) { Gender::Female } else { Gender::Male };
        let mut images = Vec::with_capacity(8);
        for kind in [DrawingKind::Spiral, DrawingKind::Meander] {
            for _ in 0..4 {
                images.push((kind, render_exam(kind, &spec, rng.random())?));
            }
        }
        let prefix = if label.is_pd() { "pd" } else { "hc" };
        out.push(SyntheticPatient { patient_id: format!("{prefix}{i:03}"), label, age, gender, images });
    }
    Ok(out)
}

/// Writes every drawing as PNG under `dir` plus `dir/manifest.csv` with
/// relative image paths. Returns the manifest path.
pub fn write_corpus(patients: &[SyntheticPatient], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    let mut records = Vec::with_capacity(patients.len());
    for p in patients {
        let mut refs = Vec::with_capacity(8);
        let mut counts = [0u8; 2];
        for (kind, img) in &p.images {
            let slot = &mut counts[usize::from(*kind == DrawingKind::Meander)];
            *slot += 1;
            let rel = PathBuf::from("images").join(format!("{}_{}_{}.png", p.patient_id, kind, slot));
            img.save_png(dir.join(&rel))?;
            refs.push(ImageRef { kind: *kind, index: *slot, path: rel });
        }
        records.push(PatientRecord {
            patient_id: p.patient_id.clone(),
            age: p.age,
            gender: p.gender,
            handedness: Handedness::Right,
            label: p.label,
            cohort: Cohort::OldHandpd,
            images: refs,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&records, fs::File::create(&manifest)?)?;
    Ok(manifest)
}

//! Paired radial profiles of the handwriting and exam traces.
//!
//! Ink pixels of both traces are binned by angle around the exam-trace
//! centroid. A spiral crosses each ray several times, so the distances in a
//! bin are clustered into turns; the k-th innermost handwriting turn is paired
//! with the k-th innermost exam turn.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imaging::{BinaryMask, TracePair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Number of uniform angular bins.
    pub n_angles: usize,
    /// Two distances in one bin belong to different turns iff they differ
    /// by more than this many pixels.
    pub turn_gap: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { n_angles: 360, turn_gap: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialSample {
    pub angle_index: usize,
    pub r_ht: f64,
    pub r_et: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub center: (f64, f64),
    samples: Vec<RadialSample>,
}

impl RadialProfile {
    /// Builds a profile from explicit radii, one sample per index.
    pub fn from_radii(r_ht: &[f64], r_et: &[f64]) -> Result<Self> {
        if r_ht.len() != r_et.len() || r_ht.is_empty() {
            return Err(invalid("radius sequences must be non-empty and of equal length"));
        }
        if r_ht.iter().chain(r_et).any(|r| !r.is_finite() || *r < 0.0) {
            return Err(invalid("radii must be finite and non-negative"));
        }
        let samples = r_ht
            .iter()
            .zip(r_et)
            .enumerate()
            .map(|(i, (&h, &e))| RadialSample { angle_index: i, r_ht: h, r_et: e })
            .collect();
        Ok(Self { center: (0.0, 0.0), samples })
    }

    pub fn samples(&self) -> &[RadialSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn r_ht(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.r_ht).collect()
    }

    pub fn r_et(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.r_et).collect()
    }

    /// Debug dump: `angle_index,r_ht,r_et` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["angle_index", "r_ht", "r_et"])?;
        for s in &self.samples {
            w.write_record([s.angle_index.to_string(), s.r_ht.to_string(), s.r_et.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Centroid of the exam-trace ink, `(x, y)`.
pub fn estimate_center(et: &BinaryMask) -> Result<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in et.ink_pixels() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyTrace("exam trace"));
    }
    Ok((sx / n as f64, sy / n as f64))
}

fn bin_distances(mask: &BinaryMask, center: (f64, f64), n_angles: usize) -> Vec<Vec<f64>> {
    let mut bins = vec![Vec::new(); n_angles];
    let width = TAU / n_angles as f64;
    for (x, y) in mask.ink_pixels() {
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        let angle = dy.atan2(dx).rem_euclid(TAU);
        let bin = ((angle / width) as usize).min(n_angles - 1);
        bins[bin].push(dx.hypot(dy));
    }
    bins
}

/// Sorted cluster means, splitting wherever consecutive distances differ by
/// more than `gap`.
fn cluster_turns(mut distances: Vec<f64>, gap: f64) -> Vec<f64> {
    distances.sort_by(f64::total_cmp);
    let mut turns = Vec::new();
    let mut start = 0;
    for i in 1..=distances.len() {
        if i == distances.len() || distances[i] - distances[i - 1] > gap {
            let cluster = &distances[start..i];
            turns.push(cluster.iter().sum::<f64>() / cluster.len() as f64);
            start = i;
        }
    }
    turns
}

/// Fills turns for bin `b` from the nearest populated bins on either side,
/// linear in angle with wrap-around.
fn interpolate_turns(turns: &[Vec<f64>], b: usize, wanted: usize) -> Vec<f64> {
    let n = turns.len();
    let prev = (1..n).map(|k| (b + n - k) % n).find(|&i| !turns[i].is_empty());
    let next = (1..n).map(|k| (b + k) % n).find(|&i| !turns[i].is_empty());
    let (Some(p), Some(q)) = (prev, next) else {
        return Vec::new();
    };
    let dp = ((b + n - p) % n) as f64;
    let dq = ((q + n - b) % n) as f64;
    let mut out = Vec::with_capacity(wanted);
    for k in 0..wanted {
        let v = match (turns[p].get(k), turns[q].get(k)) {
            (Some(&a), Some(&c)) => a + (c - a) * dp / (dp + dq),
            (Some(&a), None) | (None, Some(&a)) => a,
            (None, None) => break,
        };
        out.push(v);
    }
    out
}

struct BinnedTurns {
    center: (f64, f64),
    ht: Vec<Vec<f64>>,
    et: Vec<Vec<f64>>,
}

fn bin_turns(pair: &TracePair, config: &ProfileConfig) -> Result<BinnedTurns> {
    if config.n_angles < 8 {
        return Err(invalid(format!("n_angles must be >= 8, got {}", config.n_angles)));
    }
    if !(config.turn_gap > 0.0) {
        return Err(invalid("turn gap must be positive"));
    }
    if pair.handwriting_trace.is_empty() {
        return Err(Error::EmptyTrace("handwriting trace"));
    }
    let center = estimate_center(&pair.exam_trace)?;
    let cluster = |mask: &BinaryMask| -> Vec<Vec<f64>> {
        bin_distances(mask, center, config.n_angles)
            .into_iter()
            .map(|d| if d.is_empty() { d } else { cluster_turns(d, config.turn_gap) })
            .collect()
    };
    Ok(BinnedTurns { center, ht: cluster(&pair.handwriting_trace), et: cluster(&pair.exam_trace) })
}

/// Pairs handwriting and exam radii by angle around the exam-trace centroid.
pub fn radial_profile(pair: &TracePair, config: &ProfileConfig) -> Result<RadialProfile> {
    let BinnedTurns { center, ht, et } = bin_turns(pair, config)?;
    let n = config.n_angles;
    let mut samples = Vec::new();
    let mut populated = 0;
    for b in 0..n {
        let (h, e) = match (ht[b].is_empty(), et[b].is_empty()) {
            (true, true) => continue,
            (false, false) => (ht[b].clone(), et[b].clone()),
            (false, true) => (ht[b].clone(), interpolate_turns(&et, b, ht[b].len())),
            (true, false) => (interpolate_turns(&ht, b, et[b].len()), et[b].clone()),
        };
        // Unmatched outer turns are dropped.
        let matched = h.len().min(e.len());
        if matched > 0 {
            populated += 1;
        }
        samples.extend((0..matched).map(|k| RadialSample { angle_index: b, r_ht: h[k], r_et: e[k] }));
    }
    if populated * 2 < n {
        return Err(Error::DegenerateTrace { populated, required: n.div_ceil(2) });
    }
    Ok(RadialProfile { center, samples })
}

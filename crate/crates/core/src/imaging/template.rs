use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::draw::{composite, spiral_points, square_spiral_points, stroke_coverage, Blend};
use super::{RasterImage, Rgb8, WHITE};
use crate::error::{invalid, Result};

/// Printed guide colour; every channel is well below the exam-trace cutoff.
pub const GUIDE_COLOR: Rgb8 = [10, 10, 10];

/// Layout of the printable assessment page: a row of spiral guides above a
/// row of rectangular meander guides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub page_width: usize,
    pub page_height: usize,
    pub spirals: usize,
    pub meanders: usize,
    /// Spiral radius at the start of the curve, pixels.
    pub spiral_start_radius: f64,
    /// Radial growth per radian, pixels.
    pub spiral_growth: f64,
    pub spiral_turns: f64,
    pub meander_spacing: f64,
    pub meander_turns: usize,
    pub stroke_width: f64,
    /// Minimum clearance between a guide and its cell boundary.
    pub margin: f64,
}

impl Default for TemplateSpec {
    /// A4 at 150 dpi with four spirals and four meanders.
    fn default() -> Self {
        Self {
            page_width: 1240,
            page_height: 1754,
            spirals: 4,
            meanders: 4,
            spiral_start_radius: 15.0,
            spiral_growth: 32.0 / TAU,
            spiral_turns: 3.0,
            meander_spacing: 16.0,
            meander_turns: 3,
            stroke_width: 5.0,
            margin: 20.0,
        }
    }
}

impl TemplateSpec {
    /// Polylines of every guide, spirals first, positioned on the page.
    pub fn guides(&self) -> Result<Vec<Vec<(f64, f64)>>> {
        if self.page_width == 0 || self.page_height == 0 {
            return Err(invalid("page dimensions must be positive"));
        }
        if !(self.stroke_width > 0.0) || self.spiral_start_radius < 0.0 || self.spiral_growth < 0.0 {
            return Err(invalid("stroke width must be positive and spiral parameters non-negative"));
        }
        let columns = self.spirals.max(self.meanders);
        let rows = usize::from(self.spirals > 0) + usize::from(self.meanders > 0);
        if columns == 0 {
            return Ok(Vec::new());
        }
        let cell_w = self.page_width as f64 / columns as f64;
        let cell_h = self.page_height as f64 / rows as f64;
        let half_stroke = self.stroke_width / 2.0;

        let mut guides = Vec::new();
        let mut row = 0;
        for (count, is_spiral) in [(self.spirals, true), (self.meanders, false)] {
            if count == 0 {
                continue;
            }
            let cy = (row as f64 + 0.5) * cell_h;
            for i in 0..count {
                let cx = (i as f64 + 0.5) * cell_w;
                let raw = if is_spiral {
                    spiral_points((0.0, 0.0), self.spiral_start_radius, self.spiral_growth, self.spiral_turns, 0.0, 0.5)
                } else {
                    square_spiral_points((0.0, 0.0), self.meander_spacing, self.meander_turns)
                };
                let (min_x, max_x, min_y, max_y) = bounds(&raw);
                let need_w = max_x - min_x + 2.0 * (half_stroke + self.margin);
                let need_h = max_y - min_y + 2.0 * (half_stroke + self.margin);
                if need_w > cell_w || need_h > cell_h {
                    return Err(invalid(format!(
                        "guides would overlap: a {} needs {need_w:.0}x{need_h:.0} px but cells are {cell_w:.0}x{cell_h:.0}",
                        if is_spiral { "spiral" } else { "meander" }
                    )));
                }
                let (ox, oy) = (cx - (min_x + max_x) / 2.0, cy - (min_y + max_y) / 2.0);
                guides.push(raw.into_iter().map(|(x, y)| (x + ox, y + oy)).collect());
            }
            row += 1;
        }
        Ok(guides)
    }
}

fn bounds(pts: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    pts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    )
}

/// Renders the printable assessment page.
pub fn generate_assessment_template(spec: &TemplateSpec) -> Result<RasterImage> {
    let guides = spec.guides()?;
    let mut page = RasterImage::filled(spec.page_width, spec.page_height, WHITE)?;
    for guide in &guides {
        let cov = stroke_coverage(spec.page_width, spec.page_height, guide, spec.stroke_width);
        composite(&mut page, &cov, GUIDE_COLOR, Blend::Replace);
    }
    Ok(page)
}

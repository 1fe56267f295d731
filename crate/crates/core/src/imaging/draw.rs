//! Rasterisation of stroked curves, shared by the assessment template and
//! the synthetic exam generator.

use std::f64::consts::TAU;

use super::{RasterImage, Rgb8};

/// How a stroke colour combines with what is already on the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blend {
    Replace,
    /// Channel-wise product, like one ink layer over another.
    Multiply,
}

/// Points along the Archimedean spiral `r = a + b*theta` for
/// `theta` in `[0, 2*pi*turns]`, spaced at most `step` pixels apart.
pub fn spiral_points(
    center: (f64, f64),
    start_radius: f64,
    growth: f64,
    turns: f64,
    rotation: f64,
    step: f64,
) -> Vec<(f64, f64)> {
    let end = TAU * turns;
    let mut pts = Vec::new();
    let mut theta = 0.0;
    loop {
        let r = start_radius + growth * theta;
        let a = theta + rotation;
        pts.push((center.0 + r * a.cos(), center.1 + r * a.sin()));
        if theta >= end {
            break;
        }
        // arc length per radian is sqrt(r^2 + b^2)
        let speed = (r * r + growth * growth).sqrt().max(1e-3);
        theta = (theta + step / speed).min(end);
    }
    pts
}

/// Vertices of a rectangular (square) spiral starting at `center`, with
/// `spacing` pixels between successive windings.
pub fn square_spiral_points(center: (f64, f64), spacing: f64, turns: usize) -> Vec<(f64, f64)> {
    const DIRS: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
    let mut pts = vec![center];
    let (mut x, mut y) = center;
    for seg in 0..(4 * turns) {
        let len = spacing * (seg / 2 + 1) as f64;
        let (dx, dy) = DIRS[seg % 4];
        x += dx * len;
        y += dy * len;
        pts.push((x, y));
    }
    pts
}

/// Pixels whose centre lies within `width / 2` of the polyline.
pub fn stroke_coverage(width: usize, height: usize, polyline: &[(f64, f64)], stroke_width: f64) -> Vec<bool> {
    let mut cov = vec![false; width * height];
    let radius = stroke_width / 2.0;
    let r2 = radius * radius;
    let mut stamp = |cx: f64, cy: f64| {
        let x0 = (cx - radius).floor().max(0.0) as usize;
        let y0 = (cy - radius).floor().max(0.0) as usize;
        let x1 = ((cx + radius).ceil() as isize).min(width as isize - 1);
        let y1 = ((cy + radius).ceil() as isize).min(height as isize - 1);
        if x1 < 0 || y1 < 0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r2 {
                    cov[y * width + x] = true;
                }
            }
        }
    };
    if let [only] = polyline {
        stamp(only.0, only.1);
    }
    for seg in polyline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (len / 0.25).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            stamp(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        }
    }
    cov
}

pub(crate) fn composite(img: &mut RasterImage, coverage: &[bool], color: Rgb8, blend: Blend) {
    let w = img.width();
    for (i, _) in coverage.iter().enumerate().filter(|(_, &c)| c) {
        let (x, y) = (i % w, i / w);
        let new = match blend {
            Blend::Replace => color,
            Blend::Multiply => {
                let old = img.pixel(x, y);
                [0, 1, 2].map(|c| ((u32::from(old[c]) * u32::from(color[c]) + 127) / 255) as u8)
            }
        };
        img.set_pixel(x, y, new);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_spiral_is_a_circle() {
        let pts = spiral_points((50.0, 50.0), 20.0, 0.0, 1.0, 0.0, 0.5);
        for (x, y) in &pts {
            let r = ((x - 50.0).powi(2) + (y - 50.0).powi(2)).sqrt();
            assert!((r - 20.0).abs() < 1e-9);
        }
        let (fx, fy) = pts.last().unwrap();
        assert!((fx - 70.0).abs() < 1e-9 && (fy - 50.0).abs() < 1e-9);
    }

    #[test]
    fn spiral_points_are_dense() {
        let pts = spiral_points((0.0, 0.0), 5.0, 3.0, 2.0, 0.3, 0.5);
        for w in pts.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            // chord length per step uses the local arc speed, so allow a little slack
            assert!(d <= 0.5 * 1.05, "gap {d}");
        }
    }

    #[test]
    fn square_spiral_segment_lengths_grow() {
        let pts = square_spiral_points((0.0, 0.0), 10.0, 1);
        assert_eq!(pts, vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (-10.0, 10.0), (-10.0, -10.0)]);
    }

    #[test]
    fn multiply_darkens() {
        let mut img = RasterImage::filled(1, 1, [100, 200, 255]).unwrap();
        composite(&mut img, &[true], [255, 128, 0], Blend::Multiply);
        assert_eq!(img.pixel(0, 0), [100, 100, 0]);
    }
}

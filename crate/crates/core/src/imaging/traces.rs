use super::{
    binary_threshold, dilate, mean_blur, median_blur, BinaryMask, RasterImage, Rgb8, BACKGROUND, INK, WHITE,
};
use crate::error::{invalid, Result};

const EXAM_BLUR: usize = 5;
const EXAM_CUTOFF: u8 = 90;
const HANDWRITING_BLUR: usize = 5;
const HANDWRITING_CUTOFF: u8 = 200;
const TRACE_DILATION: usize = 4;

/// Colour of exam-trace ink in a blended image.
pub const ET_BLEND_COLOR: Rgb8 = [0, 0, 0];
/// Colour of handwriting-trace ink in a blended image.
pub const HT_BLEND_COLOR: Rgb8 = [255, 0, 0];

/// Exam trace (printed guide) and handwriting trace (patient's pen stroke)
/// extracted from one drawing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracePair {
    pub exam_trace: BinaryMask,
    pub handwriting_trace: BinaryMask,
    pub source_id: String,
}

impl TracePair {
    pub fn new(exam_trace: BinaryMask, handwriting_trace: BinaryMask, source_id: impl Into<String>) -> Result<Self> {
        if !exam_trace.same_shape(&handwriting_trace) {
            return Err(invalid(format!(
                "trace dimensions differ: ET {}x{}, HT {}x{}",
                exam_trace.width(),
                exam_trace.height(),
                handwriting_trace.width(),
                handwriting_trace.height()
            )));
        }
        Ok(Self { exam_trace, handwriting_trace, source_id: source_id.into() })
    }

    /// Fraction of HT ink pixels that are also ET ink (0 when HT is empty).
    pub fn overlap_fraction(&self) -> f64 {
        let ht = self.handwriting_trace.bits();
        let et = self.exam_trace.bits();
        let ht_ink = ht.iter().filter(|&&b| b == INK).count();
        if ht_ink == 0 {
            return 0.0;
        }
        let both = ht.iter().zip(et).filter(|(&h, &e)| h == INK && e == INK).count();
        both as f64 / ht_ink as f64
    }
}

/// Mean blur (5x5), threshold at 90, dilate (4x4).
pub fn extract_exam_trace(img: &RasterImage) -> Result<BinaryMask> {
    let blurred = mean_blur(img, EXAM_BLUR)?;
    let mask = binary_threshold(&blurred, EXAM_CUTOFF)?;
    dilate(&mask, TRACE_DILATION)
}

/// Median blur (5x5), threshold at 200, remove exam-trace ink, invert and
/// dilate (4x4).
pub fn extract_handwriting_trace(img: &RasterImage, exam_trace: &BinaryMask) -> Result<BinaryMask> {
    if img.width() != exam_trace.width() || img.height() != exam_trace.height() {
        return Err(invalid(format!(
            "exam trace is {}x{} but image is {}x{}",
            exam_trace.width(),
            exam_trace.height(),
            img.width(),
            img.height()
        )));
    }
    let blurred = median_blur(img, HANDWRITING_BLUR)?;
    let dark = binary_threshold(&blurred, HANDWRITING_CUTOFF)?;
    // Difference image highlights (1) what is dark but not exam trace.
    let difference: Vec<u8> = dark
        .bits()
        .iter()
        .zip(exam_trace.bits())
        .map(|(&d, &e)| u8::from(d == INK && e != INK))
        .collect();
    let inverted = difference.iter().map(|&b| 1 - b).collect();
    dilate(&BinaryMask::new(img.width(), img.height(), inverted)?, TRACE_DILATION)
}

/// Renders ET ink and HT ink in their reserved colours on white; HT wins
/// where both are ink.
pub fn blend_traces(pair: &TracePair) -> RasterImage {
    let pixels = pair
        .exam_trace
        .bits()
        .iter()
        .zip(pair.handwriting_trace.bits())
        .map(|(&e, &h)| match (e, h) {
            (_, INK) => HT_BLEND_COLOR,
            (INK, _) => ET_BLEND_COLOR,
            _ => WHITE,
        })
        .collect();
    RasterImage::new(pair.exam_trace.width(), pair.exam_trace.height(), pixels)
        .expect("trace pair dimensions are validated")
}

/// Recovers `(exam_trace, handwriting_trace)` by exact colour match.
pub fn unblend_traces(img: &RasterImage) -> Result<(BinaryMask, BinaryMask)> {
    let pick = |color: Rgb8| {
        let bits = img.pixels().iter().map(|&p| if p == color { INK } else { BACKGROUND }).collect();
        BinaryMask::new(img.width(), img.height(), bits)
    };
    Ok((pick(ET_BLEND_COLOR)?, pick(HT_BLEND_COLOR)?))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::imaging::draw::{composite, spiral_points, stroke_coverage, Blend};

    const PRINT: Rgb8 = [10, 10, 10];
    const LIGHT_PEN: Rgb8 = [120, 120, 230];
    const PEN: Rgb8 = [50, 70, 170];
    const SIZE: usize = 240;

    fn template_coverage() -> Vec<bool> {
        let pts = spiral_points((120.0, 120.0), 20.0, 36.0 / std::f64::consts::TAU, 2.5, 0.0, 0.5);
        stroke_coverage(SIZE, SIZE, &pts, 5.0)
    }

    fn pen_coverage() -> Vec<bool> {
        // Drawn 9 px outside the guide.
        let pts = spiral_points((120.0, 120.0), 29.0, 36.0 / std::f64::consts::TAU, 2.5, 0.0, 0.5);
        stroke_coverage(SIZE, SIZE, &pts, 3.0)
    }

    fn page(pen: Option<Rgb8>) -> (RasterImage, Vec<bool>, Vec<bool>) {
        let mut img = RasterImage::filled(SIZE, SIZE, WHITE).unwrap();
        let tpl = template_coverage();
        composite(&mut img, &tpl, PRINT, Blend::Replace);
        let pen_cov = pen_coverage();
        if let Some(color) = pen {
            composite(&mut img, &pen_cov, color, Blend::Multiply);
        }
        (img, tpl, pen_cov)
    }

    /// Pixels of `cov` farther than `margin` (chebyshev) from any pixel of `other`.
    fn far_from(cov: &[bool], other: &[bool], margin: isize) -> Vec<usize> {
        (0..cov.len())
            .filter(|&i| cov[i])
            .filter(|&i| {
                let (x, y) = ((i % SIZE) as isize, (i / SIZE) as isize);
                !(-margin..=margin).any(|dy| {
                    (-margin..=margin).any(|dx| {
                        let (xx, yy) = (x + dx, y + dy);
                        xx >= 0 && yy >= 0 && xx < SIZE as isize && yy < SIZE as isize
                            && other[yy as usize * SIZE + xx as usize]
                    })
                })
            })
            .collect()
    }

    #[test]
    fn exam_trace_keeps_print_and_drops_light_pen() {
        let (img, tpl, pen) = page(Some(LIGHT_PEN));
        let et = extract_exam_trace(&img).unwrap();
        let printed: Vec<usize> = (0..tpl.len()).filter(|&i| tpl[i]).collect();
        let recalled = printed.iter().filter(|&&i| et.bits()[i] == INK).count();
        assert_eq!(recalled, printed.len());
        for i in far_from(&pen, &tpl, 4) {
            assert_eq!(et.bits()[i], BACKGROUND, "pen pixel {i} leaked into the exam trace");
        }
    }

    #[test]
    fn exam_trace_blank_and_black_pages() {
        let white = RasterImage::filled(20, 20, WHITE).unwrap();
        assert!(extract_exam_trace(&white).unwrap().is_empty());
        let black = RasterImage::filled(20, 20, [0, 0, 0]).unwrap();
        assert_eq!(extract_exam_trace(&black).unwrap().ink_count(), 400);
    }

    #[test]
    fn handwriting_trace_isolates_pen() {
        let (img, tpl, pen) = page(Some(PEN));
        let et = extract_exam_trace(&img).unwrap();
        let ht = extract_handwriting_trace(&img, &et).unwrap();
        let pen_far = far_from(&pen, &tpl, 6);
        assert!(!pen_far.is_empty());
        let recalled = pen_far.iter().filter(|&&i| ht.bits()[i] == INK).count();
        assert!(recalled as f64 >= 0.99 * pen_far.len() as f64, "{recalled}/{}", pen_far.len());
        for i in far_from(&tpl, &pen, 6) {
            assert_eq!(ht.bits()[i], BACKGROUND, "template pixel {i} leaked into handwriting trace");
        }
        let pair = TracePair::new(et, ht, "synthetic").unwrap();
        assert!(pair.overlap_fraction() < 0.2);
    }

    #[test]
    fn handwriting_trace_of_bare_template_is_empty() {
        let (img, _, _) = page(None);
        let et = extract_exam_trace(&img).unwrap();
        assert!(extract_handwriting_trace(&img, &et).unwrap().is_empty());

        let blank = RasterImage::filled(30, 30, WHITE).unwrap();
        let et = extract_exam_trace(&blank).unwrap();
        assert!(extract_handwriting_trace(&blank, &et).unwrap().is_empty());
    }

    #[test]
    fn handwriting_trace_rejects_mismatched_mask() {
        let img = RasterImage::filled(10, 10, WHITE).unwrap();
        let et = BinaryMask::background(9, 10).unwrap();
        assert!(extract_handwriting_trace(&img, &et).is_err());
    }

    #[test]
    fn extraction_is_deterministic() {
        let (img, _, _) = page(Some(PEN));
        let a = extract_exam_trace(&img).unwrap();
        let b = extract_exam_trace(&img).unwrap();
        assert_eq!(a, b);
        assert_eq!(extract_handwriting_trace(&img, &a).unwrap(), extract_handwriting_trace(&img, &b).unwrap());
    }

    #[test]
    fn blend_examples() {
        let empty = BinaryMask::background(4, 3).unwrap();
        let pair = TracePair::new(empty.clone(), empty.clone(), "e").unwrap();
        assert!(blend_traces(&pair).pixels().iter().all(|&p| p == WHITE));

        let mut et = empty.clone();
        let mut ht = empty;
        et.set_ink(0, 0, true);
        ht.set_ink(1, 0, true);
        et.set_ink(2, 2, true);
        ht.set_ink(2, 2, true);
        let out = blend_traces(&TracePair::new(et, ht, "o").unwrap());
        assert_eq!(out.pixel(0, 0), ET_BLEND_COLOR);
        assert_eq!(out.pixel(1, 0), HT_BLEND_COLOR);
        assert_eq!(out.pixel(2, 2), HT_BLEND_COLOR);
        assert_eq!(out.pixel(3, 1), WHITE);
    }

    #[test]
    fn trace_pair_rejects_mismatched_shapes() {
        let a = BinaryMask::background(4, 3).unwrap();
        let b = BinaryMask::background(3, 4).unwrap();
        assert!(TracePair::new(a, b, "x").is_err());
    }

    proptest! {
        #[test]
        fn blend_round_trip_for_disjoint_traces(
            (w, h, cells) in (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(0u8..3, w * h))
            })
        ) {
            let et = BinaryMask::new(w, h, cells.iter().map(|&c| if c == 1 { INK } else { BACKGROUND }).collect()).unwrap();
            let ht = BinaryMask::new(w, h, cells.iter().map(|&c| if c == 2 { INK } else { BACKGROUND }).collect()).unwrap();
            let pair = TracePair::new(et.clone(), ht.clone(), "p").unwrap();
            let (et2, ht2) = unblend_traces(&blend_traces(&pair)).unwrap();
            prop_assert_eq!(et2, et);
            prop_assert_eq!(ht2, ht);
        }
    }
}

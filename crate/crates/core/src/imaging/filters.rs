use super::{BinaryMask, RasterImage, BACKGROUND, INK};
use crate::error::{invalid, Result};

fn check_odd_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(invalid(format!("blur kernel must be odd and >= 1, got {kernel}")));
    }
    Ok(())
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Per-channel box mean over a `kernel`x`kernel` window with replicated
/// borders, rounded to nearest.
pub fn mean_blur(img: &RasterImage, kernel: usize) -> Result<RasterImage> {
    check_odd_kernel(kernel)?;
    let (w, h) = (img.width(), img.height());
    let half = (kernel / 2) as isize;

    // Horizontal window sums, then vertical sums of those: exact integer totals.
    let mut rows = vec![[0u32; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            for dx in -half..=half {
                let p = img.pixel(clamp_index(x as isize + dx, w), y);
                for c in 0..3 {
                    acc[c] += u32::from(p[c]);
                }
            }
            rows[y * w + x] = acc;
        }
    }

    let area = (kernel * kernel) as u32;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            for dy in -half..=half {
                let r = rows[clamp_index(y as isize + dy, h) * w + x];
                for c in 0..3 {
                    acc[c] += r[c];
                }
            }
            out.push(acc.map(|s| ((s + area / 2) / area) as u8));
        }
    }
    RasterImage::new(w, h, out)
}

/// Per-channel median over a `kernel`x`kernel` window with replicated borders.
pub fn median_blur(img: &RasterImage, kernel: usize) -> Result<RasterImage> {
    check_odd_kernel(kernel)?;
    let (w, h) = (img.width(), img.height());
    let half = (kernel / 2) as isize;
    let mid = kernel * kernel / 2;
    let mut window: [Vec<u8>; 3] = Default::default();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            for ch in window.iter_mut() {
                ch.clear();
            }
            for dy in -half..=half {
                let yy = clamp_index(y as isize + dy, h);
                for dx in -half..=half {
                    let p = img.pixel(clamp_index(x as isize + dx, w), yy);
                    for c in 0..3 {
                        window[c].push(p[c]);
                    }
                }
            }
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = *window[c].select_nth_unstable(mid).1;
            }
            out.push(px);
        }
    }
    RasterImage::new(w, h, out)
}

/// A pixel becomes ink iff every channel is strictly below `cutoff`.
pub fn binary_threshold(img: &RasterImage, cutoff: u8) -> Result<BinaryMask> {
    if cutoff == 0 {
        return Err(invalid("threshold cutoff must be in 1..=255"));
    }
    let bits = img
        .pixels()
        .iter()
        .map(|p| if p.iter().all(|&c| c < cutoff) { INK } else { BACKGROUND })
        .collect();
    BinaryMask::new(img.width(), img.height(), bits)
}

/// Grows the ink set with a square `kernel`x`kernel` structuring element.
///
/// The window for output `x` spans `x - kernel/2 ..= x - kernel/2 + kernel - 1`
/// (centred for odd kernels, offsets `-2..=1` for a 4x4 kernel). Pixels outside
/// the mask count as background.
pub fn dilate(mask: &BinaryMask, kernel: usize) -> Result<BinaryMask> {
    if kernel == 0 {
        return Err(invalid("dilation kernel must be >= 1"));
    }
    let (w, h) = (mask.width(), mask.height());
    let lo = (kernel / 2) as isize;
    let hi = kernel as isize - 1 - lo;

    let window_has_ink = |line: &dyn Fn(usize) -> bool, len: usize, i: usize| {
        let start = (i as isize - lo).max(0) as usize;
        let end = (i as isize + hi).min(len as isize - 1) as usize;
        (start..=end).any(line)
    };

    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = |x: usize| mask.is_ink(x, y);
        for x in 0..w {
            horiz[y * w + x] = window_has_ink(&row, w, x);
        }
    }
    let mut bits = vec![BACKGROUND; w * h];
    for x in 0..w {
        let col = |y: usize| horiz[y * w + x];
        for y in 0..h {
            if window_has_ink(&col, h, y) {
                bits[y * w + x] = INK;
            }
        }
    }
    BinaryMask::new(w, h, bits)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::imaging::Rgb8;

    fn gray(v: u8) -> Rgb8 {
        [v, v, v]
    }

    // Brute-force oracles: gather the replicated window per pixel.
    fn window(img: &RasterImage, x: usize, y: usize, k: usize, c: usize) -> Vec<u32> {
        let half = (k / 2) as isize;
        let mut v = Vec::new();
        for dy in -half..=half {
            for dx in -half..=half {
                let xx = (x as isize + dx).clamp(0, img.width() as isize - 1) as usize;
                let yy = (y as isize + dy).clamp(0, img.height() as isize - 1) as usize;
                v.push(u32::from(img.pixel(xx, yy)[c]));
            }
        }
        v
    }

    fn oracle_mean(img: &RasterImage, k: usize) -> RasterImage {
        RasterImage::from_fn(img.width(), img.height(), |x, y| {
            let mut p = [0u8; 3];
            for c in 0..3 {
                let v = window(img, x, y, k, c);
                let mean = v.iter().sum::<u32>() as f64 / v.len() as f64;
                p[c] = mean.round() as u8;
            }
            p
        })
        .unwrap()
    }

    fn oracle_median(img: &RasterImage, k: usize) -> RasterImage {
        RasterImage::from_fn(img.width(), img.height(), |x, y| {
            let mut p = [0u8; 3];
            for c in 0..3 {
                let mut v = window(img, x, y, k, c);
                v.sort_unstable();
                p[c] = v[v.len() / 2] as u8;
            }
            p
        })
        .unwrap()
    }

    fn oracle_dilate(mask: &BinaryMask, k: usize) -> BinaryMask {
        let lo = (k / 2) as isize;
        let ink: Vec<(isize, isize)> = mask.ink_pixels().map(|(x, y)| (x as isize, y as isize)).collect();
        BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
            let (x, y) = (x as isize, y as isize);
            ink.iter().any(|&(px, py)| {
                (x - lo..x - lo + k as isize).contains(&px) && (y - lo..y - lo + k as isize).contains(&py)
            })
        })
        .unwrap()
    }

    #[test]
    fn mean_blur_constant_image_is_unchanged() {
        let img = RasterImage::filled(9, 6, gray(137)).unwrap();
        assert_eq!(mean_blur(&img, 5).unwrap(), img);
    }

    #[test]
    fn mean_blur_single_pixel_image() {
        let img = RasterImage::filled(1, 1, [3, 77, 250]).unwrap();
        assert_eq!(mean_blur(&img, 5).unwrap(), img);
    }

    #[test]
    fn mean_blur_center_impulse() {
        let img = RasterImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { gray(255) } else { gray(0) }).unwrap();
        let out = mean_blur(&img, 5).unwrap();
        assert_eq!(out.pixel(2, 2), gray(10));
    }

    #[test]
    fn blurs_reject_even_or_zero_kernels() {
        let img = RasterImage::filled(3, 3, gray(0)).unwrap();
        assert!(mean_blur(&img, 4).is_err());
        assert!(mean_blur(&img, 0).is_err());
        assert!(median_blur(&img, 2).is_err());
    }

    #[test]
    fn median_blur_removes_salt() {
        let img = RasterImage::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { gray(255) } else { gray(0) }).unwrap();
        let out = median_blur(&img, 3).unwrap();
        assert!(out.pixels().iter().all(|&p| p == gray(0)));
    }

    #[test]
    fn median_blur_checkerboard_matches_oracle() {
        let img = RasterImage::from_fn(8, 6, |x, y| if (x + y) % 2 == 0 { gray(0) } else { gray(255) }).unwrap();
        assert_eq!(median_blur(&img, 3).unwrap(), oracle_median(&img, 3));
    }

    #[test]
    fn threshold_examples() {
        let img = RasterImage::new(3, 1, vec![gray(50), gray(100), [50, 200, 50]]).unwrap();
        let m = binary_threshold(&img, 90).unwrap();
        assert_eq!(m.bits(), &[0, 1, 1]);
        assert!(binary_threshold(&img, 0).is_err());
    }

    #[test]
    fn dilate_examples() {
        let empty = BinaryMask::background(6, 6).unwrap();
        assert_eq!(dilate(&empty, 4).unwrap(), empty);

        let full = BinaryMask::new(6, 6, vec![INK; 36]).unwrap();
        assert_eq!(dilate(&full, 4).unwrap(), full);

        let mut single = BinaryMask::background(10, 10).unwrap();
        single.set_ink(5, 5, true);
        let out = dilate(&single, 4).unwrap();
        assert_eq!(out.ink_count(), 16);
        // Block spans offsets -1..=2 around the seed.
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(out.is_ink(x, y), (4..=7).contains(&x) && (4..=7).contains(&y), "({x},{y})");
            }
        }
        assert_eq!(out, oracle_dilate(&single, 4));
    }

    fn arb_image() -> impl Strategy<Value = RasterImage> {
        (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<[u8; 3]>(), w * h)
                .prop_map(move |px| RasterImage::new(w, h, px).unwrap())
        })
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(prop_oneof![3 => Just(BACKGROUND), 1 => Just(INK)], w * h)
                .prop_map(move |b| BinaryMask::new(w, h, b).unwrap())
        })
    }

    proptest! {
        #[test]
        fn mean_blur_matches_oracle(img in arb_image(), k in prop_oneof![Just(1usize), Just(3), Just(5)]) {
            prop_assert_eq!(mean_blur(&img, k).unwrap(), oracle_mean(&img, k));
        }

        #[test]
        fn median_blur_matches_oracle(img in arb_image(), k in prop_oneof![Just(1usize), Just(3), Just(5)]) {
            prop_assert_eq!(median_blur(&img, k).unwrap(), oracle_median(&img, k));
        }

        #[test]
        fn median_blur_preserves_constant(w in 1usize..8, h in 1usize..8, c in any::<[u8; 3]>()) {
            let img = RasterImage::filled(w, h, c).unwrap();
            prop_assert_eq!(median_blur(&img, 5).unwrap(), img);
        }

        #[test]
        fn threshold_is_monotone_in_cutoff(img in arb_image(), a in 1u8..=255, b in 1u8..=255) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let m_lo = binary_threshold(&img, lo).unwrap();
            let m_hi = binary_threshold(&img, hi).unwrap();
            for (l, h) in m_lo.bits().iter().zip(m_hi.bits()) {
                prop_assert!(*l <= 1 && *h <= 1);
                // ink at the lower cutoff stays ink at the higher one
                prop_assert!(!(*l == INK && *h == BACKGROUND));
            }
        }

        #[test]
        fn dilate_matches_oracle(mask in arb_mask(), k in 1usize..6) {
            prop_assert_eq!(dilate(&mask, k).unwrap(), oracle_dilate(&mask, k));
        }

        #[test]
        fn dilate_is_extensive_and_monotone(mask in arb_mask(), k in 1usize..6) {
            let out = dilate(&mask, k).unwrap();
            let mut grown = mask.clone();
            for (x, y) in mask.ink_pixels() {
                prop_assert!(out.is_ink(x, y));
            }
            // adding ink to the input can only add ink to the output
            grown.set_ink(0, 0, true);
            let out_grown = dilate(&grown, k).unwrap();
            for (x, y) in out.ink_pixels() {
                prop_assert!(out_grown.is_ink(x, y));
            }
            prop_assert_eq!(dilate(&mask, 1).unwrap(), mask);
        }
    }
}

//! Raster images, binary trace masks and the exam/handwriting trace
//! extraction pipeline.
//!
//! Masks use `0` for ink and `1` for background, the same polarity the
//! channel thresholds produce.

pub(crate) mod draw;
mod filters;
pub(crate) mod template;
mod traces;

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader, Rgb, RgbImage};

use crate::error::{invalid, Result};

pub use draw::{square_spiral_points, spiral_points, stroke_coverage, Blend};
pub use filters::{binary_threshold, dilate, mean_blur, median_blur};
pub use template::{generate_assessment_template, TemplateSpec, GUIDE_COLOR};
pub use traces::{
    blend_traces, extract_exam_trace, extract_handwriting_trace, unblend_traces, TracePair,
    ET_BLEND_COLOR, HT_BLEND_COLOR,
};

/// Mask value marking ink.
pub const INK: u8 = 0;
/// Mask value marking background.
pub const BACKGROUND: u8 = 1;

pub type Rgb8 = [u8; 3];

pub const WHITE: Rgb8 = [255, 255, 255];

/// An 8-bit sRGB image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(invalid(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb8) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb8 {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: Rgb8) {
        self.pixels[y * self.width + x] = color;
    }

    /// Decodes PNG or JPEG bytes. Alpha is composited over white.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format()?;
        match reader.format() {
            Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
            other => {
                return Err(invalid(format!("unsupported image format {other:?}; expected PNG or JPEG")))
            }
        }
        Self::from_dynamic(reader.decode()?)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    fn from_dynamic(img: image::DynamicImage) -> Result<Self> {
        let rgba = img.to_rgba8();
        let (w, h) = rgba.dimensions();
        let pixels = rgba
            .pixels()
            .map(|p| {
                let a = u32::from(p[3]);
                let over_white = |c: u8| ((u32::from(c) * a + 255 * (255 - a) + 127) / 255) as u8;
                [over_white(p[0]), over_white(p[1]), over_white(p[2])]
            })
            .collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in buf.pixels_mut().zip(&self.pixels) {
            *dst = Rgb(*src);
        }
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }
}

/// A row-major grid of `INK` / `BACKGROUND` values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(invalid(format!("bit count {} does not match {width}x{height}", bits.len())));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("mask values must be 0 or 1"));
        }
        Ok(Self { width, height, bits })
    }

    pub fn background(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![BACKGROUND; width * height])
    }

    /// Builds a mask where `is_ink(x, y)` marks ink.
    pub fn from_fn(width: usize, height: usize, mut is_ink: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(if is_ink(x, y) { INK } else { BACKGROUND });
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == INK
    }

    pub fn set_ink(&mut self, x: usize, y: usize, ink: bool) {
        self.bits[y * self.width + x] = if ink { INK } else { BACKGROUND };
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == INK).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&INK)
    }

    /// Iterates `(x, y)` of ink pixels in row-major order.
    pub fn ink_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == INK)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Black ink on white.
    pub fn to_image(&self) -> RasterImage {
        let pixels = self
            .bits
            .iter()
            .map(|&b| if b == INK { [0, 0, 0] } else { WHITE })
            .collect();
        RasterImage { width: self.width, height: self.height, pixels }
    }
}

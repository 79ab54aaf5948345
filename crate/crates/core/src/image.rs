//! Grayscale and binary document images, with file I/O.
//!
//! Intensity convention: 0.0 = black ink, 1.0 = white background.
//! Foreground convention (DIBCO): flag 1 = ink. The two meet in
//! `save_binary`, where foreground pixels become black bytes.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::pnm::{self, PnmPixels};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(CoreError::data(format!(
                "gray image {}x{} cannot hold {} pixels",
                width,
                height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::data(format!("pixel {} outside [0,1]", bad)));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayImage::new(width, height, vec![value; width * height])
            .expect("constant fill is always valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Thresholds at 0.5: darker-than-mid pixels become ink. Also counts
    /// pixels in the ambiguous (0.1, 0.9) band so callers can warn when a
    /// supposedly binary ground-truth file is actually gray.
    pub fn binarize(&self) -> (BinaryImage, usize) {
        let mut ambiguous = 0usize;
        let bits = self
            .pixels
            .iter()
            .map(|&v| {
                if v > 0.1 && v < 0.9 {
                    ambiguous += 1;
                }
                (v < 0.5) as u8
            })
            .collect();
        (
            BinaryImage {
                width: self.width,
                height: self.height,
                bits,
            },
            ambiguous,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(CoreError::data(format!(
                "binary image {}x{} cannot hold {} pixels",
                width,
                height,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(CoreError::data("binary image flags must be 0 or 1"));
        }
        Ok(BinaryImage {
            width,
            height,
            bits,
        })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            bits: vec![0; width * height],
        }
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

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.bits[y * self.width + x] = (v != 0) as u8;
    }

    pub fn ink_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Ink back to intensity: 1 → 0.0 (black), 0 → 1.0 (white).
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| 1.0 - b as f32).collect(),
        }
    }
}

/// Reads PGM (P2/P5), PBM (P1/P4), or PNG into [0,1] intensities.
/// Format is detected from content, not extension. Color PNG collapses by
/// the BT.601 luma weights 0.299/0.587/0.114.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        return load_png(path, &bytes);
    }
    let pnm = pnm::parse(&bytes).map_err(|(offset, msg)| CoreError::Pnm {
        path: path.to_path_buf(),
        offset,
        msg,
    })?;
    let pixels = match pnm.pixels {
        PnmPixels::Gray { maxval, samples } => {
            let scale = 1.0 / maxval as f32;
            samples.into_iter().map(|s| s as f32 * scale).collect()
        }
        PnmPixels::Bits(bits) => bits.into_iter().map(|b| 1.0 - b as f32).collect(),
    };
    GrayImage::new(pnm.width, pnm.height, pixels)
}

fn load_png(path: &Path, bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|e| CoreError::ImageFormat {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(g) => {
            g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(g) => g
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        other => {
            // The image crate's own grayscale conversion uses BT.709
            // weights; documents here are pinned to BT.601.
            let rgb = other.to_rgb8();
            rgb.pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32) / 255.0
                })
                .collect()
        }
    };
    let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    GrayImage::new(w, h, pixels)
}

/// Writes a PGM (P5, maxval 255) with intensities rounded to bytes.
pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let samples: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let bytes = pnm::write_p5(img.width, img.height, &samples);
    fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}

/// Writes a binary image; the extension picks the container. Ink renders
/// black everywhere: PBM bit 1, PGM/PNG byte 0.
pub fn save_binary(img: &BinaryImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => {
            let samples: Vec<u8> = img
                .bits
                .iter()
                .map(|&b| if b == 1 { 0 } else { 255 })
                .collect();
            let bytes = pnm::write_p5(img.width, img.height, &samples);
            fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
        }
        "png" => {
            let samples: Vec<u8> = img
                .bits
                .iter()
                .map(|&b| if b == 1 { 0 } else { 255 })
                .collect();
            let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, samples)
                .expect("dimensions validated at construction");
            buf.save(path).map_err(|e| CoreError::ImageFormat {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        }
        _ => {
            let bytes = pnm::write_p4(img.width, img.height, &img.bits);
            fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_zero_byte_is_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, pnm::write_p5(1, 1, &[0])).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.pixels(), &[0.0]);
    }

    #[test]
    fn p2_maps_by_maxval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, b"P2\n1 1\n255\n128\n").unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.pixels()[0] - 128.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn gray_save_load_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.pgm");
        let pixels: Vec<f32> = (0..64).map(|i| (i * 4) as f32 / 255.0).collect();
        let img = GrayImage::new(8, 8, pixels).unwrap();
        save_gray(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        save_gray(&back, dir.path().join("rt2.pgm")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("rt2.pgm")).unwrap()
        );
    }

    #[test]
    fn binary_foreground_saves_as_black() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pgm");
        let img = BinaryImage::new(2, 1, vec![1, 0]).unwrap();
        save_binary(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let raster = &bytes[bytes.len() - 2..];
        assert_eq!(raster, &[0u8, 255]);
    }

    #[test]
    fn binary_pbm_round_trips_via_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.pbm");
        let bits: Vec<u8> = (0..99).map(|i| (i % 7 == 0) as u8).collect();
        let img = BinaryImage::new(11, 9, bits).unwrap();
        save_binary(&img, &path).unwrap();
        let gray = load_image(&path).unwrap();
        let (back, ambiguous) = gray.binarize();
        assert_eq!(ambiguous, 0);
        assert_eq!(back, img);
    }

    #[test]
    fn png_color_uses_bt601_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let mut rgb = image::RgbImage::new(1, 1);
        rgb.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        rgb.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.pixels()[0] - 0.299).abs() < 2.0 / 255.0);
    }

    #[test]
    fn binarize_counts_ambiguous_band() {
        let img = GrayImage::new(2, 2, vec![0.0, 0.5, 0.95, 1.0]).unwrap();
        let (bin, ambiguous) = img.binarize();
        assert_eq!(bin.bits(), &[1, 0, 0, 0]);
        assert_eq!(ambiguous, 1);
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_image("/nonexistent/x.pgm").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.pgm"));
    }
}

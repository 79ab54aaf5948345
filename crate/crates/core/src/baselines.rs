//! Classical binarization baselines: Otsu, Niblack, Sauvola, Bernsen.
//!
//! Local methods share `WindowStats`, which serves window means and
//! standard deviations in O(1) per query from integral images built over
//! a replicate-padded copy of the input.

use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::image::{BinaryImage, GrayImage};

pub const NIBLACK_WINDOW: usize = 15;
pub const NIBLACK_K: f64 = -0.2;
pub const SAUVOLA_WINDOW: usize = 25;
pub const SAUVOLA_K: f64 = 0.5;
pub const SAUVOLA_R: f64 = 128.0 / 255.0;
pub const BERNSEN_WINDOW: usize = 31;
pub const BERNSEN_CONTRAST_MIN: f64 = 15.0 / 255.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMethod {
    Otsu,
    Niblack,
    Sauvola,
    Bernsen,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 4] = [
        BaselineMethod::Otsu,
        BaselineMethod::Niblack,
        BaselineMethod::Sauvola,
        BaselineMethod::Bernsen,
    ];
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BaselineMethod::Otsu => "otsu",
            BaselineMethod::Niblack => "niblack",
            BaselineMethod::Sauvola => "sauvola",
            BaselineMethod::Bernsen => "bernsen",
        };
        f.write_str(name)
    }
}

impl FromStr for BaselineMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "otsu" => Ok(BaselineMethod::Otsu),
            "niblack" => Ok(BaselineMethod::Niblack),
            "sauvola" => Ok(BaselineMethod::Sauvola),
            "bernsen" => Ok(BaselineMethod::Bernsen),
            other => Err(format!(
                "unknown method '{other}' (expected otsu, niblack, sauvola, or bernsen)"
            )),
        }
    }
}

/// Integral-image window statistics with replicate padding at the borders.
pub struct WindowStats {
    radius: usize,
    padded_w: usize,
    width: usize,
    height: usize,
    // Prefix sums over the padded image, (pw+1)×(ph+1).
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    inv_n: f64,
}

impl WindowStats {
    pub fn new(img: &GrayImage, window: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(CoreError::Data(format!(
                "window must be odd and positive, got {window}"
            )));
        }
        let (w, h) = (img.width(), img.height());
        let r = window / 2;
        let (pw, ph) = (w + 2 * r, h + 2 * r);
        let mut sum = vec![0.0f64; (pw + 1) * (ph + 1)];
        let mut sum_sq = vec![0.0f64; (pw + 1) * (ph + 1)];
        for py in 0..ph {
            let sy = py.saturating_sub(r).min(h - 1);
            for px in 0..pw {
                let sx = px.saturating_sub(r).min(w - 1);
                let v = img.get(sx, sy) as f64;
                let i = (py + 1) * (pw + 1) + (px + 1);
                sum[i] = v + sum[i - 1] + sum[i - (pw + 1)] - sum[i - (pw + 1) - 1];
                sum_sq[i] = v * v + sum_sq[i - 1] + sum_sq[i - (pw + 1)] - sum_sq[i - (pw + 1) - 1];
            }
        }
        Ok(WindowStats {
            radius: r,
            padded_w: pw,
            width: w,
            height: h,
            sum,
            sum_sq,
            inv_n: 1.0 / (window * window) as f64,
        })
    }

    fn rect(&self, table: &[f64], x: usize, y: usize) -> f64 {
        // Pixel (x, y) sits at padded (x+r, y+r); its window covers padded
        // rows y..y+2r+1 and the integral table is offset by one.
        let side = 2 * self.radius + 1;
        let stride = self.padded_w + 1;
        let (x0, y0) = (x, y);
        let (x1, y1) = (x + side, y + side);
        table[y1 * stride + x1] + table[y0 * stride + x0]
            - table[y0 * stride + x1]
            - table[y1 * stride + x0]
    }

    pub fn mean(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.rect(&self.sum, x, y) * self.inv_n
    }

    /// Population standard deviation over the window.
    pub fn std(&self, x: usize, y: usize) -> f64 {
        let m = self.mean(x, y);
        let ex2 = self.rect(&self.sum_sq, x, y) * self.inv_n;
        (ex2 - m * m).max(0.0).sqrt()
    }
}

fn histogram_bin(v: f32) -> usize {
    (v * 255.0).round() as usize
}

/// Global Otsu threshold over a 256-bin histogram. Pixels whose bin is
/// strictly below the returned value are ink; a constant image yields 0,
/// classifying everything as background. Ties pick the lowest threshold.
pub fn otsu_threshold(img: &GrayImage) -> usize {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[histogram_bin(v)] += 1;
    }
    let total: u64 = img.pixels().len() as u64;
    let total_moment: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &c)| b as f64 * c as f64)
        .sum();

    let mut best_t = 0usize;
    let mut best_var = 0.0f64;
    let mut w0 = 0u64;
    let mut m0 = 0.0f64;
    for t in 1..=255usize {
        w0 += hist[t - 1];
        m0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = m0 / w0 as f64;
        let mu1 = (total_moment - m0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    best_t
}

pub fn otsu(img: &GrayImage) -> BinaryImage {
    let t = otsu_threshold(img);
    let bits = img
        .pixels()
        .iter()
        .map(|&v| u8::from(histogram_bin(v) < t))
        .collect();
    BinaryImage::new(img.width(), img.height(), bits).expect("bits are 0/1")
}

/// Threshold m + k·s per pixel; k defaults to −0.2 with a 15×15 window.
pub fn niblack(img: &GrayImage, window: usize, k: f64) -> Result<BinaryImage> {
    let stats = WindowStats::new(img, window)?;
    let mut out = BinaryImage::blank(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let t = stats.mean(x, y) + k * stats.std(x, y);
            out.set(x, y, u8::from((img.get(x, y) as f64) < t));
        }
    }
    Ok(out)
}

/// Threshold m·(1 + k·(s/R − 1)); k defaults to 0.5, window 25×25,
/// R = 128/255 for unit-range input.
pub fn sauvola(img: &GrayImage, window: usize, k: f64) -> Result<BinaryImage> {
    let stats = WindowStats::new(img, window)?;
    let mut out = BinaryImage::blank(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let m = stats.mean(x, y);
            let t = m * (1.0 + k * (stats.std(x, y) / SAUVOLA_R - 1.0));
            out.set(x, y, u8::from((img.get(x, y) as f64) < t));
        }
    }
    Ok(out)
}

/// Separable sliding-window min and max with replicate padding.
fn window_extrema(img: &GrayImage, window: usize) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width(), img.height());
    let r = window as isize / 2;
    let clamp_x = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let clamp_y = |y: isize| y.clamp(0, h as isize - 1) as usize;

    let mut row_min = vec![0.0f32; w * h];
    let mut row_max = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w as isize {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for dx in -r..=r {
                let v = img.get(clamp_x(x + dx), y);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            row_min[y * w + x as usize] = lo;
            row_max[y * w + x as usize] = hi;
        }
    }
    let mut min = vec![0.0f32; w * h];
    let mut max = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for dy in -r..=r {
                let row = clamp_y(y + dy) * w;
                lo = lo.min(row_min[row + x]);
                hi = hi.max(row_max[row + x]);
            }
            min[y as usize * w + x] = lo;
            max[y as usize * w + x] = hi;
        }
    }
    (min, max)
}

/// Mid-range threshold (min+max)/2 where local contrast is sufficient;
/// low-contrast windows fall back to the global Otsu class of that
/// mid-range value. Window defaults to 31×31, contrast floor 15/255.
pub fn bernsen(img: &GrayImage, window: usize, contrast_min: f64) -> Result<BinaryImage> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(CoreError::Data(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    let (min, max) = window_extrema(img, window);
    let global_t = otsu_threshold(img);
    let mut out = BinaryImage::blank(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let i = y * img.width() + x;
            let (lo, hi) = (min[i] as f64, max[i] as f64);
            let mid = 0.5 * (lo + hi);
            let ink = if hi - lo < contrast_min {
                histogram_bin(mid as f32) < global_t
            } else {
                (img.get(x, y) as f64) < mid
            };
            out.set(x, y, u8::from(ink));
        }
    }
    Ok(out)
}

/// Dispatch helper for the CLI: `window` and `k` fall back to the
/// per-method defaults when absent. For Bernsen, `k` is the contrast
/// floor.
pub fn run_baseline(
    method: BaselineMethod,
    img: &GrayImage,
    window: Option<usize>,
    k: Option<f64>,
) -> Result<BinaryImage> {
    match method {
        BaselineMethod::Otsu => Ok(otsu(img)),
        BaselineMethod::Niblack => niblack(
            img,
            window.unwrap_or(NIBLACK_WINDOW),
            k.unwrap_or(NIBLACK_K),
        ),
        BaselineMethod::Sauvola => sauvola(
            img,
            window.unwrap_or(SAUVOLA_WINDOW),
            k.unwrap_or(SAUVOLA_K),
        ),
        BaselineMethod::Bernsen => bernsen(
            img,
            window.unwrap_or(BERNSEN_WINDOW),
            k.unwrap_or(BERNSEN_CONTRAST_MIN),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    /// Direct-loop reference for mean/std with replicate padding.
    fn loop_stats(img: &GrayImage, window: usize, x: usize, y: usize) -> (f64, f64) {
        let r = window as isize / 2;
        let mut vals = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as isize + dx).clamp(0, img.width() as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(0, img.height() as isize - 1) as usize;
                vals.push(img.get(sx, sy) as f64);
            }
        }
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        (m, var.sqrt())
    }

    #[test]
    fn window_stats_match_direct_loop() {
        let img = random_gray(13, 9, 42);
        for window in [1, 3, 7, 15] {
            let stats = WindowStats::new(&img, window).unwrap();
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let (m, s) = loop_stats(&img, window, x, y);
                    assert!(
                        (stats.mean(x, y) - m).abs() < 1e-6,
                        "mean mismatch at ({x},{y}) window {window}"
                    );
                    assert!(
                        (stats.std(x, y) - s).abs() < 1e-6,
                        "std mismatch at ({x},{y}) window {window}"
                    );
                }
            }
        }
    }

    #[test]
    fn window_of_one_is_the_pixel_itself() {
        let img = random_gray(5, 4, 7);
        let stats = WindowStats::new(&img, 1).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert!((stats.mean(x, y) - img.get(x, y) as f64).abs() < 1e-7);
                assert!(stats.std(x, y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn even_window_rejected() {
        let img = random_gray(4, 4, 8);
        assert!(WindowStats::new(&img, 4).is_err());
        assert!(WindowStats::new(&img, 0).is_err());
    }

    #[test]
    fn otsu_separates_bimodal_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pixels = Vec::new();
        let mut want = Vec::new();
        for _ in 0..256 {
            if rng.gen_bool(0.4) {
                pixels.push(0.2 + 0.05 * rng.gen::<f32>());
                want.push(1u8);
            } else {
                pixels.push(0.75 + 0.05 * rng.gen::<f32>());
                want.push(0u8);
            }
        }
        let img = GrayImage::new(16, 16, pixels).unwrap();
        let out = otsu(&img);
        assert_eq!(out.bits(), &want[..]);
    }

    #[test]
    fn otsu_constant_image_is_all_background() {
        let img = GrayImage::filled(8, 8, 0.3);
        assert_eq!(otsu_threshold(&img), 0);
        assert_eq!(otsu(&img).ink_count(), 0);
    }

    #[test]
    fn otsu_two_level_threshold_sits_between_modes() {
        let mut pixels = vec![0.1f32; 32];
        pixels.extend(vec![0.9f32; 32]);
        let img = GrayImage::new(8, 8, pixels).unwrap();
        let t = otsu_threshold(&img);
        assert!(t > histogram_bin(0.1) && t <= histogram_bin(0.9), "t={t}");
    }

    #[test]
    fn niblack_flat_image_is_background() {
        let img = GrayImage::filled(10, 10, 0.6);
        let out = niblack(&img, NIBLACK_WINDOW, NIBLACK_K).unwrap();
        assert_eq!(out.ink_count(), 0);
    }

    #[test]
    fn niblack_dark_blob_detected() {
        let mut img = GrayImage::filled(16, 16, 0.9);
        for y in 6..10 {
            for x in 6..10 {
                img.set(x, y, 0.1);
            }
        }
        let out = niblack(&img, NIBLACK_WINDOW, NIBLACK_K).unwrap();
        assert_eq!(out.get(7, 7), 1, "blob interior should be ink");
        assert_eq!(out.get(0, 0), 0, "far background should stay clear");
    }

    #[test]
    fn sauvola_flat_regions_are_background_at_any_level() {
        for v in [0.2f32, 0.5, 0.9] {
            let img = GrayImage::filled(12, 12, v);
            let out = sauvola(&img, SAUVOLA_WINDOW, SAUVOLA_K).unwrap();
            assert_eq!(out.ink_count(), 0, "flat {v} misclassified");
        }
    }

    #[test]
    fn sauvola_dark_text_on_light_background() {
        let mut img = GrayImage::filled(24, 24, 0.85);
        for x in 4..20 {
            img.set(x, 12, 0.05);
        }
        let out = sauvola(&img, SAUVOLA_WINDOW, SAUVOLA_K).unwrap();
        for x in 4..20 {
            assert_eq!(out.get(x, 12), 1, "stroke pixel ({x},12) missed");
        }
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(12, 2), 0);
    }

    #[test]
    fn bernsen_step_edge_splits_at_midrange() {
        let mut img = GrayImage::filled(16, 16, 0.9);
        for y in 0..16 {
            for x in 0..8 {
                img.set(x, y, 0.1);
            }
        }
        let out = bernsen(&img, 3, BERNSEN_CONTRAST_MIN).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(out.get(x, y), u8::from(x < 8), "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn bernsen_low_contrast_falls_back_to_global_class() {
        // Flat halves, window smaller than either: every interior window is
        // low contrast, so classification comes from global Otsu.
        let mut img = GrayImage::filled(32, 8, 0.8);
        for y in 0..8 {
            for x in 0..16 {
                img.set(x, y, 0.15);
            }
        }
        let out = bernsen(&img, 3, BERNSEN_CONTRAST_MIN).unwrap();
        assert_eq!(out.get(2, 4), 1, "dark flat region should be ink");
        assert_eq!(out.get(30, 4), 0, "light flat region should be background");
    }

    #[test]
    fn window_extrema_match_direct_loop() {
        let img = random_gray(11, 7, 10);
        let (min, max) = window_extrema(&img, 5);
        for y in 0..7usize {
            for x in 0..11usize {
                let mut lo = f32::INFINITY;
                let mut hi = f32::NEG_INFINITY;
                for dy in -2i32..=2 {
                    for dx in -2i32..=2 {
                        let sx = (x as i32 + dx).clamp(0, 10) as usize;
                        let sy = (y as i32 + dy).clamp(0, 6) as usize;
                        lo = lo.min(img.get(sx, sy));
                        hi = hi.max(img.get(sx, sy));
                    }
                }
                assert_eq!(min[y * 11 + x], lo);
                assert_eq!(max[y * 11 + x], hi);
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in BaselineMethod::ALL {
            assert_eq!(m.to_string().parse::<BaselineMethod>().unwrap(), m);
        }
        assert!("fancy".parse::<BaselineMethod>().is_err());
    }

    #[test]
    fn run_baseline_applies_defaults() {
        let img = random_gray(20, 20, 11);
        for m in BaselineMethod::ALL {
            let out = run_baseline(m, &img, None, None).unwrap();
            assert_eq!((out.width(), out.height()), (20, 20));
        }
    }
}

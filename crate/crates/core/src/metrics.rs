//! DIBCO evaluation metrics: F-measure, pseudo-F, PSNR, DRD.
//!
//! All metrics treat flag 1 as ink. PSNR of identical images and DRD with
//! zero non-uniform blocks are reported as infinity; callers serialize the
//! sentinel and exclude it from dataset means.

use crate::error::{CoreError, Result};
use crate::image::BinaryImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct MetricsReport {
    /// Percent, 0..=100.
    pub f_measure: f64,
    /// Percent, 0..=100.
    pub f_ps: f64,
    /// dB; +inf when the images are identical.
    pub psnr: f64,
    /// Non-negative; +inf when flips exist but NUBN is zero.
    pub drd: f64,
}

fn check_dims(what: &'static str, a: &BinaryImage, b: &BinaryImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(CoreError::DimensionMismatch {
            what,
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(())
}

pub fn confusion(pred: &BinaryImage, gt: &BinaryImage) -> Result<Confusion> {
    check_dims("confusion", pred, gt)?;
    let mut c = Confusion {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (1, 1) => c.true_pos += 1,
            (1, 0) => c.false_pos += 1,
            (0, 1) => c.false_neg += 1,
            _ => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// 100·2PR/(P+R); zero when no true positives exist.
pub fn f_measure(c: &Confusion) -> f64 {
    if c.true_pos == 0 {
        return 0.0;
    }
    let p = c.true_pos as f64 / (c.true_pos + c.false_pos) as f64;
    let r = c.true_pos as f64 / (c.true_pos + c.false_neg) as f64;
    100.0 * 2.0 * p * r / (p + r)
}

/// Zhang–Suen thinning. The result is a subset of the input ink that
/// preserves 8-connectivity; strokes already one pixel wide are fixpoints.
pub fn skeletonize(img: &BinaryImage) -> BinaryImage {
    let (w, h) = (img.width(), img.height());
    let mut bits = img.bits().to_vec();
    let at = |bits: &[u8], x: isize, y: isize| -> u8 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            bits[y as usize * w + x as usize]
        }
    };
    let mut to_clear: Vec<usize> = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if at(&bits, x, y) == 0 {
                        continue;
                    }
                    // Neighbors clockwise from north: P2..P9.
                    let n = [
                        at(&bits, x, y - 1),
                        at(&bits, x + 1, y - 1),
                        at(&bits, x + 1, y),
                        at(&bits, x + 1, y + 1),
                        at(&bits, x, y + 1),
                        at(&bits, x - 1, y + 1),
                        at(&bits, x - 1, y),
                        at(&bits, x - 1, y - 1),
                    ];
                    let b: u8 = n.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    let (c1, c2) = if pass == 0 {
                        (n[0] * n[2] * n[4], n[2] * n[4] * n[6])
                    } else {
                        (n[0] * n[2] * n[6], n[0] * n[4] * n[6])
                    };
                    if c1 == 0 && c2 == 0 {
                        to_clear.push(y as usize * w + x as usize);
                    }
                }
            }
            if !to_clear.is_empty() {
                changed = true;
                for &i in &to_clear {
                    bits[i] = 0;
                }
            }
        }
        if !changed {
            break;
        }
    }
    BinaryImage::new(w, h, bits).expect("thinning preserves dimensions")
}

/// Pseudo-recall against the skeletonized ground truth, plain precision
/// against the full ground truth.
pub fn pseudo_f_measure(pred: &BinaryImage, gt: &BinaryImage) -> Result<f64> {
    check_dims("pseudo_f_measure", pred, gt)?;
    let skel = skeletonize(gt);
    let mut skel_hit = 0usize;
    let mut skel_total = 0usize;
    let mut pred_hit = 0usize;
    let mut pred_total = 0usize;
    for i in 0..pred.bits().len() {
        let (p, g, s) = (pred.bits()[i], gt.bits()[i], skel.bits()[i]);
        if s == 1 {
            skel_total += 1;
            if p == 1 {
                skel_hit += 1;
            }
        }
        if p == 1 {
            pred_total += 1;
            if g == 1 {
                pred_hit += 1;
            }
        }
    }
    if skel_total == 0 || pred_total == 0 || skel_hit == 0 || pred_hit == 0 {
        return Ok(0.0);
    }
    let recall = skel_hit as f64 / skel_total as f64;
    let precision = pred_hit as f64 / pred_total as f64;
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

/// 10·log10(1/MSE) with unit dynamic range; identical images → +inf.
pub fn psnr(pred: &BinaryImage, gt: &BinaryImage) -> Result<f64> {
    check_dims("psnr", pred, gt)?;
    let flips = pred
        .bits()
        .iter()
        .zip(gt.bits())
        .filter(|(p, g)| p != g)
        .count();
    if flips == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = flips as f64 / pred.bits().len() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}

/// Non-uniform 8×8 blocks on a grid anchored at the origin; partial edge
/// blocks count too.
pub fn nubn(gt: &BinaryImage) -> usize {
    let (w, h) = (gt.width(), gt.height());
    let mut count = 0;
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut saw0 = false;
            let mut saw1 = false;
            'block: for y in by..(by + 8).min(h) {
                for x in bx..(bx + 8).min(w) {
                    if gt.get(x, y) == 1 {
                        saw1 = true;
                    } else {
                        saw0 = true;
                    }
                    if saw0 && saw1 {
                        break 'block;
                    }
                }
            }
            if saw0 && saw1 {
                count += 1;
            }
        }
    }
    count
}

/// 5×5 reciprocal-distance weights, center zero, normalized to sum 1.
pub fn drd_weights() -> [[f64; 5]; 5] {
    let mut w = [[0.0f64; 5]; 5];
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if (i, j) != (2, 2) {
                let di = i as f64 - 2.0;
                let dj = j as f64 - 2.0;
                *v = 1.0 / (di * di + dj * dj).sqrt();
                sum += *v;
            }
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    w
}

/// Distance reciprocal distortion: per flipped pixel, the weighted count
/// of ground-truth neighbors that disagree with the predicted value,
/// normalized by the number of non-uniform ground-truth blocks.
pub fn drd(pred: &BinaryImage, gt: &BinaryImage) -> Result<f64> {
    check_dims("drd", pred, gt)?;
    let weights = drd_weights();
    let (w, h) = (gt.width(), gt.height());
    let mut total = 0.0f64;
    let mut flips = 0usize;
    for y in 0..h {
        for x in 0..w {
            let p = pred.get(x, y);
            if p == gt.get(x, y) {
                continue;
            }
            flips += 1;
            let mut dk = 0.0;
            for (i, row) in weights.iter().enumerate() {
                for (j, &wt) in row.iter().enumerate() {
                    let ny = y as isize + i as isize - 2;
                    let nx = x as isize + j as isize - 2;
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let g = gt.get(nx as usize, ny as usize);
                    dk += (g as f64 - p as f64).abs() * wt;
                }
            }
            total += dk;
        }
    }
    if flips == 0 {
        return Ok(0.0);
    }
    let blocks = nubn(gt);
    if blocks == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(total / blocks as f64)
}

pub fn evaluate(pred: &BinaryImage, gt: &BinaryImage) -> Result<MetricsReport> {
    Ok(MetricsReport {
        f_measure: f_measure(&confusion(pred, gt)?),
        f_ps: pseudo_f_measure(pred, gt)?,
        psnr: psnr(pred, gt)?,
        drd: drd(pred, gt)?,
    })
}

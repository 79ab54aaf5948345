//! Full-image binarization by tiled generator inference.
//!
//! Images larger than one network input are covered by a tile grid with
//! the last row and column anchored to the edge; per-pixel outputs are
//! averaged across every covering tile before thresholding. Undersized
//! images are background-padded to one tile and cropped back afterwards.

use crate::error::{CoreError, Result};
use crate::image::{BinaryImage, GrayImage};
use crate::networks::{BiNet, TaNet};
use crate::pipeline::{gray_to_pm1, grid_offsets, pad_to, pm1_to_gray};
use docbin_tensor::{no_grad, Mode, Tensor};

/// Tile origins over a padded canvas. `width`/`height` are the padded
/// dimensions every offset stays inside.
#[derive(Debug, Clone)]
pub struct TilePlan {
    pub width: usize,
    pub height: usize,
    pub tile: usize,
    pub offsets: Vec<(usize, usize)>,
}

/// Grid covering a `width`×`height` canvas with `tile`-sized squares
/// overlapping by `overlap` pixels. The canvas must already hold at
/// least one tile.
pub fn plan_tiles(width: usize, height: usize, tile: usize, overlap: usize) -> Result<TilePlan> {
    if tile == 0 {
        return Err(CoreError::Data("tile size must be positive".into()));
    }
    if overlap >= tile {
        return Err(CoreError::Data(format!(
            "overlap {overlap} must be smaller than the tile size {tile}"
        )));
    }
    if width < tile || height < tile {
        return Err(CoreError::Data(format!(
            "canvas {width}x{height} is smaller than one {tile}-pixel tile"
        )));
    }
    let stride = tile - overlap;
    let xs = grid_offsets(width, tile, stride);
    let ys = grid_offsets(height, tile, stride);
    let mut offsets = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            offsets.push((ox, oy));
        }
    }
    Ok(TilePlan {
        width,
        height,
        tile,
        offsets,
    })
}

/// Average per-tile outputs onto the canvas. `tiles[i]` is the row-major
/// output for `plan.offsets[i]`. Every canvas pixel must be covered by
/// at least one tile, which holds for any `plan_tiles` result.
pub fn stitch_average(plan: &TilePlan, tiles: &[Vec<f32>]) -> Result<Vec<f32>> {
    if tiles.len() != plan.offsets.len() {
        return Err(CoreError::Data(format!(
            "{} tile outputs for {} planned tiles",
            tiles.len(),
            plan.offsets.len()
        )));
    }
    let t = plan.tile;
    let mut sum = vec![0.0f64; plan.width * plan.height];
    let mut count = vec![0u32; plan.width * plan.height];
    for ((ox, oy), out) in plan.offsets.iter().zip(tiles) {
        if out.len() != t * t {
            return Err(CoreError::Data(format!(
                "tile output has {} values, expected {}",
                out.len(),
                t * t
            )));
        }
        for y in 0..t {
            let row = (oy + y) * plan.width + ox;
            for x in 0..t {
                sum[row + x] += out[y * t + x] as f64;
                count[row + x] += 1;
            }
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| {
            debug_assert!(c > 0, "tile plan left a pixel uncovered");
            (s / c as f64) as f32
        })
        .collect())
}

/// Binarize an arbitrary-size image with a trained generator. `tile`
/// must be a multiple of the network's training patch size (the encoder
/// halves each dimension once per level). Output values below
/// `threshold` (in the generator's [-1,1] range) become ink.
pub fn binarize_image(
    binet: &BiNet,
    image: &GrayImage,
    tile: usize,
    overlap: usize,
    threshold: f32,
) -> Result<BinaryImage> {
    let patch = binet.config.patch_size;
    if tile == 0 || !tile.is_multiple_of(patch) {
        return Err(CoreError::Data(format!(
            "tile {tile} must be a positive multiple of the network patch size {patch}"
        )));
    }
    if !threshold.is_finite() {
        return Err(CoreError::NonFinite {
            what: "threshold",
            context: "binarize".into(),
        });
    }
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return Err(CoreError::Data("cannot binarize an empty image".into()));
    }
    let padded = pad_to(image, tile, tile);
    let plan = plan_tiles(padded.width(), padded.height(), tile, overlap)?;

    let mut tiles = Vec::with_capacity(plan.offsets.len());
    for &(ox, oy) in &plan.offsets {
        let mut input = Vec::with_capacity(tile * tile);
        for y in 0..tile {
            for x in 0..tile {
                input.push(2.0 * padded.get(ox + x, oy + y) - 1.0);
            }
        }
        let t = Tensor::from_vec(input, &[1, 1, tile, tile])?;
        let out = no_grad(|| binet.forward(&t, Mode::Eval))?;
        tiles.push(out.data().to_vec());
    }
    let averaged = stitch_average(&plan, &tiles)?;

    // Crop the centered padding back off.
    let (off_x, off_y) = ((padded.width() - w) / 2, (padded.height() - h) / 2);
    let mut out = BinaryImage::blank(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = averaged[(y + off_y) * plan.width + (x + off_x)];
            out.set(x, y, (v < threshold) as u8);
        }
    }
    Ok(out)
}

/// Run the texture generator on one clean/reference pair of equal-size
/// gray images. Both must be network-shaped: square multiples of the
/// training patch size.
pub fn texture_transfer(
    tanet: &TaNet,
    clean: &GrayImage,
    reference: &GrayImage,
) -> Result<GrayImage> {
    let (w, h) = (clean.width(), clean.height());
    if (reference.width(), reference.height()) != (w, h) {
        return Err(CoreError::DimensionMismatch {
            what: "texture transfer pair",
            a: (w, h),
            b: (reference.width(), reference.height()),
        });
    }
    let c = Tensor::from_vec(gray_to_pm1(clean), &[1, 1, h, w])?;
    let r = Tensor::from_vec(gray_to_pm1(reference), &[1, 1, h, w])?;
    let out = no_grad(|| tanet.forward(&c, &r, Mode::Eval))?;
    pm1_to_gray(w, h, out.data())
}

//! Dataset preparation: patch extraction, rotation augmentation, masks,
//! train/eval split, and unpaired batch sampling.
//!
//! A `PatchStore` is immutable during training. Build order is fixed:
//! extract base patches, split, then augment — rotated copies never leak
//! across the split boundary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::{load_image, save_gray, BinaryImage, GrayImage};
use docbin_tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatchMeta {
    pub file: String,
    pub source: String,
    pub x: usize,
    pub y: usize,
    /// Quarter turns counterclockwise, 0..=3.
    pub rot: u8,
    pub split: Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoreManifest {
    pub patch_size: usize,
    pub stride: usize,
    pub augmented: bool,
    pub clean: Vec<PatchMeta>,
    pub degraded: Vec<PatchMeta>,
}

pub struct PatchStore {
    pub patch_size: usize,
    pub stride: usize,
    pub augmented: bool,
    pub clean: Vec<GrayImage>,
    pub degraded: Vec<GrayImage>,
    pub clean_meta: Vec<PatchMeta>,
    pub degraded_meta: Vec<PatchMeta>,
}

pub(crate) fn grid_offsets(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut offs = vec![0];
    let mut o = stride;
    while o + patch <= len {
        offs.push(o);
        o += stride;
    }
    // Anchor the final patch to the edge so every pixel is covered.
    let last = len - patch;
    if *offs.last().unwrap() != last {
        offs.push(last);
    }
    offs
}

/// Pad with background (1.0), original centered, until both dims reach the
/// given minimum.
pub(crate) fn pad_to(img: &GrayImage, min_w: usize, min_h: usize) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    if w >= min_w && h >= min_h {
        return img.clone();
    }
    let (nw, nh) = (w.max(min_w), h.max(min_h));
    let (ox, oy) = ((nw - w) / 2, (nh - h) / 2);
    let mut out = GrayImage::filled(nw, nh, 1.0);
    for y in 0..h {
        for x in 0..w {
            out.set(x + ox, y + oy, img.get(x, y));
        }
    }
    out
}

/// Patch grid with the last row and column anchored to the image edge.
/// Undersized images are background-padded first, so offsets refer to the
/// padded image.
pub fn patchify(
    image: &GrayImage,
    patch_size: usize,
    stride: usize,
) -> Vec<(GrayImage, usize, usize)> {
    assert!(patch_size >= 1 && stride >= 1);
    let img = pad_to(image, patch_size, patch_size);
    let xs = grid_offsets(img.width(), patch_size, stride);
    let ys = grid_offsets(img.height(), patch_size, stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            let mut p = GrayImage::filled(patch_size, patch_size, 0.0);
            for y in 0..patch_size {
                for x in 0..patch_size {
                    p.set(x, y, img.get(ox + x, oy + y));
                }
            }
            out.push((p, ox, oy));
        }
    }
    out
}

/// Quarter turn counterclockwise: source (x, y) lands at (y, W−1−x).
pub fn rot90(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = GrayImage::filled(h, w, 0.0);
    for y in 0..h {
        for x in 0..w {
            out.set(y, w - 1 - x, img.get(x, y));
        }
    }
    out
}

pub fn rot180(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = GrayImage::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            out.set(w - 1 - x, h - 1 - y, img.get(x, y));
        }
    }
    out
}

pub fn rot270(img: &GrayImage) -> GrayImage {
    rot180(&rot90(img))
}

/// The patch plus its three quarter-turn rotations, in turn order.
pub fn augment_rotations(patch: &GrayImage) -> [GrayImage; 4] {
    [patch.clone(), rot90(patch), rot180(patch), rot270(patch)]
}

/// Ink mask: 1 where the clean image is darker than 0.5.
pub fn mask_from_clean(clean: &GrayImage) -> BinaryImage {
    let bits = clean.pixels().iter().map(|&v| u8::from(v < 0.5)).collect();
    BinaryImage::new(clean.width(), clean.height(), bits).expect("bits are 0/1")
}

impl PatchStore {
    /// Extract base patches from named images. All patches start tagged
    /// `Train`; call `split` and then `augment_train_rotations`.
    pub fn build(
        clean_images: &[(String, GrayImage)],
        degraded_images: &[(String, GrayImage)],
        patch_size: usize,
        stride: usize,
    ) -> PatchStore {
        let extract = |images: &[(String, GrayImage)], prefix: &str| {
            let mut patches = Vec::new();
            let mut meta = Vec::new();
            for (name, img) in images {
                for (p, x, y) in patchify(img, patch_size, stride) {
                    meta.push(PatchMeta {
                        file: format!("{prefix}{:05}.pgm", patches.len()),
                        source: name.clone(),
                        x,
                        y,
                        rot: 0,
                        split: Split::Train,
                    });
                    patches.push(p);
                }
            }
            (patches, meta)
        };
        let (clean, clean_meta) = extract(clean_images, "c");
        let (degraded, degraded_meta) = extract(degraded_images, "d");
        PatchStore {
            patch_size,
            stride,
            augmented: false,
            clean,
            degraded,
            clean_meta,
            degraded_meta,
        }
    }

    /// Deterministically tag ~`eval_fraction` of each pool as eval. The
    /// clean and degraded pools use separate shuffle streams.
    pub fn split(&mut self, eval_fraction: f64, seed: u64) {
        assert!((0.0..1.0).contains(&eval_fraction));
        for (stream, meta) in [
            (0u64, &mut self.clean_meta),
            (1u64, &mut self.degraded_meta),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let n = meta.len();
            let mut order: Vec<usize> = (0..n).collect();
            // Fisher–Yates; rand's shuffle would also work but this keeps
            // the draw count independent of rand's internals.
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let eval_count = (n as f64 * eval_fraction).round() as usize;
            for m in meta.iter_mut() {
                m.split = Split::Train;
            }
            for &i in order.iter().take(eval_count) {
                meta[i].split = Split::Eval;
            }
        }
    }

    /// Split for paired training: both pools must be index-aligned (same
    /// patch grid over stem-matched images), and one permutation tags both
    /// so pairs never straddle the split.
    pub fn split_paired(&mut self, eval_fraction: f64, seed: u64) -> Result<()> {
        assert!((0.0..1.0).contains(&eval_fraction));
        if self.clean_meta.len() != self.degraded_meta.len() {
            return Err(CoreError::Data(format!(
                "paired split needs aligned pools, got {} clean vs {} degraded patches",
                self.clean_meta.len(),
                self.degraded_meta.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let n = self.clean_meta.len();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let eval_count = (n as f64 * eval_fraction).round() as usize;
        for meta in [&mut self.clean_meta, &mut self.degraded_meta] {
            for m in meta.iter_mut() {
                m.split = Split::Train;
            }
            for &i in order.iter().take(eval_count) {
                meta[i].split = Split::Eval;
            }
        }
        Ok(())
    }

    /// Indices where both pools are train-tagged, for paired batches.
    pub fn paired_train_indices(&self) -> Result<Vec<usize>> {
        if self.clean_meta.len() != self.degraded_meta.len() {
            return Err(CoreError::Data(format!(
                "paired training needs aligned pools, got {} clean vs {} degraded patches",
                self.clean_meta.len(),
                self.degraded_meta.len()
            )));
        }
        Ok((0..self.clean_meta.len())
            .filter(|&i| {
                self.clean_meta[i].split == Split::Train
                    && self.degraded_meta[i].split == Split::Train
            })
            .collect())
    }

    /// Append the three rotations of every train patch. Eval patches stay
    /// unrotated so no view of an eval patch enters training.
    pub fn augment_train_rotations(&mut self) {
        let aug = |patches: &mut Vec<GrayImage>, meta: &mut Vec<PatchMeta>, prefix: &str| {
            let base = patches.len();
            let mut next = base;
            for i in 0..base {
                if meta[i].split != Split::Train {
                    continue;
                }
                let rots = [rot90(&patches[i]), rot180(&patches[i]), rot270(&patches[i])];
                for (r, img) in rots.into_iter().enumerate() {
                    meta.push(PatchMeta {
                        file: format!("{prefix}{:05}.pgm", next),
                        rot: r as u8 + 1,
                        ..meta[i].clone()
                    });
                    patches.push(img);
                    next += 1;
                }
            }
        };
        aug(&mut self.clean, &mut self.clean_meta, "c");
        aug(&mut self.degraded, &mut self.degraded_meta, "d");
        self.augmented = true;
    }

    pub fn indices(&self, pool: Pool, split: Split) -> Vec<usize> {
        let meta = match pool {
            Pool::Clean => &self.clean_meta,
            Pool::Degraded => &self.degraded_meta,
        };
        (0..meta.len())
            .filter(|&i| meta[i].split == split)
            .collect()
    }

    pub fn manifest(&self) -> StoreManifest {
        StoreManifest {
            patch_size: self.patch_size,
            stride: self.stride,
            augmented: self.augmented,
            clean: self.clean_meta.clone(),
            degraded: self.degraded_meta.clone(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let patches = dir.join("patches");
        fs::create_dir_all(&patches).map_err(|e| CoreError::io(&patches, e))?;
        for (img, meta) in self
            .clean
            .iter()
            .zip(&self.clean_meta)
            .chain(self.degraded.iter().zip(&self.degraded_meta))
        {
            save_gray(img, patches.join(&meta.file))?;
        }
        let manifest_path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest())
            .map_err(|e| CoreError::Data(format!("manifest encoding failed: {e}")))?;
        fs::write(&manifest_path, json).map_err(|e| CoreError::io(&manifest_path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<PatchStore> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let json =
            fs::read_to_string(&manifest_path).map_err(|e| CoreError::io(&manifest_path, e))?;
        let manifest: StoreManifest = serde_json::from_str(&json).map_err(|e| {
            CoreError::Data(format!("{}: bad manifest: {e}", manifest_path.display()))
        })?;
        let load_pool = |meta: &[PatchMeta]| -> Result<Vec<GrayImage>> {
            meta.iter()
                .map(|m| {
                    let img = load_image(dir.join("patches").join(&m.file))?;
                    if img.width() != manifest.patch_size || img.height() != manifest.patch_size {
                        return Err(CoreError::Data(format!(
                            "patch {} is {}x{}, expected {}",
                            m.file,
                            img.width(),
                            img.height(),
                            manifest.patch_size
                        )));
                    }
                    Ok(img)
                })
                .collect()
        };
        Ok(PatchStore {
            clean: load_pool(&manifest.clean)?,
            degraded: load_pool(&manifest.degraded)?,
            patch_size: manifest.patch_size,
            stride: manifest.stride,
            augmented: manifest.augmented,
            clean_meta: manifest.clean,
            degraded_meta: manifest.degraded,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pool {
    Clean,
    Degraded,
}

/// Serializable sampler position for checkpoint resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub seed: u64,
    pub clean_word_pos: u128,
    pub reference_word_pos: u128,
}

/// Draws clean and reference patches through two independent RNG streams,
/// so the joint index distribution factorizes.
pub struct UnpairedSampler {
    seed: u64,
    clean_rng: ChaCha8Rng,
    reference_rng: ChaCha8Rng,
}

impl UnpairedSampler {
    pub fn new(seed: u64) -> UnpairedSampler {
        let mut clean_rng = ChaCha8Rng::seed_from_u64(seed);
        clean_rng.set_stream(2);
        let mut reference_rng = ChaCha8Rng::seed_from_u64(seed);
        reference_rng.set_stream(3);
        UnpairedSampler {
            seed,
            clean_rng,
            reference_rng,
        }
    }

    pub fn state(&self) -> SamplerState {
        SamplerState {
            seed: self.seed,
            clean_word_pos: self.clean_rng.get_word_pos(),
            reference_word_pos: self.reference_rng.get_word_pos(),
        }
    }

    pub fn restore(state: &SamplerState) -> UnpairedSampler {
        let mut s = UnpairedSampler::new(state.seed);
        s.clean_rng.set_word_pos(state.clean_word_pos);
        s.reference_rng.set_word_pos(state.reference_word_pos);
        s
    }

    pub fn next_clean_index(&mut self, pool_len: usize) -> usize {
        self.clean_rng.gen_range(0..pool_len)
    }

    pub fn next_reference_index(&mut self, pool_len: usize) -> usize {
        self.reference_rng.gen_range(0..pool_len)
    }

    /// Returns (clean, reference, mask) batches of shape [N,1,S,S]. Images
    /// are mapped to [−1,1]; the mask is {0,1} ink flags from the sampled
    /// clean patches.
    pub fn sample_batch(
        &mut self,
        store: &PatchStore,
        batch_size: usize,
    ) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
        let clean_pool = store.indices(Pool::Clean, Split::Train);
        let reference_pool = store.indices(Pool::Degraded, Split::Train);
        if clean_pool.is_empty() || reference_pool.is_empty() {
            return Err(CoreError::Data(
                "cannot sample a batch from an empty train pool".into(),
            ));
        }
        let s = store.patch_size;
        let plane = s * s;
        let mut clean = Vec::with_capacity(batch_size * plane);
        let mut reference = Vec::with_capacity(batch_size * plane);
        let mut mask = Vec::with_capacity(batch_size * plane);
        for _ in 0..batch_size {
            let ci = clean_pool[self.next_clean_index(clean_pool.len())];
            let ri = reference_pool[self.next_reference_index(reference_pool.len())];
            let cp = &store.clean[ci];
            mask.extend(cp.pixels().iter().map(|&v| f32::from(v < 0.5)));
            clean.extend(cp.pixels().iter().map(|&v| 2.0 * v - 1.0));
            reference.extend(store.degraded[ri].pixels().iter().map(|&v| 2.0 * v - 1.0));
        }
        let shape = [batch_size, 1, s, s];
        Ok((
            Tensor::from_vec(clean, &shape)?,
            Tensor::from_vec(reference, &shape)?,
            Tensor::from_vec(mask, &shape)?,
        ))
    }
}

impl UnpairedSampler {
    /// Aligned (degraded input, clean target) batch for the paired
    /// baseline modes, drawn through the clean index stream only.
    pub fn sample_paired_batch(
        &mut self,
        store: &PatchStore,
        batch_size: usize,
    ) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let pairs = store.paired_train_indices()?;
        if pairs.is_empty() {
            return Err(CoreError::Data(
                "cannot sample a paired batch: no aligned train pairs".into(),
            ));
        }
        let s = store.patch_size;
        let plane = s * s;
        let mut input = Vec::with_capacity(batch_size * plane);
        let mut target = Vec::with_capacity(batch_size * plane);
        for _ in 0..batch_size {
            let i = pairs[self.next_clean_index(pairs.len())];
            input.extend(store.degraded[i].pixels().iter().map(|&v| 2.0 * v - 1.0));
            target.extend(store.clean[i].pixels().iter().map(|&v| 2.0 * v - 1.0));
        }
        let shape = [batch_size, 1, s, s];
        Ok((
            Tensor::from_vec(input, &shape)?,
            Tensor::from_vec(target, &shape)?,
        ))
    }
}

/// Fresh OS entropy for default seeds.
pub fn entropy_seed() -> u64 {
    let mut buf = [0u8; 8];
    OsRng.fill_bytes(&mut buf);
    u64::from_le_bytes(buf)
}

/// Map [0,1] intensities to the network range [−1,1].
pub fn gray_to_pm1(img: &GrayImage) -> Vec<f32> {
    img.pixels().iter().map(|&v| 2.0 * v - 1.0).collect()
}

/// Inverse of `gray_to_pm1` with clamping for out-of-range network output.
pub fn pm1_to_gray(width: usize, height: usize, values: &[f32]) -> Result<GrayImage> {
    let pixels = values
        .iter()
        .map(|&v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Ground truth loader: binarize at 0.5 and report how many pixels sat in
/// the ambiguous (0.1, 0.9) band.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<(BinaryImage, usize)> {
    let img = load_image(path)?;
    Ok(img.binarize())
}

const IMAGE_EXTENSIONS: [&str; 5] = ["pgm", "pbm", "pnm", "png", "ppm"];

fn stem_map(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CoreError::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = map.insert(stem.to_string(), path.clone()) {
            return Err(CoreError::Data(format!(
                "ambiguous stem '{stem}': {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Pair `<dataset>/degraded/*` with `<dataset>/gt/*` by filename stem,
/// sorted by stem. Degraded files without a ground-truth partner are an
/// error; extra ground-truth files are ignored.
pub fn paired_files(dataset: impl AsRef<Path>) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let dataset = dataset.as_ref();
    let degraded = stem_map(&dataset.join("degraded"))?;
    let gt = stem_map(&dataset.join("gt"))?;
    let mut pairs = Vec::with_capacity(degraded.len());
    for (stem, dpath) in degraded {
        match gt.get(&stem) {
            Some(gpath) => pairs.push((stem, dpath, gpath.clone())),
            None => {
                return Err(CoreError::Data(format!(
                    "no ground truth for '{stem}' ({})",
                    dpath.display()
                )))
            }
        }
    }
    Ok(pairs)
}

/// Sorted (name, image) list of every readable image in a directory.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, GrayImage)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for (stem, path) in stem_map(dir)? {
        out.push((stem, load_image(&path)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        let n = (w * h) as f32;
        GrayImage::new(w, h, (0..w * h).map(|i| i as f32 / n).collect()).unwrap()
    }

    #[test]
    fn grid_offsets_anchor_to_edge() {
        assert_eq!(grid_offsets(512, 256, 256), vec![0, 256]);
        assert_eq!(grid_offsets(300, 256, 256), vec![0, 44]);
        assert_eq!(grid_offsets(256, 256, 256), vec![0]);
        assert_eq!(grid_offsets(700, 256, 200), vec![0, 200, 400, 444]);
    }

    #[test]
    fn patchify_counts_match_grid() {
        assert_eq!(patchify(&ramp(512, 512), 256, 256).len(), 4);
        assert_eq!(patchify(&ramp(300, 256), 256, 256).len(), 2);
        let single = patchify(&ramp(256, 256), 256, 256);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].0.pixels(), ramp(256, 256).pixels());
    }

    #[test]
    fn patchify_covers_every_pixel() {
        let img = ramp(70, 50);
        for stride in [32, 20] {
            let mut covered = vec![false; 70 * 50];
            for (_, ox, oy) in patchify(&img, 32, stride) {
                for y in oy..oy + 32 {
                    for x in ox..ox + 32 {
                        covered[y * 70 + x] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c), "gap at stride {stride}");
        }
    }

    #[test]
    fn undersized_images_are_padded_with_background() {
        let img = GrayImage::filled(10, 10, 0.0);
        let patches = patchify(&img, 32, 32);
        assert_eq!(patches.len(), 1);
        let p = &patches[0].0;
        // Original sits centered; the border is background.
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(15, 15), 0.0);
        let dark = p.pixels().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(dark, 100);
    }

    #[test]
    fn rot90_coordinate_oracle() {
        let img = ramp(5, 3);
        let r = rot90(&img);
        assert_eq!((r.width(), r.height()), (3, 5));
        assert_eq!(r.get(0, 4), img.get(0, 0));
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(r.get(y, 5 - 1 - x), img.get(x, y));
            }
        }
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = ramp(7, 4);
        let back = rot90(&rot90(&rot90(&rot90(&img))));
        assert_eq!(back.pixels(), img.pixels());
    }

    #[test]
    fn rot180_equals_double_flip() {
        let img = ramp(6, 5);
        let r = rot180(&img);
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(r.get(5 - x, 4 - y), img.get(x, y));
            }
        }
    }

    #[test]
    fn rotations_permute_pixels() {
        let img = ramp(8, 8);
        let mut want: Vec<u32> = img.pixels().iter().map(|v| v.to_bits()).collect();
        want.sort_unstable();
        for r in augment_rotations(&img) {
            let mut got: Vec<u32> = r.pixels().iter().map(|v| v.to_bits()).collect();
            got.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn mask_inverts_checkerboard() {
        let mut img = GrayImage::filled(4, 4, 1.0);
        for y in 0..4 {
            for x in 0..4 {
                if (x + y) % 2 == 0 {
                    img.set(x, y, 0.0);
                }
            }
        }
        let m = mask_from_clean(&img);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(m.get(x, y), u8::from((x + y) % 2 == 0));
            }
        }
        assert_eq!(
            mask_from_clean(&GrayImage::filled(3, 3, 1.0)).ink_count(),
            0
        );
        assert_eq!(
            mask_from_clean(&GrayImage::filled(3, 3, 0.0)).ink_count(),
            9
        );
    }

    fn toy_store(n_images: usize) -> PatchStore {
        let clean: Vec<(String, GrayImage)> = (0..n_images)
            .map(|i| {
                (
                    format!("c{i}"),
                    GrayImage::filled(16, 16, i as f32 / n_images as f32),
                )
            })
            .collect();
        let degraded: Vec<(String, GrayImage)> = (0..n_images)
            .map(|i| (format!("d{i}"), ramp(16, 16)))
            .collect();
        PatchStore::build(&clean, &degraded, 8, 8)
    }

    #[test]
    fn split_is_deterministic_and_proportional() {
        // 25 images × 4 patches = 100 per pool.
        let mut store = toy_store(25);
        store.split(0.10, 7);
        let eval = store.indices(Pool::Clean, Split::Eval);
        let train = store.indices(Pool::Clean, Split::Train);
        assert_eq!(eval.len(), 10);
        assert_eq!(train.len(), 90);

        let mut again = toy_store(25);
        again.split(0.10, 7);
        assert_eq!(again.indices(Pool::Clean, Split::Eval), eval);

        let mut other = toy_store(25);
        other.split(0.10, 8);
        assert_ne!(other.indices(Pool::Clean, Split::Eval), eval);
    }

    #[test]
    fn paired_split_keeps_pools_aligned() {
        let mut store = toy_store(25);
        store.split_paired(0.10, 7).unwrap();
        let clean_eval = store.indices(Pool::Clean, Split::Eval);
        let degraded_eval = store.indices(Pool::Degraded, Split::Eval);
        assert_eq!(clean_eval, degraded_eval);
        assert_eq!(clean_eval.len(), 10);
        assert_eq!(store.paired_train_indices().unwrap().len(), 90);

        // The unpaired split draws independent permutations per pool, so the
        // paired variant must not be a synonym for it.
        let mut unpaired = toy_store(25);
        unpaired.split(0.10, 7);
        assert_ne!(
            unpaired.indices(Pool::Clean, Split::Eval),
            unpaired.indices(Pool::Degraded, Split::Eval)
        );
    }

    #[test]
    fn paired_split_rejects_misaligned_pools() {
        let mut store = toy_store(4);
        store.degraded.pop();
        store.degraded_meta.pop();
        assert!(store.split_paired(0.25, 1).is_err());
        assert!(store.paired_train_indices().is_err());
    }

    #[test]
    fn paired_batch_rows_come_from_matching_indices() {
        // Distinct fill per clean image makes the pairing observable: row i of
        // the target identifies which patch was drawn, and the input row must
        // be the degraded patch at the same store index.
        let n = 8;
        let clean: Vec<(String, GrayImage)> = (0..n)
            .map(|i| {
                (
                    format!("c{i}"),
                    GrayImage::filled(8, 8, i as f32 / n as f32),
                )
            })
            .collect();
        let degraded: Vec<(String, GrayImage)> = (0..n)
            .map(|i| {
                (
                    format!("d{i}"),
                    GrayImage::filled(8, 8, 1.0 - i as f32 / n as f32),
                )
            })
            .collect();
        let mut store = PatchStore::build(&clean, &degraded, 8, 8);
        store.split_paired(0.25, 3).unwrap();

        let mut sampler = UnpairedSampler::new(9);
        let (input, target) = sampler.sample_paired_batch(&store, 6).unwrap();
        assert_eq!(input.shape(), &[6, 1, 8, 8]);
        for row in 0..6 {
            let t = target.data()[row * 64];
            let i = input.data()[row * 64];
            // target = 2(k/n)−1, input = 2(1−k/n)−1 for the same k.
            assert!((t + i).abs() < 1e-6, "row {row}: target {t} input {i}");
        }

        let eval = store.indices(Pool::Clean, Split::Eval);
        let picked: Vec<f32> = (0..6).map(|r| target.data()[r * 64]).collect();
        for v in picked {
            let k = ((v + 1.0) * 0.5 * n as f32).round() as usize;
            assert!(
                !eval.contains(&k),
                "eval patch {k} leaked into a train batch"
            );
        }
    }

    #[test]
    fn augmentation_quadruples_train_only() {
        let mut store = toy_store(25);
        store.split(0.10, 3);
        store.augment_train_rotations();
        assert_eq!(store.indices(Pool::Clean, Split::Train).len(), 360);
        assert_eq!(store.indices(Pool::Clean, Split::Eval).len(), 10);
        assert_eq!(store.clean.len(), store.clean_meta.len());
        // Rotation provenance distinguishes the copies.
        let rots: Vec<u8> = store.clean_meta.iter().map(|m| m.rot).collect();
        assert_eq!(rots.iter().filter(|&&r| r == 0).count(), 100);
        assert_eq!(rots.iter().filter(|&&r| r > 0).count(), 270);
    }

    #[test]
    fn sample_batch_ranges_and_determinism() {
        let mut store = toy_store(4);
        store.split(0.10, 1);
        let mut s1 = UnpairedSampler::new(11);
        let (c, r, m) = s1.sample_batch(&store, 3).unwrap();
        assert_eq!(c.shape(), &[3, 1, 8, 8]);
        assert_eq!(r.shape(), &[3, 1, 8, 8]);
        assert_eq!(m.shape(), &[3, 1, 8, 8]);
        assert!(c
            .data()
            .iter()
            .chain(r.data().iter())
            .all(|v| (-1.0..=1.0).contains(v)));
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));

        let mut s2 = UnpairedSampler::new(11);
        let (c2, r2, m2) = s2.sample_batch(&store, 3).unwrap();
        assert_eq!(c.data(), c2.data());
        assert_eq!(r.data(), r2.data());
        assert_eq!(m.data(), m2.data());

        let mut s3 = UnpairedSampler::new(12);
        let (c3, _, _) = s3.sample_batch(&store, 3).unwrap();
        assert_ne!(c.data(), c3.data());
    }

    #[test]
    fn sampler_state_round_trip_resumes_sequence() {
        let mut store = toy_store(4);
        store.split(0.10, 1);
        let mut a = UnpairedSampler::new(5);
        a.sample_batch(&store, 2).unwrap();
        let state = a.state();
        let (c_next, r_next, _) = a.sample_batch(&store, 2).unwrap();

        let mut b = UnpairedSampler::restore(&state);
        let (c_resumed, r_resumed, _) = b.sample_batch(&store, 2).unwrap();
        assert_eq!(c_next.data(), c_resumed.data());
        assert_eq!(r_next.data(), r_resumed.data());
    }

    #[test]
    fn empty_pool_is_an_error() {
        let store = PatchStore::build(&[], &[], 8, 8);
        let mut s = UnpairedSampler::new(0);
        let err = s.sample_batch(&store, 1).unwrap_err().to_string();
        assert!(err.contains("empty"), "{err}");
    }

    #[test]
    fn clean_and_reference_streams_are_uncorrelated() {
        let mut s = UnpairedSampler::new(99);
        let n = 10_000;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..n {
            xs.push(s.next_clean_index(64) as f64);
            ys.push(s.next_reference_index(64) as f64);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, my) = (mean(&xs), mean(&ys));
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n as f64;
        let sd = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let corr = cov / (sd(&xs, mx) * sd(&ys, my));
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }

    #[test]
    fn pm1_round_trip_within_quantization() {
        let img = ramp(16, 16);
        let t = gray_to_pm1(&img);
        let back = pm1_to_gray(16, 16, &t).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn store_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = toy_store(4);
        store.split(0.25, 2);
        store.augment_train_rotations();
        store.save(dir.path()).unwrap();

        let loaded = PatchStore::load(dir.path()).unwrap();
        assert_eq!(loaded.patch_size, 8);
        assert_eq!(loaded.clean.len(), store.clean.len());
        assert_eq!(loaded.degraded.len(), store.degraded.len());
        for (a, b) in store.clean.iter().zip(&loaded.clean) {
            for (pa, pb) in a.pixels().iter().zip(b.pixels()) {
                assert!((pa - pb).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        assert_eq!(
            serde_json::to_string(&store.manifest()).unwrap(),
            serde_json::to_string(&loaded.manifest()).unwrap()
        );
    }

    #[test]
    fn manifest_bytes_are_reproducible() {
        let build = || {
            let mut s = toy_store(6);
            s.split(0.10, 42);
            s.augment_train_rotations();
            serde_json::to_string_pretty(&s.manifest()).unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn paired_files_match_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        let deg = dir.path().join("degraded");
        let gt = dir.path().join("gt");
        fs::create_dir_all(&deg).unwrap();
        fs::create_dir_all(&gt).unwrap();
        let img = GrayImage::filled(4, 4, 0.5);
        save_gray(&img, deg.join("a.pgm")).unwrap();
        save_gray(&img, deg.join("b.pgm")).unwrap();
        save_gray(&img, gt.join("a.pgm")).unwrap();
        save_gray(&img, gt.join("b.pgm")).unwrap();
        save_gray(&img, gt.join("extra.pgm")).unwrap();
        fs::write(dir.path().join("degraded/notes.txt"), "ignored").unwrap();

        let pairs = paired_files(dir.path()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].0, "a");
        assert_eq!(pairs[1].0, "b");

        save_gray(&img, deg.join("orphan.pgm")).unwrap();
        let err = paired_files(dir.path()).unwrap_err().to_string();
        assert!(err.contains("orphan"), "{err}");
    }
}

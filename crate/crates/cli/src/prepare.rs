//! `docbin prepare`: cut two image directories into an on-disk patch
//! store with a train/eval split.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use docbin_core::pipeline::{load_image_dir, PatchStore, Pool, Split};
use docbin_core::{CoreError, GrayImage};

use crate::manifest::RunManifest;
use crate::{usage, CliResult};

#[derive(Args)]
pub struct PrepareArgs {
    /// Directory of clean (ground-truth) document images
    #[arg(long, value_name = "DIR")]
    clean: PathBuf,
    /// Directory of degraded document images
    #[arg(long, value_name = "DIR")]
    degraded: PathBuf,
    /// Output directory for the patch store
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Square patch edge in pixels; must be a power of two
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    /// Patch grid stride; defaults to the patch size (no overlap)
    #[arg(long)]
    stride: Option<usize>,
    /// Fraction of patches held out as the eval split
    #[arg(long, default_value_t = 0.1)]
    eval_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Match clean and degraded files by stem and keep their patches and
    /// split aligned, as paired training modes require
    #[arg(long)]
    paired: bool,
    /// Append the three quarter-turn rotations of every train patch
    #[arg(long)]
    augment: bool,
}

pub fn run(args: PrepareArgs) -> CliResult {
    if args.patch_size == 0 || !args.patch_size.is_power_of_two() {
        return Err(usage(format!(
            "--patch-size must be a power of two, got {}",
            args.patch_size
        )));
    }
    let stride = args.stride.unwrap_or(args.patch_size);
    if stride == 0 {
        return Err(usage("--stride must be positive"));
    }
    if !(0.0..1.0).contains(&args.eval_fraction) {
        return Err(usage(format!(
            "--eval-fraction must be in [0, 1), got {}",
            args.eval_fraction
        )));
    }

    let clean = nonempty(load_image_dir(&args.clean)?, &args.clean)?;
    let degraded = nonempty(load_image_dir(&args.degraded)?, &args.degraded)?;
    let (clean, degraded) = if args.paired {
        align_pairs(clean, degraded)?
    } else {
        (clean, degraded)
    };

    let mut store = PatchStore::build(&clean, &degraded, args.patch_size, stride);
    if args.paired {
        store.split_paired(args.eval_fraction, args.seed)?;
    } else {
        store.split(args.eval_fraction, args.seed);
    }
    if args.augment {
        store.augment_train_rotations();
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CoreError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    store.save(&args.out)?;

    let config = json!({
        "command": "prepare",
        "clean": args.clean.display().to_string(),
        "degraded": args.degraded.display().to_string(),
        "patch_size": args.patch_size,
        "stride": stride,
        "eval_fraction": args.eval_fraction,
        "seed": args.seed,
        "paired": args.paired,
        "augment": args.augment,
    });
    let mut manifest =
        RunManifest::begin("prepare", &config).with_dataset(&args.out.join("manifest.json"))?;
    manifest.seed = Some(args.seed);
    manifest.push_output(&args.out);
    manifest.write(&args.out.join("run.json"))?;

    let count = |pool, split| store.indices(pool, split).len();
    println!(
        "patch store {}: clean {} train / {} eval, degraded {} train / {} eval",
        args.out.display(),
        count(Pool::Clean, Split::Train),
        count(Pool::Clean, Split::Eval),
        count(Pool::Degraded, Split::Train),
        count(Pool::Degraded, Split::Eval),
    );
    Ok(())
}

fn nonempty(
    images: Vec<(String, GrayImage)>,
    dir: &std::path::Path,
) -> Result<Vec<(String, GrayImage)>, CoreError> {
    if images.is_empty() {
        return Err(CoreError::Data(format!(
            "no images found in {}",
            dir.display()
        )));
    }
    Ok(images)
}

type NamedImages = Vec<(String, GrayImage)>;

/// Reorder both pools so index i of each names the same document, and
/// verify matching dimensions. Every degraded image needs a clean
/// partner; clean images without one are dropped.
fn align_pairs(
    clean: NamedImages,
    degraded: NamedImages,
) -> Result<(NamedImages, NamedImages), CoreError> {
    let mut by_stem: BTreeMap<String, GrayImage> = clean.into_iter().collect();
    let mut clean_out = Vec::with_capacity(degraded.len());
    let mut degraded_out = Vec::with_capacity(degraded.len());
    let mut missing = Vec::new();
    for (stem, img) in degraded {
        match by_stem.remove(&stem) {
            Some(gt) if (gt.width(), gt.height()) == (img.width(), img.height()) => {
                clean_out.push((stem.clone(), gt));
                degraded_out.push((stem, img));
            }
            Some(gt) => {
                return Err(CoreError::DimensionMismatch {
                    what: "paired prepare",
                    a: (img.width(), img.height()),
                    b: (gt.width(), gt.height()),
                });
            }
            None => missing.push(stem),
        }
    }
    if !missing.is_empty() {
        return Err(CoreError::Data(format!(
            "degraded images without a clean partner: {}",
            missing.join(", ")
        )));
    }
    Ok((clean_out, degraded_out))
}

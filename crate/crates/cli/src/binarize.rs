//! `docbin binarize`: apply a trained binarization network to one image
//! of any size via overlapped tiling.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use docbin_core::checkpoint::load_checkpoint;
use docbin_core::inference::binarize_image;
use docbin_core::{load_image, save_binary};

use crate::manifest::RunManifest;
use crate::{usage, CliResult};

#[derive(Args)]
pub struct BinarizeArgs {
    #[arg(long, value_name = "CKPT")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "IMAGE")]
    input: PathBuf,
    /// Output path; .pbm, .pgm, or .png
    #[arg(long, value_name = "IMAGE")]
    out: PathBuf,
    /// Tile edge; must be a multiple of the network patch size
    /// (default: the patch size itself)
    #[arg(long)]
    tile: Option<usize>,
    /// Overlap between adjacent tiles (default: tile / 4)
    #[arg(long)]
    overlap: Option<usize>,
    /// Ink cutoff in the generator's [-1, 1] output range
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    threshold: f32,
}

pub fn run(args: BinarizeArgs) -> CliResult {
    let trainer = load_checkpoint(&args.checkpoint)?;
    let patch = trainer.config().patch_size;
    let tile = args.tile.unwrap_or(patch);
    if tile == 0 || !tile.is_multiple_of(patch) {
        return Err(usage(format!(
            "--tile must be a positive multiple of the network patch size {patch}, got {tile}"
        )));
    }
    let overlap = args.overlap.unwrap_or(tile / 4);
    if overlap >= tile {
        return Err(usage(format!(
            "--overlap must be smaller than the tile, got {overlap} >= {tile}"
        )));
    }
    if !args.threshold.is_finite() {
        return Err(usage(format!(
            "--threshold must be finite, got {}",
            args.threshold
        )));
    }

    let image = load_image(&args.input)?;
    let binary = binarize_image(trainer.binet(), &image, tile, overlap, args.threshold)?;
    save_binary(&binary, &args.out)?;

    let config = json!({
        "command": "binarize",
        "checkpoint": args.checkpoint.display().to_string(),
        "checkpoint_step": trainer.global_step(),
        "input": args.input.display().to_string(),
        "tile": tile,
        "overlap": overlap,
        "threshold": args.threshold,
    });
    let mut manifest = RunManifest::begin("binarize", &config);
    manifest.push_output(&args.out);
    manifest.write(&manifest_path(&args.out))?;
    println!(
        "{} -> {} ({}x{}, {} ink pixels)",
        args.input.display(),
        args.out.display(),
        binary.width(),
        binary.height(),
        binary.ink_count()
    );
    Ok(())
}

/// Manifest path for single-file outputs: `page.pbm` -> `page.run.json`.
pub(crate) fn manifest_path(out: &std::path::Path) -> PathBuf {
    out.with_extension("run.json")
}

//! `docbin augment`: sample clean/reference patch pairs and write the
//! texture network's degraded renditions, with per-file provenance.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use docbin_core::checkpoint::load_checkpoint;
use docbin_core::inference::texture_transfer;
use docbin_core::pipeline::{load_image_dir, PatchStore, Pool, Split, UnpairedSampler};
use docbin_core::{save_gray, CoreError};

use crate::manifest::RunManifest;
use crate::train::mode_name;
use crate::{usage, CliResult};

#[derive(Args)]
pub struct AugmentArgs {
    /// Checkpoint of a full-mode run (the texture network is required)
    #[arg(long, value_name = "CKPT")]
    checkpoint: PathBuf,
    /// Directory of clean images; pages larger than one patch are cut up
    #[arg(long, value_name = "DIR")]
    clean: PathBuf,
    /// Directory of degraded images supplying texture references
    #[arg(long, value_name = "DIR")]
    reference: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of patches to generate
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: AugmentArgs) -> CliResult {
    if args.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let trainer = load_checkpoint(&args.checkpoint)?;
    let Some(tanet) = trainer.tanet() else {
        return Err(CoreError::Data(format!(
            "checkpoint {} holds a '{}' run, which has no texture network",
            args.checkpoint.display(),
            mode_name(trainer.config().mode)
        ))
        .into());
    };
    let patch = trainer.config().patch_size;

    let clean_images = load_image_dir(&args.clean)?;
    let reference_images = load_image_dir(&args.reference)?;
    // An unsplit store leaves every patch in the train pools.
    let store = PatchStore::build(&clean_images, &reference_images, patch, patch);
    let clean_pool = store.indices(Pool::Clean, Split::Train);
    let reference_pool = store.indices(Pool::Degraded, Split::Train);
    if clean_pool.is_empty() || reference_pool.is_empty() {
        return Err(CoreError::Data(format!(
            "no {patch}x{patch} patches available (clean {}, reference {})",
            clean_pool.len(),
            reference_pool.len()
        ))
        .into());
    }

    std::fs::create_dir_all(&args.out).map_err(|e| CoreError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let mut sampler = UnpairedSampler::new(args.seed);
    let mut provenance = Vec::with_capacity(args.count);
    let mut outputs = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let ci = clean_pool[sampler.next_clean_index(clean_pool.len())];
        let ri = reference_pool[sampler.next_reference_index(reference_pool.len())];
        let generated = texture_transfer(tanet, &store.clean[ci], &store.degraded[ri])?;
        let name = format!("gen_{i:05}.pgm");
        let path = args.out.join(&name);
        save_gray(&generated, &path)?;
        provenance.push(json!({
            "file": name,
            "clean": store.clean_meta[ci],
            "reference": store.degraded_meta[ri],
        }));
        outputs.push(path);
    }

    let config = json!({
        "command": "augment",
        "checkpoint": args.checkpoint.display().to_string(),
        "checkpoint_step": trainer.global_step(),
        "clean": args.clean.display().to_string(),
        "reference": args.reference.display().to_string(),
        "count": args.count,
        "seed": args.seed,
    });
    let mut manifest = RunManifest::begin("augment", &config);
    manifest.seed = Some(args.seed);
    for path in &outputs {
        manifest.push_output(path);
    }
    manifest.provenance = Some(serde_json::Value::Array(provenance));
    manifest.write(&args.out.join("run.json"))?;
    println!(
        "wrote {} generated patches to {}",
        args.count,
        args.out.display()
    );
    Ok(())
}

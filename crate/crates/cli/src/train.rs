//! `docbin train`: drive the staged training protocol, checkpointing
//! after every completed stage and logging one JSON line per step.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use docbin_core::checkpoint::{load_checkpoint, save_checkpoint};
use docbin_core::pipeline::PatchStore;
use docbin_core::trainer::{Stage, TrainConfig, TrainMode, Trainer};
use docbin_core::CoreError;

use crate::manifest::{fnv_hex, RunManifest};
use crate::{usage, CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// Patch store directory written by `docbin prepare`
    #[arg(long, value_name = "DIR")]
    store: PathBuf,
    /// Output directory for checkpoints and the step log
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Training configuration JSON (fields of TrainConfig; missing keys
    /// take defaults)
    #[arg(long, value_name = "FILE", conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// Resume from a checkpoint instead of starting fresh
    #[arg(long, value_name = "CKPT")]
    resume: Option<PathBuf>,
    /// Stop after this stage instead of running the full protocol
    #[arg(long, value_enum, default_value_t = StageArg::All)]
    stage: StageArg,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StageArg {
    All,
    Tanet,
    Binet,
    Joint,
    Baseline,
}

pub fn run(args: TrainArgs) -> CliResult {
    let (mut trainer, config_bytes, resumed) = match (&args.config, &args.resume) {
        (Some(path), None) => {
            let raw = std::fs::read(path).map_err(|e| CoreError::Io {
                path: path.clone(),
                source: e,
            })?;
            let config: TrainConfig = serde_json::from_slice(&raw)
                .map_err(|e| CoreError::Data(format!("config {}: {e}", path.display())))?;
            (Trainer::new(config)?, raw, false)
        }
        (None, Some(path)) => {
            let trainer = load_checkpoint(path)?;
            let raw = serde_json::to_vec(trainer.config()).expect("config serializes");
            (trainer, raw, true)
        }
        _ => {
            return Err(usage(
                "pass exactly one of --config (fresh run) or --resume",
            ))
        }
    };
    check_stage_request(&trainer, args.stage)?;

    let store = PatchStore::load(&args.store)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CoreError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let log_path = args.out.join("train_log.jsonl");
    let log_file = if resumed {
        OpenOptions::new().create(true).append(true).open(&log_path)
    } else {
        File::create(&log_path)
    }
    .map_err(|e| CoreError::Io {
        path: log_path.clone(),
        source: e,
    })?;
    let mut log = BufWriter::new(log_file);

    let mut outputs = Vec::new();
    let result = run_stages(
        &mut trainer,
        &store,
        args.stage,
        &args.out,
        &mut log,
        &mut outputs,
    );
    let _ = log.flush();
    if let Err(e) = result {
        if matches!(e, CoreError::NonFinite { .. }) {
            let diag = args.out.join("diagnostic.ckpt");
            match save_checkpoint(&trainer, &diag) {
                Ok(()) => eprintln!("diagnostic checkpoint saved to {}", diag.display()),
                Err(save_err) => eprintln!("could not save diagnostic checkpoint: {save_err}"),
            }
        }
        return Err(e.into());
    }

    let config = json!({
        "command": "train",
        "store": args.store.display().to_string(),
        "stage": stage_arg_name(args.stage),
        "resumed": resumed,
        "train_config_fnv": fnv_hex(&config_bytes),
    });
    let mut manifest =
        RunManifest::begin("train", &config).with_dataset(&args.store.join("manifest.json"))?;
    manifest.seed = Some(trainer.config().seed);
    for path in &outputs {
        manifest.push_output(path);
    }
    manifest.push_output(&log_path);
    manifest.write(&args.out.join("run.json"))?;
    println!(
        "training stopped at stage {} after {} total steps",
        stage_name(trainer.stage()),
        trainer.global_step()
    );
    Ok(())
}

fn run_stages(
    trainer: &mut Trainer,
    store: &PatchStore,
    upto: StageArg,
    out: &Path,
    log: &mut BufWriter<File>,
    outputs: &mut Vec<PathBuf>,
) -> docbin_core::Result<()> {
    loop {
        let current = trainer.stage();
        if current == Stage::Done {
            return Ok(());
        }
        trainer.run_stage(store, &mut |record| {
            let line = serde_json::to_string(record).expect("step record serializes");
            writeln!(log, "{line}").map_err(|e| CoreError::Io {
                path: out.join("train_log.jsonl"),
                source: e,
            })
        })?;
        let path = out.join(format!("stage_{}.ckpt", stage_name(current)));
        save_checkpoint(trainer, &path)?;
        outputs.push(path);
        if stage_arg(current) == Some(upto) {
            return Ok(());
        }
    }
}

/// The requested stop stage must exist in this run's mode and must not
/// already be behind the checkpoint's position.
fn check_stage_request(trainer: &Trainer, want: StageArg) -> Result<(), CliError> {
    let full = trainer.config().mode == TrainMode::Full;
    let target = match want {
        StageArg::All => return Ok(()),
        StageArg::Baseline if full => {
            return Err(usage(
                "mode 'full' has stages tanet, binet, joint; there is no baseline stage",
            ));
        }
        StageArg::Tanet | StageArg::Binet | StageArg::Joint if !full => {
            return Err(usage(format!(
                "mode '{}' trains in a single 'baseline' stage",
                mode_name(trainer.config().mode)
            )));
        }
        StageArg::Tanet => Stage::Tanet,
        StageArg::Binet => Stage::Binet,
        StageArg::Joint => Stage::Joint,
        StageArg::Baseline => Stage::Baseline,
    };
    if rank(trainer.stage()) > rank(target) {
        return Err(usage(format!(
            "stage {} is already complete in this run (current stage: {})",
            stage_name(target),
            stage_name(trainer.stage())
        )));
    }
    Ok(())
}

/// Protocol order; Baseline slots where the full-mode stages would be.
fn rank(stage: Stage) -> u8 {
    match stage {
        Stage::Tanet => 0,
        Stage::Binet => 1,
        Stage::Joint => 2,
        Stage::Baseline => 0,
        Stage::Done => 3,
    }
}

fn stage_arg(stage: Stage) -> Option<StageArg> {
    match stage {
        Stage::Tanet => Some(StageArg::Tanet),
        Stage::Binet => Some(StageArg::Binet),
        Stage::Joint => Some(StageArg::Joint),
        Stage::Baseline => Some(StageArg::Baseline),
        Stage::Done => None,
    }
}

pub(crate) fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Tanet => "tanet",
        Stage::Binet => "binet",
        Stage::Joint => "joint",
        Stage::Baseline => "baseline",
        Stage::Done => "done",
    }
}

fn stage_arg_name(stage: StageArg) -> &'static str {
    match stage {
        StageArg::All => "all",
        StageArg::Tanet => "tanet",
        StageArg::Binet => "binet",
        StageArg::Joint => "joint",
        StageArg::Baseline => "baseline",
    }
}

pub(crate) fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Full => "full",
        TrainMode::UnetBaseline => "unet_baseline",
        TrainMode::Pix2pixBaseline => "pix2pix_baseline",
    }
}

//! End-to-end tests driving the compiled `docbin` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use docbin_core::checkpoint::load_checkpoint;
use docbin_core::inference::binarize_image;
use docbin_core::pipeline::load_ground_truth;
use docbin_core::{load_image, save_gray, GrayImage};
use tempfile::TempDir;

fn docbin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docbin"))
        .args(args)
        .env_remove("DOCBIN_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A white page with a black block, and a grayed copy of it. Same
/// stems in both directories so paired prepare lines them up.
fn write_page_dirs(root: &Path, pages: usize, side: usize) -> (PathBuf, PathBuf) {
    let clean_dir = root.join("clean");
    let degraded_dir = root.join("degraded");
    std::fs::create_dir_all(&clean_dir).unwrap();
    std::fs::create_dir_all(&degraded_dir).unwrap();
    for i in 0..pages {
        let mut clean = GrayImage::filled(side, side, 1.0);
        let mut degraded = GrayImage::filled(side, side, 0.8);
        for y in 0..side {
            for x in 0..side {
                // Shift the glyph per page so patches differ.
                let ink = (x + i * 3) % 11 < 4 && y % 7 < 3;
                if ink {
                    clean.set(x, y, 0.0);
                    degraded.set(x, y, 0.25);
                } else if (x + y) % 5 == 0 {
                    degraded.set(x, y, 0.6);
                }
            }
        }
        save_gray(&clean, clean_dir.join(format!("page{i}.pgm"))).unwrap();
        save_gray(&degraded, degraded_dir.join(format!("page{i}.pgm"))).unwrap();
    }
    (clean_dir, degraded_dir)
}

fn write_config(dir: &Path, value: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn tiny_full_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        serde_json::json!({
            "patch_size": 16,
            "base_channels": 4,
            "batch_size": 2,
            "seed": 9,
            "epochs_stage1": 1,
            "epochs_stage2": 1,
            "epochs_joint": 1,
            "mode": "full",
        }),
    )
}

/// Paired 16-pixel patch store: 2 pages of 32x32 per pool -> 8 patches
/// per pool, all train.
fn prepare_store(root: &Path) -> PathBuf {
    let (clean, degraded) = write_page_dirs(root, 2, 32);
    let store = root.join("store");
    let out = docbin(&[
        "prepare",
        "--clean",
        path_str(&clean),
        "--degraded",
        path_str(&degraded),
        "--out",
        path_str(&store),
        "--patch-size",
        "16",
        "--eval-fraction",
        "0",
        "--paired",
    ]);
    assert_eq!(code(&out), 0, "prepare failed: {}", stderr(&out));
    store
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = docbin(&[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn help_prints_to_stdout_and_exits_zero() {
    let out = docbin(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("binarization"));
}

#[test]
fn thread_env_is_validated() {
    let tmp = TempDir::new().unwrap();
    let (clean, _) = write_page_dirs(tmp.path(), 1, 16);
    let input = clean.join("page0.pgm");
    let result = tmp.path().join("out.pbm");
    let base = ["baseline", "--method", "otsu", "--input"];

    let run = |threads: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_docbin"));
        cmd.args(base)
            .arg(&input)
            .args(["--out", path_str(&result)]);
        match threads {
            Some(v) => cmd.env("DOCBIN_THREADS", v),
            None => cmd.env_remove("DOCBIN_THREADS"),
        };
        cmd.output().expect("binary runs")
    };

    assert_eq!(code(&run(None)), 0);
    let bad = run(Some("abc"));
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("DOCBIN_THREADS"));
    assert_eq!(code(&run(Some("0"))), 1);
    let multi = run(Some("4"));
    assert_eq!(code(&multi), 0);
    assert!(stderr(&multi).contains("one core"));
}

#[test]
fn prepare_is_rerun_stable_and_rejects_empty_dirs() {
    let tmp = TempDir::new().unwrap();
    let (clean, degraded) = write_page_dirs(tmp.path(), 2, 32);

    let run = |out: &Path| {
        let res = docbin(&[
            "prepare",
            "--clean",
            path_str(&clean),
            "--degraded",
            path_str(&degraded),
            "--out",
            path_str(out),
            "--patch-size",
            "16",
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        let run_json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
        run_json["dataset_manifest_fnv"]
            .as_str()
            .unwrap()
            .to_string()
    };
    let store_a = tmp.path().join("store_a");
    let store_b = tmp.path().join("store_b");
    let fnv_a = run(&store_a);
    let fnv_b = run(&store_b);
    assert_eq!(fnv_a, fnv_b);
    assert!(store_a.join("manifest.json").is_file());
    assert!(store_a.join("patches/c00000.pgm").is_file());

    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let res = docbin(&[
        "prepare",
        "--clean",
        path_str(&empty),
        "--degraded",
        path_str(&degraded),
        "--out",
        path_str(&tmp.path().join("store_c")),
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("no images"));
}

#[test]
fn prepare_flags_are_validated() {
    let tmp = TempDir::new().unwrap();
    let (clean, degraded) = write_page_dirs(tmp.path(), 1, 16);
    let store = tmp.path().join("store");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "prepare",
            "--clean",
            path_str(&clean),
            "--degraded",
            path_str(&degraded),
            "--out",
            path_str(&store),
        ];
        args.extend_from_slice(extra);
        docbin(&args)
    };
    assert_eq!(code(&run(&["--patch-size", "100"])), 1);
    assert_eq!(code(&run(&["--eval-fraction", "1.0"])), 1);
    assert_eq!(code(&run(&["--stride", "0"])), 1);
}

#[test]
fn baseline_command_matches_the_library() {
    let tmp = TempDir::new().unwrap();
    let (_, degraded) = write_page_dirs(tmp.path(), 1, 32);
    let input = degraded.join("page0.pgm");
    let out_path = tmp.path().join("otsu.pbm");

    let res = docbin(&[
        "baseline",
        "--method",
        "otsu",
        "--input",
        path_str(&input),
        "--out",
        path_str(&out_path),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let img = load_image(&input).unwrap();
    let expected = docbin_core::baselines::run_baseline(
        docbin_core::baselines::BaselineMethod::Otsu,
        &img,
        None,
        None,
    )
    .unwrap();
    let (written, _) = load_ground_truth(&out_path).unwrap();
    assert_eq!(written.bits(), expected.bits());
    assert!(tmp.path().join("otsu.run.json").is_file());
}

#[test]
fn baseline_flag_combinations_are_checked() {
    let tmp = TempDir::new().unwrap();
    let (_, degraded) = write_page_dirs(tmp.path(), 1, 16);
    let input = degraded.join("page0.pgm");
    let out_path = tmp.path().join("x.pbm");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "baseline",
            "--input",
            path_str(&input),
            "--out",
            path_str(&out_path),
        ];
        args.extend_from_slice(extra);
        docbin(&args)
    };
    assert_eq!(code(&run(&["--method", "median"])), 1);
    assert_eq!(code(&run(&["--method", "otsu", "--window", "15"])), 1);
    assert_eq!(code(&run(&["--method", "bernsen", "--k", "0.2"])), 1);
    assert_eq!(code(&run(&["--method", "niblack", "--window", "14"])), 1);
    assert_eq!(
        code(&run(&[
            "--method", "sauvola", "--window", "15", "--k", "0.3"
        ])),
        0
    );
}

#[test]
fn evaluate_scores_perfect_predictions_and_flags_missing_ones() {
    let tmp = TempDir::new().unwrap();
    let (clean, _) = write_page_dirs(tmp.path(), 2, 32);
    let report_path = tmp.path().join("report.json");

    let res = docbin(&[
        "evaluate",
        "--pred",
        path_str(&clean),
        "--gt",
        path_str(&clean),
        "--out",
        path_str(&report_path),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let table = stdout(&res);
    assert!(table.contains("mean"));
    let header = table.lines().next().unwrap();
    let columns: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(columns, ["image", "F", "F_ps", "DRD", "PSNR"]);

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(report["images"], serde_json::json!(2));
    assert_eq!(
        report["per_image"]["page0"]["f_measure"],
        serde_json::json!(100.0)
    );
    assert_eq!(report["per_image"]["page0"]["drd"], serde_json::json!(0.0));
    // Identical pairs have infinite PSNR, which must not poison the mean.
    assert_eq!(report["mean"]["psnr"], serde_json::json!("inf"));
    assert_eq!(report["excluded_from_mean"]["psnr"], serde_json::json!(2));
    assert_eq!(report["mean"]["f_measure"], serde_json::json!(100.0));

    // A gt stem without a prediction is a data error naming the stem.
    let partial = tmp.path().join("partial");
    std::fs::create_dir_all(&partial).unwrap();
    std::fs::copy(clean.join("page0.pgm"), partial.join("page0.pgm")).unwrap();
    let res = docbin(&[
        "evaluate",
        "--pred",
        path_str(&partial),
        "--gt",
        path_str(&clean),
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("page1"));
}

#[test]
fn train_walks_stages_resumes_and_binarizes() {
    let tmp = TempDir::new().unwrap();
    let store = prepare_store(tmp.path());
    let config = tiny_full_config(tmp.path());
    let out1 = tmp.path().join("run1");

    let res = docbin(&[
        "train",
        "--store",
        path_str(&store),
        "--out",
        path_str(&out1),
        "--config",
        path_str(&config),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for stage in ["tanet", "binet", "joint"] {
        assert!(
            out1.join(format!("stage_{stage}.ckpt")).is_file(),
            "missing {stage}"
        );
    }
    // 8 train patches, batch 2, one epoch per stage -> 4 steps x 3 stages.
    let log = std::fs::read_to_string(out1.join("train_log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 12);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["stage"], serde_json::json!("tanet"));
    assert!(first["losses"]["loss_g_total"].is_number());
    assert!(out1.join("run.json").is_file());

    // Resuming the binet checkpoint must reproduce the joint stage result
    // bit for bit.
    let out2 = tmp.path().join("run2");
    let res = docbin(&[
        "train",
        "--store",
        path_str(&store),
        "--out",
        path_str(&out2),
        "--resume",
        path_str(&out1.join("stage_binet.ckpt")),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let a = std::fs::read(out1.join("stage_joint.ckpt")).unwrap();
    let b = std::fs::read(out2.join("stage_joint.ckpt")).unwrap();
    assert_eq!(a, b);

    // Tiled inference through the CLI matches the library call.
    let page = tmp.path().join("clean/page0.pgm");
    let pred = tmp.path().join("pred.pbm");
    let ckpt = out1.join("stage_joint.ckpt");
    let res = docbin(&[
        "binarize",
        "--checkpoint",
        path_str(&ckpt),
        "--input",
        path_str(&page),
        "--out",
        path_str(&pred),
        "--tile",
        "16",
        "--overlap",
        "4",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let trainer = load_checkpoint(&ckpt).unwrap();
    let image = load_image(&page).unwrap();
    let expected = binarize_image(trainer.binet(), &image, 16, 4, 0.0).unwrap();
    let (written, _) = load_ground_truth(&pred).unwrap();
    assert_eq!(written.bits(), expected.bits());

    // Geometry that cannot tile is rejected before any network work.
    let bad_tile = docbin(&[
        "binarize",
        "--checkpoint",
        path_str(&ckpt),
        "--input",
        path_str(&page),
        "--out",
        path_str(&pred),
        "--tile",
        "24",
    ]);
    assert_eq!(code(&bad_tile), 1);
    let bad_overlap = docbin(&[
        "binarize",
        "--checkpoint",
        path_str(&ckpt),
        "--input",
        path_str(&page),
        "--out",
        path_str(&pred),
        "--tile",
        "16",
        "--overlap",
        "16",
    ]);
    assert_eq!(code(&bad_overlap), 1);

    // Augmentation from the trained texture network is seed-stable.
    let gen_a = tmp.path().join("gen_a");
    let gen_b = tmp.path().join("gen_b");
    for out in [&gen_a, &gen_b] {
        let res = docbin(&[
            "augment",
            "--checkpoint",
            path_str(&ckpt),
            "--clean",
            path_str(&tmp.path().join("clean")),
            "--reference",
            path_str(&tmp.path().join("degraded")),
            "--out",
            path_str(out),
            "--count",
            "2",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    for name in ["gen_00000.pgm", "gen_00001.pgm"] {
        let a = std::fs::read(gen_a.join(name)).unwrap();
        let b = std::fs::read(gen_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // Different draws from the patch pools give distinct outputs.
    let first = std::fs::read(gen_a.join("gen_00000.pgm")).unwrap();
    let second = std::fs::read(gen_a.join("gen_00001.pgm")).unwrap();
    assert_ne!(first, second);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(gen_a.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"].as_array().unwrap().len(), 2);
    assert!(manifest["provenance"][0]["clean"]["source"].is_string());
}

#[test]
fn train_stage_requests_are_validated() {
    let tmp = TempDir::new().unwrap();
    let store = prepare_store(tmp.path());
    let config = tiny_full_config(tmp.path());
    let out = tmp.path().join("run");

    let base = [
        "train",
        "--store",
        path_str(&store),
        "--out",
        path_str(&out),
    ];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        docbin(&args)
    };

    // full mode has no baseline stage.
    let res = with(&["--config", path_str(&config), "--stage", "baseline"]);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("baseline"));
    // exactly one of --config / --resume.
    assert_eq!(code(&with(&[])), 1);
    let res = with(&["--config", path_str(&config), "--resume", "x.ckpt"]);
    assert_eq!(code(&res), 1);

    // Run only the first stage, then ask for it again on resume.
    let res = with(&["--config", path_str(&config), "--stage", "tanet"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(out.join("stage_tanet.ckpt").is_file());
    assert!(!out.join("stage_binet.ckpt").exists());
    let res = with(&[
        "--resume",
        path_str(&out.join("stage_tanet.ckpt")),
        "--stage",
        "tanet",
    ]);
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("already complete"));
}

#[test]
fn unet_baseline_trains_and_cannot_augment() {
    let tmp = TempDir::new().unwrap();
    let store = prepare_store(tmp.path());
    let config = write_config(
        tmp.path(),
        serde_json::json!({
            "patch_size": 16,
            "base_channels": 4,
            "batch_size": 2,
            "seed": 9,
            "epochs_stage2": 1,
            "mode": "unet_baseline",
        }),
    );
    let out = tmp.path().join("run");
    let res = docbin(&[
        "train",
        "--store",
        path_str(&store),
        "--out",
        path_str(&out),
        "--config",
        path_str(&config),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let ckpt = out.join("stage_baseline.ckpt");
    assert!(ckpt.is_file());

    let res = docbin(&[
        "augment",
        "--checkpoint",
        path_str(&ckpt),
        "--clean",
        path_str(&tmp.path().join("clean")),
        "--reference",
        path_str(&tmp.path().join("degraded")),
        "--out",
        path_str(&tmp.path().join("gen")),
        "--count",
        "1",
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("no texture network"));
}

#[test]
fn exploding_training_exits_three_with_a_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let store = prepare_store(tmp.path());
    let config = write_config(
        tmp.path(),
        serde_json::json!({
            "patch_size": 16,
            "base_channels": 4,
            "batch_size": 2,
            "seed": 9,
            "lr": 1e20,
            "epochs_stage1": 1,
            "epochs_stage2": 1,
            "epochs_joint": 1,
            "mode": "full",
        }),
    );
    let out = tmp.path().join("run");
    let res = docbin(&[
        "train",
        "--store",
        path_str(&store),
        "--out",
        path_str(&out),
        "--config",
        path_str(&config),
    ]);
    assert_eq!(code(&res), 3, "stderr: {}", stderr(&res));
    assert!(stderr(&res).contains("non-finite"));
    assert!(out.join("diagnostic.ckpt").is_file());
}

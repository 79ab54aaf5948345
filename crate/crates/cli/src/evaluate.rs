//! `docbin evaluate`: score a directory of predicted binarizations
//! against matching ground-truth images, stem by stem.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use docbin_core::metrics::{evaluate, MetricsReport};
use docbin_core::pipeline::load_image_dir;
use docbin_core::{CoreError, GrayImage};

use crate::manifest::RunManifest;
use crate::CliResult;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Directory of predicted binary images
    #[arg(long, value_name = "DIR")]
    pred: PathBuf,
    /// Directory of ground-truth binary images; every stem here needs a
    /// prediction
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Write the JSON report to this file instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> CliResult {
    let gt_images = load_image_dir(&args.gt)?;
    if gt_images.is_empty() {
        return Err(CoreError::Data(format!("no images found in {}", args.gt.display())).into());
    }
    let mut preds: BTreeMap<String, GrayImage> = load_image_dir(&args.pred)?.into_iter().collect();

    let missing: Vec<&str> = gt_images
        .iter()
        .map(|(stem, _)| stem.as_str())
        .filter(|stem| !preds.contains_key(*stem))
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::Data(format!(
            "ground truth without a prediction: {}",
            missing.join(", ")
        ))
        .into());
    }

    let mut reports = Vec::with_capacity(gt_images.len());
    for (stem, gt_gray) in &gt_images {
        let pred_gray = preds.remove(stem).expect("checked above");
        let (gt_bin, gt_ambiguous) = gt_gray.binarize();
        let (pred_bin, pred_ambiguous) = pred_gray.binarize();
        if gt_ambiguous + pred_ambiguous > 0 {
            eprintln!(
                "warning: {stem}: {gt_ambiguous} ground-truth and {pred_ambiguous} predicted \
                 pixels were between the binary levels; snapped to nearest"
            );
        }
        let report = evaluate(&pred_bin, &gt_bin)?;
        reports.push((stem.clone(), report));
    }
    for stem in preds.keys() {
        eprintln!("warning: prediction {stem} has no ground truth; skipped");
    }

    print_table(&reports);
    let json = report_json(&reports);
    let rendered = serde_json::to_string_pretty(&json).expect("report serializes");
    match &args.out {
        Some(path) => {
            std::fs::write(path, &rendered).map_err(|e| CoreError::Io {
                path: path.clone(),
                source: e,
            })?;
            let config = json!({
                "command": "evaluate",
                "pred": args.pred.display().to_string(),
                "gt": args.gt.display().to_string(),
            });
            let mut manifest = RunManifest::begin("evaluate", &config);
            manifest.push_output(path);
            manifest.write(&path.with_extension("run.json"))?;
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

fn print_table(reports: &[(String, MetricsReport)]) {
    let width = reports
        .iter()
        .map(|(stem, _)| stem.len())
        .chain(std::iter::once("image".len()))
        .max()
        .unwrap_or(5);
    println!(
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
        "image", "F", "F_ps", "DRD", "PSNR"
    );
    for (stem, r) in reports {
        println!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            stem,
            fmt(r.f_measure),
            fmt(r.f_ps),
            fmt(r.drd),
            fmt(r.psnr),
        );
    }
    let (means, excluded) = summarize(reports);
    println!(
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
        "mean",
        fmt(means.f_measure),
        fmt(means.f_ps),
        fmt(means.drd),
        fmt(means.psnr),
    );
    for (metric, count) in excluded {
        eprintln!("note: {count} infinite {metric} value(s) excluded from the mean");
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "inf".into()
    }
}

/// Means are taken over finite values only; a metric whose every value
/// is infinite (e.g. PSNR on all-identical pairs) reports an infinite
/// mean rather than silently dropping the column.
fn summarize(reports: &[(String, MetricsReport)]) -> (MetricsReport, Vec<(&'static str, usize)>) {
    let mut excluded = Vec::new();
    let mut mean_of = |name: &'static str, pick: fn(&MetricsReport) -> f64| {
        let finite: Vec<f64> = reports
            .iter()
            .map(|(_, r)| pick(r))
            .filter(|v| v.is_finite())
            .collect();
        let skipped = reports.len() - finite.len();
        if skipped > 0 {
            excluded.push((name, skipped));
        }
        if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    };
    let means = MetricsReport {
        f_measure: mean_of("f_measure", |r| r.f_measure),
        f_ps: mean_of("f_ps", |r| r.f_ps),
        psnr: mean_of("psnr", |r| r.psnr),
        drd: mean_of("drd", |r| r.drd),
    };
    (means, excluded)
}

/// Infinite values serialize as the string "inf": raw f64 infinities
/// would turn into JSON null and lose the distinction from a missing
/// metric.
fn metric_value(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn report_json(reports: &[(String, MetricsReport)]) -> serde_json::Value {
    let to_json = |r: &MetricsReport| {
        json!({
            "f_measure": metric_value(r.f_measure),
            "f_ps": metric_value(r.f_ps),
            "psnr": metric_value(r.psnr),
            "drd": metric_value(r.drd),
        })
    };
    let per_image: serde_json::Map<String, serde_json::Value> = reports
        .iter()
        .map(|(stem, r)| (stem.clone(), to_json(r)))
        .collect();
    let (means, excluded) = summarize(reports);
    let excluded: serde_json::Map<String, serde_json::Value> = excluded
        .into_iter()
        .map(|(name, count)| (name.to_string(), json!(count)))
        .collect();
    json!({
        "images": reports.len(),
        "per_image": per_image,
        "mean": to_json(&means),
        "excluded_from_mean": excluded,
    })
}

//! `docbin baseline`: classical thresholding methods.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use docbin_core::baselines::{run_baseline, BaselineMethod};
use docbin_core::{load_image, save_binary};

use crate::binarize::manifest_path;
use crate::manifest::RunManifest;
use crate::{usage, CliResult};

#[derive(Args)]
pub struct BaselineArgs {
    /// otsu, niblack, sauvola, or bernsen
    #[arg(long)]
    method: String,
    #[arg(long, value_name = "IMAGE")]
    input: PathBuf,
    /// Output path; .pbm, .pgm, or .png
    #[arg(long, value_name = "IMAGE")]
    out: PathBuf,
    /// Local window edge (odd); local methods only
    #[arg(long)]
    window: Option<usize>,
    /// Threshold coefficient; niblack and sauvola only
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
}

pub fn run(args: BaselineArgs) -> CliResult {
    let method: BaselineMethod = args.method.parse().map_err(usage)?;
    check_flags(method, &args)?;

    let image = load_image(&args.input)?;
    let binary = run_baseline(method, &image, args.window, args.k)?;
    save_binary(&binary, &args.out)?;

    let config = json!({
        "command": "baseline",
        "method": args.method,
        "input": args.input.display().to_string(),
        "window": args.window,
        "k": args.k,
    });
    let mut manifest = RunManifest::begin("baseline", &config);
    manifest.push_output(&args.out);
    manifest.write(&manifest_path(&args.out))?;
    println!(
        "{} ({}) -> {} ({} ink pixels)",
        args.input.display(),
        args.method,
        args.out.display(),
        binary.ink_count()
    );
    Ok(())
}

/// Each method accepts exactly the tuning flags it defines; anything
/// else is a usage error rather than a silent ignore.
fn check_flags(method: BaselineMethod, args: &BaselineArgs) -> CliResult {
    if let Some(w) = args.window {
        if w == 0 || w % 2 == 0 {
            return Err(usage(format!("--window must be odd and positive, got {w}")));
        }
    }
    match method {
        BaselineMethod::Otsu => {
            if args.window.is_some() || args.k.is_some() {
                return Err(usage("otsu is global and takes neither --window nor --k"));
            }
        }
        BaselineMethod::Bernsen => {
            if args.k.is_some() {
                return Err(usage("bernsen has no --k; it uses a fixed contrast floor"));
            }
        }
        BaselineMethod::Niblack | BaselineMethod::Sauvola => {}
    }
    Ok(())
}

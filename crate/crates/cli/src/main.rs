use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use seqvo::data::load_gt_poses;
use seqvo::eval::{
    ate, depth_metrics, emit_report, load_depth_png, mean_metrics, TrajectoryEstimate, TrajectoryReport,
    DEFAULT_DEPTH_CAP, DEFAULT_SNIPPET,
};
use seqvo::geometry::DepthMap;
use seqvo::losses::GanVariant;
use seqvo::train::{run_training, TrainConfig};

#[derive(Parser)]
#[command(name = "seqvo", version, about = "Monocular depth and ego-motion from video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the networks described by a key-value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's GAN variant (none, wgan, patchgan).
        #[arg(long)]
        gan: Option<GanVariant>,
        #[arg(long)]
        no_lstm: bool,
        /// Disable the trajectory consistency loss.
        #[arg(long)]
        no_tc: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score predicted depth PNGs against ground truth with matching names.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEPTH_CAP)]
        cap: f64,
        #[arg(long)]
        no_median_scale: bool,
        /// Report directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Snippet ATE between two KITTI-format pose files.
    EvalOdometry {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SNIPPET)]
        snippet: usize,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            gan,
            no_lstm,
            no_tc,
            seed,
            resume,
        } => {
            let mut cfg = TrainConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(g) = gan {
                cfg.gan = g;
            }
            if no_lstm {
                cfg.use_lstm = false;
            }
            if no_tc {
                cfg.use_trajectory_loss = false;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let last = run_training(&cfg, resume.as_deref())?;
            println!("{}", last.display());
        }
        Command::EvalDepth {
            pred,
            gt,
            cap,
            no_median_scale,
            out,
        } => eval_depth(&pred, &gt, cap, !no_median_scale, &out)?,
        Command::EvalOdometry { pred, gt, snippet, out } => eval_odometry(&pred, &gt, snippet, &out)?,
    }
    Ok(())
}

fn resized(d: DepthMap, width: usize, height: usize) -> Result<DepthMap> {
    if (d.width(), d.height()) == (width, height) {
        return Ok(d);
    }
    let img = d.to_image().resize(width, height);
    Ok(DepthMap::new(width, height, img.data().to_vec())?)
}

fn eval_depth(pred_dir: &Path, gt_dir: &Path, cap: f64, median_scale: bool, out: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(gt_dir)
        .with_context(|| format!("reading {}", gt_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no ground-truth PNGs in {}", gt_dir.display());
    }
    let mut rows = Vec::with_capacity(names.len() + 1);
    for name in &names {
        let gt = load_depth_png(&gt_dir.join(name))?;
        let pred_path = pred_dir.join(name);
        let pred = load_depth_png(&pred_path).with_context(|| format!("prediction for {name}"))?;
        let pred = resized(pred, gt.width(), gt.height())?;
        match depth_metrics(&pred, &gt, cap, median_scale) {
            Ok(m) => rows.push((name.trim_end_matches(".png").to_string(), m)),
            Err(seqvo::Error::EmptyGroundTruth) => log::warn!("{name}: no ground truth within {cap}, skipped"),
            Err(e) => return Err(e.into()),
        }
    }
    let mean = mean_metrics(&rows.iter().map(|r| r.1).collect::<Vec<_>>())
        .context("no image had usable ground truth")?;
    rows.push(("mean".into(), mean));
    let files = emit_report(&rows, &[], out)?;
    println!(
        "abs_diff {:.4} abs_rel {:.4} sq_rel {:.4} a1 {:.4} a2 {:.4} a3 {:.4} ({} images)",
        mean.abs_diff,
        mean.abs_rel,
        mean.sq_rel,
        mean.a1,
        mean.a2,
        mean.a3,
        rows.len() - 1
    );
    println!("{}", files.metrics_csv.display());
    Ok(())
}

fn eval_odometry(pred: &Path, gt: &Path, snippet: usize, out: &Path) -> Result<()> {
    let p = TrajectoryEstimate::anchored(&load_gt_poses(pred)?)?;
    let g = TrajectoryEstimate::anchored(&load_gt_poses(gt)?)?;
    let err = ate(&p, &g, snippet)?;
    let name = pred
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".into());
    let files = emit_report(
        &[],
        &[TrajectoryReport {
            name,
            pred: &p,
            gt: Some(&g),
        }],
        out,
    )?;
    println!("ate {err:.6} ({} frames, {snippet}-frame snippets)", g.len());
    for f in files.trajectories.iter().chain(&files.plots) {
        println!("{}", f.display());
    }
    Ok(())
}

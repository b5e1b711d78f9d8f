use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use super::{DepthMetrics, TrajectoryEstimate};
use crate::data::write_poses;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;

pub const METRICS_CSV_HEADER: &str = "name,abs_diff,abs_rel,sq_rel,a1,a2,a3";
/// Fixed-point scale of 16-bit depth PNGs.
const DEPTH_PNG_SCALE: f64 = 256.0;
const PLOT_SIZE: u32 = 512;
const PLOT_MARGIN: f64 = 24.0;

/// Reads a 16-bit grayscale PNG holding `depth * 256`; zero means no
/// measurement.
pub fn load_depth_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| (v as f64 / DEPTH_PNG_SCALE) as f32).collect();
    DepthMap::new(w as usize, h as usize, data)
}

/// Inverse of [`load_depth_png`]; depths are rounded to 1/256 and saturate
/// at 65535/256.
pub fn save_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let buf: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| (d as f64 * DEPTH_PNG_SCALE).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, buf).expect("buffer matches dimensions");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub struct TrajectoryReport<'a> {
    pub name: String,
    pub pred: &'a TrajectoryEstimate,
    pub gt: Option<&'a TrajectoryEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub metrics_csv: PathBuf,
    pub trajectories: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

/// Writes `metrics.csv`, one `<name>.txt` pose file per trajectory and a
/// top-down `<name>.png` plot (x to the right, z up; ground truth in black,
/// prediction in red).
pub fn emit_report(
    metrics: &[(String, DepthMetrics)],
    trajectories: &[TrajectoryReport<'_>],
    out_dir: &Path,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csv = String::from(METRICS_CSV_HEADER);
    csv.push('\n');
    for (name, m) in metrics {
        let _ = write!(csv, "{name}");
        for v in m.to_array() {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let metrics_csv = out_dir.join("metrics.csv");
    std::fs::write(&metrics_csv, csv).map_err(|e| Error::io(&metrics_csv, e))?;

    let mut files = ReportFiles {
        metrics_csv,
        trajectories: Vec::new(),
        plots: Vec::new(),
    };
    for t in trajectories {
        let txt = out_dir.join(format!("{}.txt", t.name));
        write_poses(&txt, t.pred.poses())?;
        files.trajectories.push(txt);
        let png = out_dir.join(format!("{}.png", t.name));
        plot_top_down(t.pred, t.gt)
            .save(&png)
            .map_err(|source| Error::Image {
                path: png.clone(),
                source,
            })?;
        files.plots.push(png);
    }
    Ok(files)
}

fn plot_top_down(pred: &TrajectoryEstimate, gt: Option<&TrajectoryEstimate>) -> RgbImage {
    let xz = |t: &TrajectoryEstimate| -> Vec<(f64, f64)> {
        t.poses().iter().map(|p| (p.translation().x, p.translation().z)).collect()
    };
    let tracks: Vec<(Vec<(f64, f64)>, Rgb<u8>)> = gt
        .map(|g| (xz(g), Rgb([0, 0, 0])))
        .into_iter()
        .chain([(xz(pred), Rgb([220, 30, 30]))])
        .collect();
    let (mut lo_x, mut hi_x, mut lo_z, mut hi_z) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (pts, _) in &tracks {
        for &(x, z) in pts {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_z = lo_z.min(z);
            hi_z = hi_z.max(z);
        }
    }
    let span = (hi_x - lo_x).max(hi_z - lo_z).max(1e-9);
    let scale = (PLOT_SIZE as f64 - 2.0 * PLOT_MARGIN) / span;
    let (mid_x, mid_z) = (0.5 * (lo_x + hi_x), 0.5 * (lo_z + hi_z));
    let c = PLOT_SIZE as f64 / 2.0;
    let to_px = |(x, z): (f64, f64)| (c + (x - mid_x) * scale, c - (z - mid_z) * scale);

    let mut img = RgbImage::from_pixel(PLOT_SIZE, PLOT_SIZE, Rgb([255, 255, 255]));
    for (pts, color) in &tracks {
        for seg in pts.windows(2) {
            draw_line(&mut img, to_px(seg[0]), to_px(seg[1]), *color);
        }
        if let Some(&p) = pts.first() {
            let (x, y) = to_px(p);
            draw_line(&mut img, (x - 3.0, y), (x + 3.0, y), *color);
            draw_line(&mut img, (x, y - 3.0), (x, y + 3.0), *color);
        }
    }
    img
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).round();
        let y = (a.1 + t * (b.1 - a.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_gt_poses;
    use crate::eval::accumulate_trajectory;
    use crate::geometry::Pose6;

    #[test]
    fn depth_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthMap::new(3, 2, vec![0.0, 1.5, 10.25, 79.0, 0.00390625, 200.0]).unwrap();
        let p = dir.path().join("d.png");
        save_depth_png(&p, &d).unwrap();
        assert_eq!(load_depth_png(&p).unwrap(), d);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = emit_report(&[], &[], dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(&empty.metrics_csv).unwrap(),
            format!("{METRICS_CSV_HEADER}\n")
        );
        let rel: Vec<Pose6> = (0..6).map(|i| Pose6::new(0.1, 0.0, 1.0, 0.0, 0.05 * i as f64, 0.0)).collect();
        let tr = accumulate_trajectory(&rel).unwrap();
        let m = DepthMetrics {
            abs_diff: 1.0,
            abs_rel: 0.5,
            ..Default::default()
        };
        let files = emit_report(
            &[("run".into(), m)],
            &[TrajectoryReport {
                name: "seq09".into(),
                pred: &tr,
                gt: Some(&tr),
            }],
            dir.path(),
        )
        .unwrap();
        let csv = std::fs::read_to_string(&files.metrics_csv).unwrap();
        assert_eq!(csv.lines().nth(1), Some("run,1,0.5,0,0,0,0"));
        let back = load_gt_poses(&files.trajectories[0]).unwrap();
        for (a, b) in back.iter().zip(tr.poses()) {
            assert!((a.matrix() - b.matrix()).abs().max() < 1e-9);
        }
        let plot = image::open(&files.plots[0]).unwrap();
        assert_eq!(plot.width(), PLOT_SIZE);
    }
}

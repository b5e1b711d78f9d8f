//! KITTI odometry layout: `sequences/<id>/image_2/*.png`,
//! `sequences/<id>/calib.txt` and `poses/<id>.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use super::{SequenceSample, SplitSpec, SplitTag, WindowRef};
use crate::error::{Error, Result};
use crate::flow::FlowProvider;
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::image::ImageBuf;

/// Loose orthonormality bound for parsed rotations. Pose files store about
/// six significant digits, so rotations are re-projected after this check.
const PARSED_ROTATION_TOL: f64 = 1e-3;

/// Projection matrices keyed by name (`P0` .. `P3`, plus any other 12-value
/// entries such as `Tr`).
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub projections: BTreeMap<String, [f64; 12]>,
}

impl Calibration {
    /// Intrinsics of camera `index` (2 is the left color camera) for images
    /// of the given size.
    pub fn intrinsics(&self, index: usize, width: usize, height: usize) -> Result<CameraIntrinsics> {
        let key = format!("P{index}");
        let p = self.projections.get(&key).ok_or_else(|| {
            Error::parse("calibration", &key, None, format!("missing {key}: line"))
        })?;
        CameraIntrinsics::new(p[0], p[5], p[2], p[6], width, height)
    }
}

pub fn parse_calibration(text: &str, source: &str) -> Result<Calibration> {
    let mut projections = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| {
            Error::parse(source, "line", Some(line_no), "expected `KEY: values`")
        })?;
        let key = key.trim();
        let values: Vec<&str> = rest.split_whitespace().collect();
        let is_projection = key.len() == 2 && key.starts_with('P') && key.as_bytes()[1].is_ascii_digit();
        if !is_projection && values.len() != 12 {
            continue;
        }
        if values.len() != 12 {
            return Err(Error::parse(
                source,
                key,
                Some(line_no),
                format!("expected 12 values, found {}", values.len()),
            ));
        }
        let mut m = [0.0; 12];
        for (slot, tok) in m.iter_mut().zip(&values) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(source, key, Some(line_no), format!("bad number {tok:?}")))?;
        }
        if projections.insert(key.to_string(), m).is_some() {
            return Err(Error::parse(source, key, Some(line_no), "duplicate entry"));
        }
    }
    Ok(Calibration { projections })
}

/// Intrinsics of camera `camera` from a KITTI `calib.txt`.
pub fn parse_intrinsics(path: &Path, camera: usize, width: usize, height: usize) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let calib = parse_calibration(&text, &source)?;
    calib.intrinsics(camera, width, height).map_err(|e| match e {
        Error::Parse { field, line, message, .. } => Error::Parse {
            source_name: source,
            field,
            line,
            message,
        },
        other => other,
    })
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// One camera-to-world transform per line, 12 row-major values each.
pub fn parse_poses(text: &str, source: &str) -> Result<Vec<RigidTransform>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(Error::parse(
                source,
                "pose",
                Some(line_no),
                format!("expected 12 values, found {}", tokens.len()),
            ));
        }
        let mut v = [0.0; 12];
        for (slot, tok) in v.iter_mut().zip(&tokens) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(source, "pose", Some(line_no), format!("bad number {tok:?}")))?;
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= PARSED_ROTATION_TOL) || r.determinant() <= 0.0 {
            return Err(Error::parse(source, "pose", Some(line_no), "rotation block is not a rotation"));
        }
        let t = Vector3::new(v[3], v[7], v[11]);
        let rot = if err == 0.0 { r } else { nearest_rotation(&r) };
        out.push(RigidTransform::from_parts(rot, t));
    }
    Ok(out)
}

pub fn load_gt_poses(path: &Path) -> Result<Vec<RigidTransform>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, &path.display().to_string())
}

/// KITTI text form: one line of 12 values per transform, written with
/// shortest round-trip float formatting.
pub fn format_poses(poses: &[RigidTransform]) -> String {
    let mut s = String::new();
    for p in poses {
        let v = p.to_row_major_3x4();
        let line: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_poses(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, format_poses(poses)).map_err(|e| Error::io(path, e))
}

/// Camera motion from frame `a` to frame `b` given camera-to-world poses.
pub fn relative_motion(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.invert().compose(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub id: String,
    pub frames: Vec<PathBuf>,
    pub calib: PathBuf,
    pub poses: Option<PathBuf>,
}

/// Sorted, immutable list of training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub tag: SplitTag,
    pub window_len: usize,
    pub sequences: BTreeMap<String, SequenceInfo>,
    pub windows: Vec<WindowRef>,
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            frames.push(p);
        }
    }
    frames.sort();
    Ok(frames)
}

pub fn scan_dataset(root: &Path, split: &SplitSpec) -> Result<DatasetIndex> {
    split.validate()?;
    let seq_root = root.join("sequences");
    if !seq_root.is_dir() {
        return Err(Error::Ingestion(format!("{} has no sequences/ directory", root.display())));
    }
    let mut ids = split.sequences.clone();
    ids.sort();
    ids.dedup();
    let mut sequences = BTreeMap::new();
    let mut windows = Vec::new();
    for id in ids {
        let dir = seq_root.join(&id);
        if !dir.is_dir() {
            log::warn!("sequence {id} not present under {}", seq_root.display());
            continue;
        }
        let calib = dir.join("calib.txt");
        if !calib.is_file() {
            return Err(Error::Ingestion(format!("sequence {id}: missing {}", calib.display())));
        }
        let image_dir = dir.join("image_2");
        let frames = if image_dir.is_dir() { list_pngs(&image_dir)? } else { Vec::new() };
        if frames.is_empty() {
            return Err(Error::Ingestion(format!("sequence {id}: no frames in {}", image_dir.display())));
        }
        let pose_file = root.join("poses").join(format!("{id}.txt"));
        let poses = pose_file.is_file().then_some(pose_file);
        if frames.len() >= split.window_len {
            let mut start = 0;
            while start + split.window_len <= frames.len() {
                windows.push(WindowRef {
                    sequence: id.clone(),
                    start,
                });
                start += split.stride;
            }
        }
        sequences.insert(
            id.clone(),
            SequenceInfo {
                id,
                frames,
                calib,
                poses,
            },
        );
    }
    if sequences.is_empty() {
        return Err(Error::Ingestion(format!(
            "none of the {:?} sequences exist under {}",
            split.sequences,
            seq_root.display()
        )));
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        tag: split.tag,
        window_len: split.window_len,
        sequences,
        windows,
    })
}

/// Options for turning an index window into a [`SequenceSample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub width: usize,
    pub height: usize,
    pub camera: usize,
}

impl DatasetIndex {
    /// Loads window `i`: flow on the original frames, then frames resized to
    /// the network resolution with intrinsics rescaled to match.
    pub fn load_sample(&self, i: usize, opts: &LoadOptions, flow: &dyn FlowProvider) -> Result<SequenceSample> {
        let w = self
            .windows
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("window {i} out of range ({})", self.windows.len())))?;
        let info = &self.sequences[&w.sequence];
        let raw: Vec<ImageBuf> = info.frames[w.start..w.start + self.window_len]
            .iter()
            .map(|p| ImageBuf::load_png(p))
            .collect::<Result<_>>()?;
        let (w0, h0) = (raw[0].width(), raw[0].height());
        if let Some(bad) = raw.iter().position(|f| (f.width(), f.height()) != (w0, h0)) {
            return Err(Error::Ingestion(format!(
                "sequence {}: frame {} has a different size",
                w.sequence,
                w.start + bad
            )));
        }
        let mut flows = Vec::with_capacity(raw.len() - 1);
        for k in 0..raw.len() - 1 {
            flows.push(flow.flow(&w.sequence, w.start + k, &raw[k], &raw[k + 1])?);
        }
        let intrinsics = parse_intrinsics(&info.calib, opts.camera, w0, h0)?.rescaled(opts.width, opts.height);
        let frames: Vec<ImageBuf> = raw.iter().map(|f| f.resize(opts.width, opts.height)).collect();
        let gt_motions = match &info.poses {
            Some(p) => {
                let all = load_gt_poses(p)?;
                if all.len() < w.start + self.window_len {
                    return Err(Error::Ingestion(format!(
                        "sequence {}: {} poses for {} frames",
                        w.sequence,
                        all.len(),
                        info.frames.len()
                    )));
                }
                let win = &all[w.start..w.start + self.window_len];
                Some(win.windows(2).map(|p| relative_motion(&p[0], &p[1])).collect())
            }
            None => None,
        };
        SequenceSample::new(frames, flows, intrinsics, None, gt_motions)
            .map(|s| s.with_origin(&w.sequence, w.start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CALIB: &str = "P0: 7.188560e+02 0.000000e+00 6.071928e+02 0.000000e+00 0.000000e+00 7.188560e+02 1.852157e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P1: 7.188560e+02 0.000000e+00 6.071928e+02 -3.861448e+02 0.000000e+00 7.188560e+02 1.852157e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.188560e+02 0.000000e+00 6.071928e+02 4.538225e+01 0.000000e+00 7.188560e+02 1.852157e+02 -1.130887e-01 0.000000e+00 0.000000e+00 1.000000e+00 3.779761e-03
";

    #[test]
    fn reads_p2() {
        let c = parse_calibration(CALIB, "calib").unwrap();
        let k = c.intrinsics(2, 1241, 376).unwrap();
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (718.856, 718.856, 607.1928, 185.2157));
        assert!(matches!(c.intrinsics(3, 1241, 376), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_calib_lines() {
        let short = "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP2: 1 2 3\n";
        assert!(matches!(parse_calibration(short, "c"), Err(Error::Parse { line: Some(2), .. })));
        assert!(matches!(parse_calibration("garbage\n", "c"), Err(Error::Parse { line: Some(1), .. })));
        let nan = "P2: 1 0 0 0 0 1 0 0 0 0 x 0\n";
        assert!(matches!(parse_calibration(nan, "c"), Err(Error::Parse { .. })));
    }

    #[test]
    fn pose_lines() {
        let p = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1 1\n", "p").unwrap();
        assert_eq!(p[0], RigidTransform::identity());
        let rel = relative_motion(&p[0], &p[1]);
        assert!((rel.translation() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(matches!(parse_poses("1 0 0\n", "p"), Err(Error::Parse { line: Some(1), .. })));
        assert!(parse_poses("2 0 0 0 0 1 0 0 0 0 1 0\n", "p").is_err());
    }

    #[test]
    fn rounded_rotations_are_reprojected() {
        let line = "9.999978e-01 5.272628e-04 -2.066935e-03 -4.690294e-02 -5.296506e-04 9.999992e-01 -1.154865e-03 -2.839928e-02 2.066324e-03 1.155958e-03 9.999971e-01 8.586941e-01\n";
        let p = parse_poses(line, "p").unwrap();
        let r = p[0].rotation();
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
    }
}

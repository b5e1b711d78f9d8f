//! Depth and odometry evaluation.

mod report;

pub use report::{emit_report, load_depth_png, save_depth_png, ReportFiles, TrajectoryReport, METRICS_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_vec_to_transform, DepthMap, Pose6, RigidTransform};

pub const DEFAULT_DEPTH_CAP: f64 = 80.0;
pub const DEFAULT_SNIPPET: usize = 5;
/// Predictions are clamped to `[MIN_PRED_DEPTH, cap]` before scoring.
pub const MIN_PRED_DEPTH: f64 = 1e-3;
const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_diff: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl DepthMetrics {
    pub fn to_array(&self) -> [f64; 6] {
        [self.abs_diff, self.abs_rel, self.sq_rel, self.a1, self.a2, self.a3]
    }
}

/// Median of a nonempty slice; the two middle values are averaged for even
/// lengths.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Scores `pred` on the pixels where `0 < gt <= cap`. With `median_scale`
/// the prediction is first multiplied by `median(gt) / median(pred)` over
/// those pixels.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, cap: f64, median_scale: bool) -> Result<DepthMetrics> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::Shape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidArgument(format!("depth cap must be positive, got {cap}")));
    }
    let (mut p, g): (Vec<f64>, Vec<f64>) = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(_, &g)| g > 0.0 && g as f64 <= cap)
        .map(|(&p, &g)| (p as f64, g as f64))
        .unzip();
    if g.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    if median_scale {
        let mp = median(&mut p.clone());
        if mp > 0.0 {
            let s = median(&mut g.clone()) / mp;
            p.iter_mut().for_each(|v| *v *= s);
        }
    }
    let n = g.len() as f64;
    let mut m = DepthMetrics::default();
    for (&pv, &gv) in p.iter().zip(&g) {
        let pv = pv.clamp(MIN_PRED_DEPTH, cap);
        let d = pv - gv;
        m.abs_diff += d.abs();
        m.abs_rel += d.abs() / gv;
        m.sq_rel += d * d / gv;
        let delta = (pv / gv).max(gv / pv);
        m.a1 += f64::from(u8::from(delta < 1.25));
        m.a2 += f64::from(u8::from(delta < 1.25f64.powi(2)));
        m.a3 += f64::from(u8::from(delta < 1.25f64.powi(3)));
    }
    for v in [&mut m.abs_diff, &mut m.abs_rel, &mut m.sq_rel, &mut m.a1, &mut m.a2, &mut m.a3] {
        *v /= n;
    }
    Ok(m)
}

/// Field-wise mean; `None` for an empty list.
pub fn mean_metrics(all: &[DepthMetrics]) -> Option<DepthMetrics> {
    if all.is_empty() {
        return None;
    }
    let mut acc = [0.0; 6];
    for m in all {
        for (a, v) in acc.iter_mut().zip(m.to_array()) {
            *a += v;
        }
    }
    let n = all.len() as f64;
    Some(DepthMetrics {
        abs_diff: acc[0] / n,
        abs_rel: acc[1] / n,
        sq_rel: acc[2] / n,
        a1: acc[3] / n,
        a2: acc[4] / n,
        a3: acc[5] / n,
    })
}

/// Global camera poses, one per frame, with frame 0 at the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    poses: Vec<RigidTransform>,
}

impl TrajectoryEstimate {
    pub fn new(poses: Vec<RigidTransform>) -> Result<Self> {
        let first = poses
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
        let dev = (first.matrix() - RigidTransform::identity().matrix()).abs().max();
        if dev > IDENTITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "trajectory must start at the identity (off by {dev:e})"
            )));
        }
        Ok(Self { poses })
    }

    /// Re-expresses arbitrary global poses relative to the first one.
    pub fn anchored(poses: &[RigidTransform]) -> Result<Self> {
        let first = poses
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?
            .invert();
        let mut out: Vec<RigidTransform> = poses.iter().map(|p| first.compose(p)).collect();
        out[0] = RigidTransform::identity();
        Self::new(out)
    }

    pub fn poses(&self) -> &[RigidTransform] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `inv(T_i) * T_{i+1}` for every consecutive pair.
    pub fn relative_poses(&self) -> Vec<Pose6> {
        self.poses
            .windows(2)
            .map(|w| w[0].invert().compose(&w[1]).to_pose6())
            .collect()
    }
}

/// `T_0 = I`, `T_{i+1} = T_i * transform(rel_i)`.
pub fn accumulate_trajectory(rel: &[Pose6]) -> Result<TrajectoryEstimate> {
    let mut poses = Vec::with_capacity(rel.len() + 1);
    let mut cur = RigidTransform::identity();
    poses.push(cur);
    for p in rel {
        cur = cur.compose(&pose_vec_to_transform(p)?);
        poses.push(cur);
    }
    TrajectoryEstimate::new(poses)
}

/// Snippet ATE: every run of `snippet_len` consecutive frames is re-anchored
/// at its first frame in both trajectories, the predicted translations are
/// scaled by the least-squares factor, and the mean translation error over
/// the snippet is taken. The result is the mean over all snippets.
pub fn ate(pred: &TrajectoryEstimate, gt: &TrajectoryEstimate, snippet_len: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectories differ in length: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if snippet_len < 2 || snippet_len > gt.len() {
        return Err(Error::InvalidArgument(format!(
            "snippet length {snippet_len} does not fit a {}-frame trajectory",
            gt.len()
        )));
    }
    let mut total = 0.0;
    let count = gt.len() - snippet_len + 1;
    for start in 0..count {
        let pa = pred.poses[start].invert();
        let ga = gt.poses[start].invert();
        let span = start..start + snippet_len;
        let p: Vec<_> = pred.poses[span.clone()].iter().map(|t| pa.compose(t).translation()).collect();
        let g: Vec<_> = gt.poses[span].iter().map(|t| ga.compose(t).translation()).collect();
        let pp: f64 = p.iter().map(|v| v.norm_squared()).sum();
        let gp: f64 = p.iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
        let s = if pp > 0.0 { gp / pp } else { 0.0 };
        let err: f64 = p.iter().zip(&g).map(|(a, b)| (a * s - b).norm()).sum();
        total += err / snippet_len as f64;
    }
    Ok(total / count as f64)
}

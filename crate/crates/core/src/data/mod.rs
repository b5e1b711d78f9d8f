//! Dataset ingestion, windowing, and synthetic scenes.

pub mod kitti;
pub mod kv;
pub mod synth;

pub use kitti::{
    format_poses, load_gt_poses, parse_calibration, parse_intrinsics, parse_poses, relative_motion,
    scan_dataset, write_poses, Calibration, DatasetIndex, LoadOptions, SequenceInfo,
};
pub use kv::KvConfig;
pub use synth::{synth_scene, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::{CameraIntrinsics, DepthMap, RigidTransform};
use crate::image::ImageBuf;

pub const DEFAULT_WINDOW: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
}

/// Which sequences to scan and how to window them.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub tag: SplitTag,
    pub sequences: Vec<String>,
    pub window_len: usize,
    pub stride: usize,
}

impl SplitSpec {
    /// Odometry sequences 00-08.
    pub fn kitti_train() -> Self {
        Self {
            tag: SplitTag::Train,
            sequences: (0..=8).map(|i| format!("{i:02}")).collect(),
            window_len: DEFAULT_WINDOW,
            stride: 1,
        }
    }

    /// Odometry sequences 09-10.
    pub fn kitti_val() -> Self {
        Self {
            tag: SplitTag::Val,
            sequences: vec!["09".into(), "10".into()],
            window_len: DEFAULT_WINDOW,
            stride: 1,
        }
    }

    pub fn with_window(mut self, window_len: usize, stride: usize) -> Self {
        self.window_len = window_len;
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 3 {
            return Err(Error::Config(format!("window must hold at least 3 frames, got {}", self.window_len)));
        }
        if self.stride == 0 {
            return Err(Error::Config("window stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowRef {
    pub sequence: String,
    pub start: usize,
}

/// An ordered window of frames with the flow between each consecutive pair.
#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub sequence: String,
    pub start: usize,
    pub frames: Vec<ImageBuf>,
    /// `flows[k]` runs from `frames[k]` to `frames[k + 1]`.
    pub flows: Vec<FlowField>,
    /// Intrinsics at the resolution of `frames`.
    pub intrinsics: CameraIntrinsics,
    pub gt_depths: Option<Vec<DepthMap>>,
    /// `gt_motions[k]`: camera motion from frame `k` to frame `k + 1`,
    /// i.e. `inv(T_k) * T_{k+1}` for camera-to-world poses `T`.
    pub gt_motions: Option<Vec<RigidTransform>>,
}

impl SequenceSample {
    pub fn new(
        frames: Vec<ImageBuf>,
        flows: Vec<FlowField>,
        intrinsics: CameraIntrinsics,
        gt_depths: Option<Vec<DepthMap>>,
        gt_motions: Option<Vec<RigidTransform>>,
    ) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(format!("a sample needs at least 2 frames, got {}", frames.len())));
        }
        if flows.len() != frames.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} frames need {} flows, got {}",
                frames.len(),
                frames.len() - 1,
                flows.len()
            )));
        }
        let (w, h, c) = (frames[0].width(), frames[0].height(), frames[0].channels());
        if frames.iter().any(|f| (f.width(), f.height(), f.channels()) != (w, h, c)) {
            return Err(Error::Shape("frames differ in size".into()));
        }
        if (intrinsics.width, intrinsics.height) != (w, h) {
            return Err(Error::Shape(format!(
                "intrinsics are for {}x{}, frames are {w}x{h}",
                intrinsics.width, intrinsics.height
            )));
        }
        let (fw, fh) = (flows[0].width(), flows[0].height());
        if flows.iter().any(|f| (f.width(), f.height()) != (fw, fh)) {
            return Err(Error::Shape("flows differ in size".into()));
        }
        if let Some(d) = &gt_depths {
            if d.len() != frames.len() || d.iter().any(|m| (m.width(), m.height()) != (w, h)) {
                return Err(Error::Shape("ground-truth depths do not match frames".into()));
            }
        }
        if let Some(m) = &gt_motions {
            if m.len() != frames.len() - 1 {
                return Err(Error::Shape(format!(
                    "{} ground-truth motions for {} frames",
                    m.len(),
                    frames.len()
                )));
            }
        }
        Ok(Self {
            sequence: String::new(),
            start: 0,
            frames,
            flows,
            intrinsics,
            gt_depths,
            gt_motions,
        })
    }

    pub fn with_origin(mut self, sequence: &str, start: usize) -> Self {
        self.sequence = sequence.to_string();
        self.start = start;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Contiguous sub-window `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<SequenceSample> {
        if len < 2 || start + len > self.frames.len() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) outside {} frames",
                start + len,
                self.frames.len()
            )));
        }
        let s = SequenceSample::new(
            self.frames[start..start + len].to_vec(),
            self.flows[start..start + len - 1].to_vec(),
            self.intrinsics,
            self.gt_depths.as_ref().map(|d| d[start..start + len].to_vec()),
            self.gt_motions.as_ref().map(|m| m[start..start + len - 1].to_vec()),
        )?;
        Ok(s.with_origin(&self.sequence, self.start + start))
    }

    /// Ground-truth camera motion from frame `i` to frame `j > i`.
    pub fn gt_motion_between(&self, i: usize, j: usize) -> Option<RigidTransform> {
        let m = self.gt_motions.as_ref()?;
        if i >= j || j > m.len() {
            return None;
        }
        Some(m[i..j].iter().fold(RigidTransform::identity(), |acc, s| acc.compose(s)))
    }
}

use candle_core::{Tensor, D};

use super::layers::{Conv2d, UpConv2d};
use super::params::ParamStore;
use super::{ArchConfig, NUM_SCALES};
use crate::error::{Error, Result};
use crate::ops;

/// Pose and explainability outputs for a batch of target/source tuples.
#[derive(Debug, Clone)]
pub struct PoseOutput {
    /// `(B, num_sources, 6)` target-to-source poses.
    pub poses: Tensor,
    /// Masks `[full, 1/2, 1/4, 1/8]`, each `(B, num_sources, h, w)` in `[0, 1]`.
    pub masks: Vec<Tensor>,
}

/// Shared convolutional encoder with two heads: a 1x1 convolution regressing
/// 6-DOF poses (spatially averaged, scaled by a small constant) and an
/// up-sampling decoder emitting 4-scale sigmoid explainability masks.
#[derive(Debug, Clone)]
pub struct PoseExpNet {
    convs: Vec<Conv2d>,
    pose_head: Conv2d,
    mask_up: Vec<UpConv2d>,
    mask_pred: Vec<Conv2d>,
    num_sources: usize,
    pose_scale: f64,
}

impl PoseExpNet {
    pub fn new(store: &mut ParamStore, cfg: &ArchConfig) -> Result<Self> {
        let mut convs = Vec::new();
        let mut c_in = 3 * (1 + cfg.num_sources);
        for (i, (&c, &k)) in cfg.pose_channels.iter().zip(&cfg.pose_kernels).enumerate() {
            convs.push(Conv2d::new(store, &format!("pose.conv{}", i + 1), c_in, c, k, 2)?);
            c_in = c;
        }
        let pose_head = Conv2d::new(store, "pose.head", c_in, 6 * cfg.num_sources, 1, 1)?;
        let mut mask_up = Vec::new();
        let mut mask_pred = Vec::new();
        let mut prev = cfg.pose_channels[4];
        for (i, &u) in cfg.mask_up_channels.iter().enumerate() {
            let level = 5 - i;
            mask_up.push(UpConv2d::new(store, &format!("pose.mask_up{level}"), prev, u)?);
            if level <= NUM_SCALES {
                mask_pred.push(Conv2d::new(
                    store,
                    &format!("pose.mask_pred{level}"),
                    u,
                    cfg.num_sources,
                    3,
                    1,
                )?);
            }
            prev = u;
        }
        Ok(Self {
            convs,
            pose_head,
            mask_up,
            mask_pred,
            num_sources: cfg.num_sources,
            pose_scale: cfg.pose_scale,
        })
    }

    pub fn convs(&self) -> &[Conv2d] {
        &self.convs
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    /// Zeroes the pose head so every predicted motion is the identity.
    pub fn zero_pose_head(&self, store: &ParamStore) -> Result<()> {
        for name in ["pose.head.w", "pose.head.b"] {
            let v = store
                .var(name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing {name}")))?;
            v.set(&v.as_tensor().zeros_like()?)?;
        }
        Ok(())
    }

    /// `target: (B, 3, H, W)`, `sources`: `num_sources` tensors of the same shape.
    pub fn forward(&self, target: &Tensor, sources: &[Tensor]) -> Result<PoseOutput> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument("pose network needs at least one source".into()));
        }
        if sources.len() != self.num_sources {
            return Err(Error::InvalidArgument(format!(
                "pose network was built for {} sources, got {}",
                self.num_sources,
                sources.len()
            )));
        }
        let (b, _, h, w) = target.dims4()?;
        for s in sources {
            if s.dims() != target.dims() {
                return Err(Error::Shape(format!(
                    "source {:?} differs from target {:?}",
                    s.dims(),
                    target.dims()
                )));
            }
        }
        let mut inputs = vec![target.clone()];
        inputs.extend(sources.iter().cloned());
        let mut x = Tensor::cat(&inputs, 1)?;
        let mut feats = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            x = conv.forward(&x)?.relu()?;
            feats.push(x.clone());
        }
        let poses = (self
            .pose_head
            .forward(&x)?
            .mean(D::Minus1)?
            .mean(D::Minus1)?
            * self.pose_scale)?
            .reshape((b, self.num_sources, 6))?;

        // Mask decoder from the fifth encoder stage; stage sizes follow the
        // encoder features (ceil halving) up to the input resolution.
        let mut m = feats[4].clone();
        let mut masks = Vec::with_capacity(NUM_SCALES);
        let mut pred = self.mask_pred.iter();
        for (i, up) in self.mask_up.iter().enumerate() {
            let level = 5 - i;
            let (th, tw) = if level >= 2 {
                (feats[level - 2].dim(2)?, feats[level - 2].dim(3)?)
            } else {
                (h, w)
            };
            m = ops::crop_to(&up.forward(&m)?.relu()?, th, tw)?;
            if level <= NUM_SCALES {
                let p = pred.next().expect("one predictor per scale");
                masks.push(ops::sigmoid(&p.forward(&m)?)?);
            }
        }
        masks.reverse();
        Ok(PoseOutput { poses, masks })
    }
}

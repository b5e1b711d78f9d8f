//! Trainable networks: flow encoder, sequence LSTM, disparity network,
//! pose/explainability network, WGAN critic and PatchGAN discriminator.

mod checkpoint;
mod disc;
mod disp;
mod encoder;
mod layers;
mod lstm;
mod params;
mod pose;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Block, BlockData,
    Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use disc::{Critic, PatchDiscriminator};
pub use disp::DispNet;
pub use encoder::FlowEncoder;
pub use layers::{BatchNorm2d, Conv2d, DownBlock, Linear, Mode, UpConv2d};
pub use lstm::{Lstm, LstmState};
pub use params::{group_of, ParamStore};
pub use pose::{PoseExpNet, PoseOutput};

use serde::{Deserialize, Serialize};

/// Dimension of flow codes and LSTM hidden states.
pub const CODE_DIM: usize = 128;

/// Architecture hyper-parameters. The defaults are the published layer
/// widths and kernel sizes; only the input resolution and the PatchGAN base
/// width are free choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub height: usize,
    pub width: usize,
    pub encoder_channels: Vec<usize>,
    pub encoder_kernels: Vec<usize>,
    pub disp_channels: Vec<usize>,
    pub disp_kernels: Vec<usize>,
    pub disp_up_channels: Vec<usize>,
    pub pose_channels: Vec<usize>,
    pub pose_kernels: Vec<usize>,
    pub mask_up_channels: Vec<usize>,
    pub num_sources: usize,
    pub disp_alpha: f64,
    pub disp_beta: f64,
    pub pose_scale: f64,
    pub patch_base_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 416,
            encoder_channels: vec![16, 32, 64, 128, 128, 128],
            encoder_kernels: vec![7, 5, 3, 3, 3, 3],
            disp_channels: vec![16, 32, 64, 128, 128, 128, CODE_DIM],
            disp_kernels: vec![7, 5, 3, 3, 3, 3, 3],
            disp_up_channels: vec![128, 128, 128, 64, 32, 16, 16],
            pose_channels: vec![16, 32, 64, 128, 256, 256, 256],
            pose_kernels: vec![7, 5, 3, 3, 3, 3, 3],
            mask_up_channels: vec![256, 128, 64, 32, 16],
            num_sources: 2,
            disp_alpha: 10.0,
            disp_beta: 0.01,
            pose_scale: 0.01,
            patch_base_channels: 64,
        }
    }
}

impl ArchConfig {
    /// Default architecture at a different input resolution.
    pub fn with_resolution(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        let pairs = [
            ("encoder", self.encoder_channels.len(), self.encoder_kernels.len()),
            ("disp", self.disp_channels.len(), self.disp_kernels.len()),
            ("pose", self.pose_channels.len(), self.pose_kernels.len()),
        ];
        for (name, a, b) in pairs {
            if a != b || a == 0 {
                return Err(Error::Config(format!(
                    "{name}: {a} channel widths but {b} kernel sizes"
                )));
            }
        }
        if self.disp_up_channels.len() != self.disp_channels.len() {
            return Err(Error::Config(
                "disparity decoder needs one up-sampling stage per encoder stage".into(),
            ));
        }
        if self.disp_channels.len() < 4 || self.pose_channels.len() < 5 {
            return Err(Error::Config("too few stages for a 4-scale pyramid".into()));
        }
        if self.mask_up_channels.len() != 5 {
            return Err(Error::Config("mask decoder has exactly 5 up-sampling stages".into()));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "network resolution {}x{} must be a positive multiple of 8",
                self.height, self.width
            )));
        }
        if self.num_sources == 0 {
            return Err(Error::Config("at least one source frame is required".into()));
        }
        Ok(())
    }
}

/// Number of disparity / mask scales.
pub const NUM_SCALES: usize = 4;

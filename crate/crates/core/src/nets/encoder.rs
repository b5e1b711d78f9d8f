use candle_core::{Tensor, D};

use super::layers::{DownBlock, Mode};
use super::params::ParamStore;
use super::ArchConfig;
use crate::error::{Error, Result};

/// Maps a 2-channel normalized flow field to a code vector: stacked
/// [`DownBlock`]s followed by global average pooling.
#[derive(Debug, Clone)]
pub struct FlowEncoder {
    blocks: Vec<DownBlock>,
}

impl FlowEncoder {
    pub fn new(store: &mut ParamStore, cfg: &ArchConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c_in = 2;
        for (i, (&c, &k)) in cfg.encoder_channels.iter().zip(&cfg.encoder_kernels).enumerate() {
            blocks.push(DownBlock::new(store, &format!("encoder.down{}", i + 1), c_in, c, k)?);
            c_in = c;
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[DownBlock] {
        &self.blocks
    }

    pub fn code_dim(&self) -> usize {
        self.blocks.last().map(|b| b.out_channels()).unwrap_or(0)
    }

    /// Feature maps after every block (the last one is pooled into the code).
    pub fn features(&self, flow: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        let c = flow.dim(1)?;
        if c != 2 {
            return Err(Error::Shape(format!("flow encoder expects 2 channels, got {c}")));
        }
        let mut x = flow.clone();
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            x = b.forward(&x, mode)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    /// `(B, 2, H, W)` normalized flow to `(B, code_dim)`.
    pub fn forward(&self, flow: &Tensor, mode: Mode) -> Result<Tensor> {
        let feats = self.features(flow, mode)?;
        let last = feats.last().expect("at least one block");
        Ok(last.mean(D::Minus1)?.mean(D::Minus1)?)
    }
}

use candle_core::{Tensor, D};

use super::layers::{BatchNorm2d, Conv2d, DownBlock, Linear, Mode};
use super::params::ParamStore;
use super::ArchConfig;
use crate::error::{Error, Result};
use crate::ops;

/// Unconditional WGAN critic: the disparity encoder architecture followed by
/// global average pooling and a linear read-out. No output non-linearity.
#[derive(Debug, Clone)]
pub struct Critic {
    blocks: Vec<DownBlock>,
    head: Linear,
}

impl Critic {
    pub fn new(store: &mut ParamStore, cfg: &ArchConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c_in = 3;
        for (i, (&c, &k)) in cfg.disp_channels.iter().zip(&cfg.disp_kernels).enumerate() {
            blocks.push(DownBlock::new(store, &format!("critic.down{}", i + 1), c_in, c, k)?);
            c_in = c;
        }
        let head = Linear::new(store, "critic.head", c_in, 1)?;
        Ok(Self { blocks, head })
    }

    /// `(B, 3, H, W)` to `(B,)` scores.
    pub fn forward(&self, img: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut x = img.clone();
        for b in &self.blocks {
            x = b.forward(&x, mode)?;
        }
        let pooled = x.mean(D::Minus1)?.mean(D::Minus1)?;
        Ok(self.head.forward(&pooled)?.squeeze(1)?)
    }

    /// Clamps every critic variable in `store` to `[-c, c]`.
    pub fn clip_weights(store: &ParamStore, c: f64) -> Result<()> {
        for (_, var) in store.group_vars(&["critic"]) {
            var.set(&var.as_tensor().clamp(-c, c)?)?;
        }
        Ok(())
    }
}

/// 70x70 PatchGAN: three stride-2 and two stride-1 4x4 convolutions with
/// LeakyReLU(0.2) and batch norm on the inner layers. Conditioned by channel
/// concatenation of the judged image and the reference image.
#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    convs: Vec<Conv2d>,
    norms: Vec<Option<BatchNorm2d>>,
}

impl PatchDiscriminator {
    pub const RECEPTIVE_FIELD: usize = 70;
    /// Pixel stride between neighbouring score-map entries.
    pub const STRIDE: usize = 8;

    pub fn new(store: &mut ParamStore, cfg: &ArchConfig) -> Result<Self> {
        let f = cfg.patch_base_channels;
        let spec = [(6, f, 2, false), (f, 2 * f, 2, true), (2 * f, 4 * f, 2, true), (4 * f, 8 * f, 1, true), (8 * f, 1, 1, false)];
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &(cin, cout, stride, norm)) in spec.iter().enumerate() {
            let name = format!("patch.conv{}", i + 1);
            convs.push(Conv2d::with_padding(store, &name, cin, cout, 4, stride, 1)?);
            norms.push(if norm {
                Some(BatchNorm2d::new(store, &format!("patch.bn{}", i + 1), cout)?)
            } else {
                None
            });
        }
        Ok(Self { convs, norms })
    }

    /// Per-patch scores `(B, 1, h, w)` for `img` judged against `condition`.
    pub fn forward(&self, img: &Tensor, condition: &Tensor, mode: Mode) -> Result<Tensor> {
        if img.dims() != condition.dims() {
            return Err(Error::Shape(format!(
                "image {:?} and condition {:?} differ",
                img.dims(),
                condition.dims()
            )));
        }
        let mut x = Tensor::cat(&[img, condition], 1)?;
        let last = self.convs.len() - 1;
        for (i, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            x = conv.forward(&x)?;
            if let Some(bn) = norm {
                x = bn.forward(&x, mode)?;
            }
            if i < last {
                x = ops::leaky_relu(&x, 0.2)?;
            }
        }
        Ok(x)
    }
}

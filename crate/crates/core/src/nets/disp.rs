use candle_core::Tensor;

use super::layers::{Conv2d, DownBlock, Mode, UpConv2d};
use super::params::ParamStore;
use super::{ArchConfig, NUM_SCALES};
use crate::error::{Error, Result};
use crate::ops;

/// Encoder-decoder disparity network conditioned on a sequence code.
///
/// The encoder is a stack of [`DownBlock`]s. The code is broadcast-added to
/// the bottleneck. Each decoder stage doubles resolution with a transposed
/// convolution, concatenates the matching encoder skip (and, on the finest
/// three stages, the upsampled coarser disparity) and convolves. The four
/// finest stages emit `alpha * sigmoid(x) + beta`.
#[derive(Debug, Clone)]
pub struct DispNet {
    down: Vec<DownBlock>,
    up: Vec<UpConv2d>,
    iconv: Vec<Conv2d>,
    predict: Vec<Conv2d>,
    alpha: f64,
    beta: f64,
}

impl DispNet {
    pub fn new(store: &mut ParamStore, cfg: &ArchConfig) -> Result<Self> {
        let n = cfg.disp_channels.len();
        let mut down = Vec::with_capacity(n);
        let mut c_in = 3;
        for (i, (&c, &k)) in cfg.disp_channels.iter().zip(&cfg.disp_kernels).enumerate() {
            down.push(DownBlock::new(store, &format!("disp.down{}", i + 1), c_in, c, k)?);
            c_in = c;
        }
        // Decoder stage j (0-based from the bottleneck) produces level n - j.
        let mut up = Vec::with_capacity(n);
        let mut iconv = Vec::with_capacity(n);
        let mut predict = Vec::with_capacity(NUM_SCALES);
        let mut prev = *cfg.disp_channels.last().expect("validated");
        for (j, &u) in cfg.disp_up_channels.iter().enumerate() {
            let level = n - j;
            up.push(UpConv2d::new(store, &format!("disp.up{level}"), prev, u)?);
            let skip = if level >= 2 { cfg.disp_channels[level - 2] } else { 0 };
            let disp_in = usize::from(level < NUM_SCALES);
            iconv.push(Conv2d::new(
                store,
                &format!("disp.iconv{level}"),
                u + skip + disp_in,
                u,
                3,
                1,
            )?);
            if level <= NUM_SCALES {
                predict.push(Conv2d::new(store, &format!("disp.pred{level}"), u, 1, 3, 1)?);
            }
            prev = u;
        }
        Ok(Self {
            down,
            up,
            iconv,
            predict,
            alpha: cfg.disp_alpha,
            beta: cfg.disp_beta,
        })
    }

    pub fn encoder_blocks(&self) -> &[DownBlock] {
        &self.down
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.down.last().map(|b| b.out_channels()).unwrap_or(0)
    }

    /// Disparities `[full, 1/2, 1/4, 1/8]`, each `(B, 1, h, w)`.
    pub fn forward(&self, img: &Tensor, code: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        let (b, _, h, w) = img.dims4()?;
        let (cb, cd) = code.dims2()?;
        if cb != b || cd != self.bottleneck_channels() {
            return Err(Error::Shape(format!(
                "code {:?} cannot be added to a {}-channel bottleneck of batch {b}",
                code.dims(),
                self.bottleneck_channels()
            )));
        }
        let mut skips = Vec::with_capacity(self.down.len());
        let mut x = img.clone();
        for block in &self.down {
            x = block.forward(&x, mode)?;
            skips.push(x.clone());
        }
        x = x.broadcast_add(&code.reshape((b, cd, 1, 1))?)?;

        let n = self.down.len();
        let mut disps: Vec<Tensor> = Vec::with_capacity(NUM_SCALES);
        let mut pred_idx = 0;
        for (j, (up, iconv)) in self.up.iter().zip(&self.iconv).enumerate() {
            let level = n - j;
            let (th, tw) = if level >= 2 {
                let s = &skips[level - 2];
                (s.dim(2)?, s.dim(3)?)
            } else {
                (h, w)
            };
            let upx = ops::crop_to(&up.forward(&x)?.relu()?, th, tw)?;
            let mut parts = vec![upx];
            if level >= 2 {
                parts.push(skips[level - 2].clone());
            }
            if level < NUM_SCALES {
                let coarser = disps.last().expect("coarser disparity exists");
                parts.push(ops::resize_bilinear(coarser, th, tw)?);
            }
            x = iconv.forward(&Tensor::cat(&parts, 1)?)?.relu()?;
            if level <= NUM_SCALES {
                let logits = self.predict[pred_idx].forward(&x)?;
                pred_idx += 1;
                disps.push(((ops::sigmoid(&logits)? * self.alpha)? + self.beta)?);
            }
        }
        disps.reverse();
        Ok(disps)
    }
}

//! Convolution, batch-norm and linear layers over [`ParamStore`] variables.

use candle_core::{Tensor, Var, D};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::ops;

/// How batch normalization treats statistics during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running averages are updated.
    Train,
    /// Batch statistics; running averages are left untouched. Used when a
    /// network is evaluated inside another network's update.
    BatchStats,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
    in_channels: usize,
}

impl Conv2d {
    /// Xavier-uniform weights, zero bias, "same"-style padding `k / 2`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        Self::with_padding(store, name, in_channels, out_channels, kernel, stride, kernel / 2)
    }

    pub fn with_padding(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let k2 = kernel * kernel;
        let weight = store.xavier_uniform(
            &format!("{name}.w"),
            &[out_channels, in_channels, kernel, kernel],
            in_channels * k2,
            out_channels * k2,
        )?;
        let bias = store.constant(&format!("{name}.b"), &[out_channels], 0.0)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            in_channels,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = x.dim(1)?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let x = if self.stride > 1 && self.kernel_size() % 2 == 1 {
            ops::pad_even(x)?
        } else {
            x.clone()
        };
        let y = x
            .contiguous()?
            .conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

/// Stride-2 transposed convolution (kernel 3, padding 1, output padding 1):
/// exactly doubles both spatial dimensions.
#[derive(Debug, Clone)]
pub struct UpConv2d {
    weight: Tensor,
    bias: Tensor,
}

impl UpConv2d {
    pub fn new(store: &mut ParamStore, name: &str, in_channels: usize, out_channels: usize) -> Result<Self> {
        let weight = store.xavier_uniform(
            &format!("{name}.w"),
            &[in_channels, out_channels, 3, 3],
            out_channels * 9,
            in_channels * 9,
        )?;
        let bias = store.constant(&format!("{name}.b"), &[out_channels], 0.0)?;
        Ok(Self { weight, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.contiguous()?.conv_transpose2d(&self.weight, 1, 1, 2, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.gamma"), &[channels], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[channels], 0.0)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let (mean, var) = match mode {
            Mode::Eval => (
                self.running_mean.as_tensor().reshape((1, c, 1, 1))?,
                self.running_var.as_tensor().reshape((1, c, 1, 1))?,
            ),
            Mode::Train | Mode::BatchStats => {
                let flat = x.transpose(0, 1)?.reshape((c, b * h * w))?;
                let mean = flat.mean_keepdim(D::Minus1)?;
                let centered = flat.broadcast_sub(&mean)?;
                let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
                if mode == Mode::Train {
                    let n = (b * h * w) as f64;
                    let unbiased = if n > 1.0 {
                        (var.detach() * (n / (n - 1.0)))?
                    } else {
                        var.detach()
                    };
                    let m = self.momentum;
                    let rm = ((self.running_mean.as_tensor() * (1.0 - m))?
                        + (mean.detach().flatten_all()? * m)?)?;
                    let rv = ((self.running_var.as_tensor() * (1.0 - m))?
                        + (unbiased.flatten_all()? * m)?)?;
                    self.running_mean.set(&rm)?;
                    self.running_var.set(&rv)?;
                }
                (mean.reshape((1, c, 1, 1))?, var.reshape((1, c, 1, 1))?)
            }
        };
        let norm = x
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(norm
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Self {
            weight: store.xavier_uniform(&format!("{name}.w"), &[outputs, inputs], inputs, outputs)?,
            bias: store.constant(&format!("{name}.b"), &[outputs], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Down-sampling block: stride-2 convolution, batch norm, ReLU, then a
/// stride-1 convolution of the same kernel size, batch norm, ReLU.
#[derive(Debug, Clone)]
pub struct DownBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
}

impl DownBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), in_channels, out_channels, kernel, 2)?,
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), out_channels)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), out_channels, out_channels, kernel, 1)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), out_channels)?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    pub fn kernel_size(&self) -> usize {
        self.conv1.kernel_size()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let x = self.bn1.forward(&self.conv1.forward(x)?, mode)?.relu()?;
        Ok(self.bn2.forward(&self.conv2.forward(&x)?, mode)?.relu()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn grad_check(
        store: &ParamStore,
        param: &str,
        input: &Tensor,
        f: impl Fn(&Tensor) -> Tensor,
    ) {
        let var = store.var(param).unwrap().clone();
        let loss = f(input).sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let g: Vec<f64> = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let dims = var.dims().to_vec();
        for i in (0..base.len()).step_by(base.len() / 7 + 1) {
            let eval = |d: f64| {
                let mut v = base.clone();
                v[i] += d;
                var.set(&Tensor::from_vec(v, dims.as_slice(), &Device::Cpu).unwrap()).unwrap();
                let out = f(input).sqr().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap();
                var.set(&Tensor::from_vec(base.clone(), dims.as_slice(), &Device::Cpu).unwrap())
                    .unwrap();
                out
            };
            let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{param}[{i}]: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn strided_conv_on_mixed_parity_input_has_correct_gradients() {
        let mut store = ParamStore::new(1, DType::F64);
        let conv = Conv2d::new(&mut store, "t.c", 2, 3, 3, 2).unwrap();
        let x = Tensor::randn(0.0, 1.0, (2, 2, 6, 7), &Device::Cpu).unwrap();
        assert_eq!(conv.forward(&x).unwrap().dims(), &[2, 3, 3, 4]);
        let xv = Var::from_tensor(&x).unwrap();
        let y = conv.forward(xv.as_tensor()).unwrap().sum_all().unwrap();
        assert_eq!(y.backward().unwrap().get(xv.as_tensor()).unwrap().dims(), &[2, 2, 6, 7]);
        grad_check(&store, "t.c.w", &x, |x| conv.forward(x).unwrap());
    }

    #[test]
    fn upconv_doubles_and_has_correct_gradients() {
        let mut store = ParamStore::new(2, DType::F64);
        let up = UpConv2d::new(&mut store, "t.u", 3, 2).unwrap();
        let x = Tensor::randn(0.0, 1.0, (1, 3, 3, 5), &Device::Cpu).unwrap();
        assert_eq!(up.forward(&x).unwrap().dims(), &[1, 2, 6, 10]);
        grad_check(&store, "t.u.w", &x, |x| up.forward(x).unwrap());
        grad_check(&store, "t.u.b", &x, |x| up.forward(x).unwrap());
    }

    #[test]
    fn batch_norm_normalizes_and_tracks_running_stats() {
        let mut store = ParamStore::new(3, DType::F64);
        let bn = BatchNorm2d::new(&mut store, "t.bn", 2).unwrap();
        let x = (Tensor::randn(0.0, 1.0, (4, 2, 3, 3), &Device::Cpu).unwrap() * 3.0).unwrap().affine(1.0, 5.0).unwrap();
        let y = bn.forward(&x, Mode::BatchStats).unwrap();
        let mean = y.mean_all().unwrap().to_scalar::<f64>().unwrap();
        assert!(mean.abs() < 1e-9);
        let rm: Vec<f64> = store.buffers()["t.bn.running_mean"].as_tensor().to_vec1().unwrap();
        assert_eq!(rm, vec![0.0, 0.0]);
        bn.forward(&x, Mode::Train).unwrap();
        let rm: Vec<f64> = store.buffers()["t.bn.running_mean"].as_tensor().to_vec1().unwrap();
        assert!(rm.iter().all(|v| *v > 0.2));
        grad_check(&store, "t.bn.gamma", &x, |x| bn.forward(x, Mode::BatchStats).unwrap());
    }
}

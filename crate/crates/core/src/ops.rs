//! Tensor helpers shared by the geometry, network and loss code.
//!
//! Everything here stays on the autodiff graph. The three custom ops fill
//! gaps in the backend: a saturation-safe sigmoid and differentiable
//! `atan2` / `asin`, needed to turn composed rotation matrices back into
//! Euler angles inside the trajectory loss.

use candle_core::{CpuStorage, DType, Layout, Shape, Tensor, D};

use crate::error::{Error, Result};

fn contiguous_slice<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("custom op expects a contiguous input"),
    }
}

fn map_unary(
    storage: &CpuStorage,
    layout: &Layout,
    f32_fn: impl Fn(f32) -> f32,
    f64_fn: impl Fn(f64) -> f64,
) -> candle_core::Result<(CpuStorage, Shape)> {
    let out = match storage {
        CpuStorage::F32(d) => {
            CpuStorage::F32(contiguous_slice(d, layout)?.iter().map(|&v| f32_fn(v)).collect())
        }
        CpuStorage::F64(d) => {
            CpuStorage::F64(contiguous_slice(d, layout)?.iter().map(|&v| f64_fn(v)).collect())
        }
        _ => candle_core::bail!("custom op supports only f32 and f64"),
    };
    Ok((out, layout.shape().clone()))
}

struct Sigmoid;

impl candle_core::CustomOp1 for Sigmoid {
    fn name(&self) -> &'static str {
        "seqvo-sigmoid"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        map_unary(
            storage,
            layout,
            |v| 1.0 / (1.0 + (-v).exp()),
            |v| 1.0 / (1.0 + (-v).exp()),
        )
    }

    fn bwd(
        &self,
        _arg: &Tensor,
        res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<Option<Tensor>> {
        let ds = (res * (res.ones_like()? - res)?)?;
        Ok(Some(grad_res.mul(&ds)?))
    }
}

struct Asin;

impl candle_core::CustomOp1 for Asin {
    fn name(&self) -> &'static str {
        "seqvo-asin"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        map_unary(
            storage,
            layout,
            |v| v.clamp(-1.0, 1.0).asin(),
            |v| v.clamp(-1.0, 1.0).asin(),
        )
    }

    fn bwd(
        &self,
        arg: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<Option<Tensor>> {
        // 1 / sqrt(1 - x^2), floored away from the poles.
        let denom = (arg.ones_like()? - arg.sqr()?)?
            .maximum(1e-12)?
            .sqrt()?;
        Ok(Some(grad_res.div(&denom)?))
    }
}

struct Atan2;

impl candle_core::CustomOp2 for Atan2 {
    fn name(&self) -> &'static str {
        "seqvo-atan2"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        if l1.shape() != l2.shape() {
            candle_core::bail!("atan2 operands differ in shape");
        }
        let out = match (s1, s2) {
            (CpuStorage::F32(y), CpuStorage::F32(x)) => CpuStorage::F32(
                contiguous_slice(y, l1)?
                    .iter()
                    .zip(contiguous_slice(x, l2)?)
                    .map(|(y, x)| y.atan2(*x))
                    .collect(),
            ),
            (CpuStorage::F64(y), CpuStorage::F64(x)) => CpuStorage::F64(
                contiguous_slice(y, l1)?
                    .iter()
                    .zip(contiguous_slice(x, l2)?)
                    .map(|(y, x)| y.atan2(*x))
                    .collect(),
            ),
            _ => candle_core::bail!("atan2 supports only matching f32/f64 operands"),
        };
        Ok((out, l1.shape().clone()))
    }

    fn bwd(
        &self,
        y: &Tensor,
        x: &Tensor,
        _res: &Tensor,
        grad_res: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let r2 = (x.sqr()? + y.sqr()?)?.maximum(1e-30)?;
        let gy = grad_res.mul(&x.div(&r2)?)?;
        let gx = grad_res.mul(&y.neg()?.div(&r2)?)?;
        Ok((Some(gy), Some(gx)))
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(Sigmoid)?)
}

pub fn asin(x: &Tensor) -> Result<Tensor> {
    Ok(x.contiguous()?.apply_op1(Asin)?)
}

/// Elementwise `atan2(y, x)`.
pub fn atan2(y: &Tensor, x: &Tensor) -> Result<Tensor> {
    Ok(y.contiguous()?.apply_op2(&x.contiguous()?, Atan2)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}

/// Zero-pads the bottom/right edge so both spatial dims are even.
///
/// Strided convolution with "same" padding produces `ceil(d / 2)` outputs
/// either way; padding first keeps height and width on the same parity,
/// which the backend's convolution backward pass relies on.
pub fn pad_even(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let mut x = x.clone();
    if h % 2 == 1 {
        x = x.pad_with_zeros(2, 0, 1)?;
    }
    if w % 2 == 1 {
        x = x.pad_with_zeros(3, 0, 1)?;
    }
    Ok(x)
}

/// Crops the top-left `h x w` window of a `(B, C, H, W)` tensor.
pub fn crop_to(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (_, _, xh, xw) = x.dims4()?;
    if xh < h || xw < w {
        return Err(Error::Shape(format!(
            "cannot crop {xh}x{xw} feature map to {h}x{w}"
        )));
    }
    Ok(x.narrow(2, 0, h)?.narrow(3, 0, w)?)
}

/// Linear interpolation matrix mapping `n_in` samples to `n_out` with
/// half-pixel alignment, shape `(n_out, n_in)`.
fn interp_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for i in 0..n_out {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        let f = src - i0 as f64;
        m[i * n_in + i0] += 1.0 - f;
        m[i * n_in + i1] += f;
    }
    m
}

/// Differentiable bilinear resize of a `(B, C, H, W)` tensor, realised as
/// two interpolation-matrix products.
pub fn resize_bilinear(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (b, c, xh, xw) = x.dims4()?;
    if (xh, xw) == (h, w) {
        return Ok(x.clone());
    }
    let dev = x.device();
    let dtype = x.dtype();
    let mw = Tensor::from_vec(interp_matrix(xw, w), (w, xw), dev)?.to_dtype(dtype)?;
    let mh = Tensor::from_vec(interp_matrix(xh, h), (h, xh), dev)?.to_dtype(dtype)?;
    let rows = x
        .reshape((b * c * xh, xw))?
        .matmul(&mw.t()?)?
        .reshape((b * c, xh, w))?;
    let out = mh
        .broadcast_left(b * c)?
        .contiguous()?
        .matmul(&rows.contiguous()?)?;
    Ok(out.reshape((b, c, h, w))?)
}

/// 2x2 area averaging; spatial dims must be even.
pub fn downsample2(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "area downsampling needs even dims, got {h}x{w}"
        )));
    }
    Ok(x.avg_pool2d(2)?)
}

/// Sliding `k x k` mean over every channel independently, no padding.
pub fn box_filter(x: &Tensor, k: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if h < k || w < k {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} image is smaller than the {k}x{k} window"
        )));
    }
    let kernel = (Tensor::ones((1, 1, k, k), x.dtype(), x.device())? / (k * k) as f64)?;
    let y = x
        .reshape((b * c, 1, h, w))?
        .contiguous()?
        .conv2d(&kernel, 0, 1, 1, 1)?;
    Ok(y.reshape((b, c, h - k + 1, w - k + 1))?)
}

/// Forward differences along width and height: `(x[.., 1:] - x[.., :-1])`.
pub fn spatial_diffs(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, _, h, w) = x.dims4()?;
    let dx = (x.narrow(3, 1, w - 1)? - x.narrow(3, 0, w - 1)?)?;
    let dy = (x.narrow(2, 1, h - 1)? - x.narrow(2, 0, h - 1)?)?;
    Ok((dx, dy))
}

/// Scalar value of a rank-0 or single-element tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.flatten_all()?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?
        .first()
        .copied()
        .ok_or_else(|| Error::Shape("expected a single-element tensor".into()))?)
}

/// Mean over all elements except the leading batch dimension.
pub fn mean_per_sample(x: &Tensor) -> Result<Tensor> {
    let b = x.dim(0)?;
    Ok(x.reshape((b, ()))?.mean(D::Minus1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn fd_check(f: impl Fn(&Tensor) -> Tensor, x0: &[f64]) {
        let var = Var::from_vec(x0.to_vec(), x0.len(), &Device::Cpu).unwrap();
        let y = f(var.as_tensor()).sum_all().unwrap();
        let grads = y.backward().unwrap();
        let g: Vec<f64> = grads.get(var.as_tensor()).unwrap().to_vec1().unwrap();
        for i in 0..x0.len() {
            let eval = |d: f64| {
                let mut x = x0.to_vec();
                x[i] += d;
                let t = Tensor::from_vec(x, x0.len(), &Device::Cpu).unwrap();
                f(&t).sum_all().unwrap().to_scalar::<f64>().unwrap()
            };
            let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn custom_op_gradients_match_finite_differences() {
        fd_check(|x| sigmoid(x).unwrap(), &[-3.0, -0.2, 0.0, 1.5]);
        fd_check(|x| asin(x).unwrap(), &[-0.9, -0.1, 0.3, 0.7]);
        fd_check(
            |x| {
                let y = x.narrow(0, 0, 3).unwrap();
                let xx = x.narrow(0, 3, 3).unwrap();
                atan2(&y, &xx).unwrap()
            },
            &[0.3, -1.2, 0.5, 1.0, -0.4, -2.0],
        );
    }

    #[test]
    fn sigmoid_saturates_without_nan_gradient() {
        let var = Var::from_vec(vec![-1000.0f32, 1000.0], 2, &Device::Cpu).unwrap();
        let y = sigmoid(var.as_tensor()).unwrap().sum_all().unwrap();
        let g: Vec<f32> = y.backward().unwrap().get(var.as_tensor()).unwrap().to_vec1().unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn resize_doubles_constant_and_preserves_mean_of_ramp() {
        let x = Tensor::from_vec((0..8).map(|v| v as f64).collect(), (1, 1, 2, 4), &Device::Cpu)
            .unwrap();
        let y = resize_bilinear(&x, 4, 8).unwrap();
        assert_eq!(y.dims(), &[1, 1, 4, 8]);
        let mx = x.mean_all().unwrap().to_scalar::<f64>().unwrap();
        let my = y.mean_all().unwrap().to_scalar::<f64>().unwrap();
        assert!((mx - my).abs() < 1e-12);
    }

    #[test]
    fn box_filter_rejects_small_images() {
        let x = Tensor::zeros((1, 1, 4, 4), DType::F64, &Device::Cpu).unwrap();
        assert!(box_filter(&x, 5).is_err());
        assert_eq!(box_filter(&x, 3).unwrap().dims(), &[1, 1, 2, 2]);
    }
}

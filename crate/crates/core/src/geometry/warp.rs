use candle_core::{DType, Device, Tensor};

use super::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::ops;

/// Slack (in pixels) allowed when deciding whether a projected coordinate is
/// inside the source image. Absorbs round-off of an exact identity warp.
const BOUNDS_EPS: f64 = 1e-3;

/// Minimum projected depth; points behind the camera are clamped here.
const MIN_PROJ_DEPTH: f64 = 1e-3;

/// Output of [`inverse_warp`].
#[derive(Debug, Clone)]
pub struct Warped {
    /// `(B, C, H, W)` synthesized target view.
    pub image: Tensor,
    /// `(B, 1, H, W)`: 1 where the sampled location lies inside the source.
    pub valid: Tensor,
    /// `(B, H, W, 2)` source pixel coordinates (x, y).
    pub coords: Tensor,
}

/// `(B, 3)` Euler angles (rx, ry, rz) to `(B, 3, 3)` rotations `Rz * Ry * Rx`.
pub fn euler_to_rotation(angles: &Tensor) -> Result<Tensor> {
    let b = angles.dim(0)?;
    let col = |i: usize| angles.narrow(1, i, 1);
    let (rx, ry, rz) = (col(0)?, col(1)?, col(2)?);
    let (sx, cx) = (rx.sin()?, rx.cos()?);
    let (sy, cy) = (ry.sin()?, ry.cos()?);
    let (sz, cz) = (rz.sin()?, rz.cos()?);
    let entries = [
        (&cz * &cy)?,
        ((&cz * &sy)? * &sx - (&sz * &cx)?)?,
        ((&cz * &sy)? * &cx + (&sz * &sx)?)?,
        (&sz * &cy)?,
        ((&sz * &sy)? * &sx + (&cz * &cx)?)?,
        ((&sz * &sy)? * &cx - (&cz * &sx)?)?,
        sy.neg()?,
        (&cy * &sx)?,
        (&cy * &cx)?,
    ];
    Ok(Tensor::cat(&entries, 1)?.reshape((b, 3, 3))?)
}

/// `(B, 6)` pose vectors to `(B, 3, 4)` matrices `[R | t]`.
pub fn pose_vec_to_mat(pose: &Tensor) -> Result<Tensor> {
    let (b, n) = pose.dims2()?;
    if n != 6 {
        return Err(Error::Shape(format!("pose vectors must have 6 entries, got {n}")));
    }
    let t = pose.narrow(1, 0, 3)?.reshape((b, 3, 1))?;
    let r = euler_to_rotation(&pose.narrow(1, 3, 3)?)?;
    Ok(Tensor::cat(&[r, t], 2)?)
}

/// `(B, 6)` pose vectors to homogeneous `(B, 4, 4)` matrices.
pub fn pose_vec_to_hom(pose: &Tensor) -> Result<Tensor> {
    let b = pose.dim(0)?;
    let m = pose_vec_to_mat(pose)?;
    let mut row = vec![0.0f64; 4 * b];
    for i in 0..b {
        row[4 * i + 3] = 1.0;
    }
    let bottom = Tensor::from_vec(row, (b, 1, 4), pose.device())?.to_dtype(pose.dtype())?;
    Ok(Tensor::cat(&[m, bottom], 1)?)
}

/// Batched product of homogeneous matrices.
pub fn compose_mats(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok(a.contiguous()?.matmul(&b.contiguous()?)?)
}

/// `(B, 3, 4)` or `(B, 4, 4)` matrices back to `(B, 6)` pose vectors using
/// the same x-y-z Euler convention. Differentiable.
pub fn mat_to_pose_vec(m: &Tensor) -> Result<Tensor> {
    let b = m.dim(0)?;
    let at = |r: usize, c: usize| -> Result<Tensor> {
        Ok(m.narrow(1, r, 1)?.narrow(2, c, 1)?.reshape((b, 1))?)
    };
    let rx = ops::atan2(&at(2, 1)?, &at(2, 2)?)?;
    let ry = ops::asin(&at(2, 0)?.neg()?)?;
    let rz = ops::atan2(&at(1, 0)?, &at(0, 0)?)?;
    Ok(Tensor::cat(&[at(0, 3)?, at(1, 3)?, at(2, 3)?, rx, ry, rz], 1)?)
}

fn mat3_tensor(m: &nalgebra::Matrix3<f64>, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect();
    Ok(Tensor::from_vec(v, (3, 3), device)?.to_dtype(dtype)?)
}

/// Homogeneous target pixel grid `(3, H*W)`: rows u, v, 1.
fn pixel_grid(h: usize, w: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut v = Vec::with_capacity(3 * h * w);
    v.extend((0..h * w).map(|i| (i % w) as f64));
    v.extend((0..h * w).map(|i| (i / w) as f64));
    v.extend(std::iter::repeat_n(1.0, h * w));
    Ok(Tensor::from_vec(v, (3, h * w), device)?.to_dtype(dtype)?)
}

/// Source pixel coordinates `(B, H, W, 2)` of every target pixel:
/// `p_s ~ K (R D(p_t) K^-1 p_t + t)`.
pub fn project_coords(depth: &Tensor, pose: &Tensor, k: &CameraIntrinsics) -> Result<Tensor> {
    let (b, c, h, w) = depth.dims4()?;
    if c != 1 {
        return Err(Error::Shape(format!("depth must have one channel, got {c}")));
    }
    if (k.width, k.height) != (w, h) {
        return Err(Error::Shape(format!(
            "intrinsics are for {}x{}, depth is {w}x{h}",
            k.width, k.height
        )));
    }
    // Projected in double precision: a zero pose then maps every pixel to
    // coordinates that round to exact integers in f32.
    let (out_dtype, dtype, dev) = (depth.dtype(), DType::F64, depth.device());
    let depth = depth.to_dtype(dtype)?;
    let kmat = mat3_tensor(&k.matrix(), dtype, dev)?;
    let kinv = mat3_tensor(&k.inverse_matrix(), dtype, dev)?;
    let rays = kinv.matmul(&pixel_grid(h, w, dtype, dev)?)?; // (3, HW)
    let cam = rays
        .unsqueeze(0)?
        .broadcast_mul(&depth.reshape((b, 1, h * w))?)?; // (B, 3, HW)
    let m = pose_vec_to_mat(&pose.to_dtype(dtype)?)?;
    let rot = m.narrow(2, 0, 3)?.contiguous()?;
    let trans = m.narrow(2, 3, 1)?;
    let proj_rot = kmat.broadcast_left(b)?.contiguous()?.matmul(&rot)?;
    let proj_t = kmat.broadcast_left(b)?.contiguous()?.matmul(&trans.contiguous()?)?;
    let pix = proj_rot.matmul(&cam.contiguous()?)?.broadcast_add(&proj_t)?; // (B, 3, HW)
    let z = pix.narrow(1, 2, 1)?.clamp(MIN_PROJ_DEPTH, f64::INFINITY)?;
    let xy = pix.narrow(1, 0, 2)?.broadcast_div(&z)?; // (B, 2, HW)
    Ok(xy.transpose(1, 2)?.reshape((b, h, w, 2))?.to_dtype(out_dtype)?)
}

/// Bilinear sampling of `img (B, C, H, W)` at `coords (B, Ho, Wo, 2)` (x, y in
/// pixels). Out-of-image neighbours contribute zero. Differentiable with
/// respect to both the image and the coordinates.
pub fn bilinear_sample(img: &Tensor, coords: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = img.dims4()?;
    let (cb, ho, wo, two) = coords.dims4()?;
    if cb != b || two != 2 {
        return Err(Error::Shape(format!(
            "coords {:?} incompatible with image batch {b}",
            coords.dims()
        )));
    }
    let n = ho * wo;
    let (dtype, dev) = (img.dtype(), img.device());
    let flat = coords.reshape((b, n, 2))?;
    let x = flat.narrow(2, 0, 1)?.reshape((b, n))?;
    let y = flat.narrow(2, 1, 1)?.reshape((b, n))?;
    let xs: Vec<f64> = x.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    let ys: Vec<f64> = y.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sampling coordinates must be finite".into()));
    }
    let x0: Vec<f64> = xs.iter().map(|v| v.floor()).collect();
    let y0: Vec<f64> = ys.iter().map(|v| v.floor()).collect();
    let x0_t = Tensor::from_vec(x0.clone(), (b, n), dev)?.to_dtype(dtype)?;
    let y0_t = Tensor::from_vec(y0.clone(), (b, n), dev)?.to_dtype(dtype)?;
    let fx = (&x - &x0_t)?;
    let fy = (&y - &y0_t)?;
    let gx = (fx.ones_like()? - &fx)?;
    let gy = (fy.ones_like()? - &fy)?;

    let src = img.reshape((b, c, h * w))?.contiguous()?;
    let mut out: Option<Tensor> = None;
    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let mut idx = Vec::with_capacity(b * n);
        let mut inside = Vec::with_capacity(b * n);
        for i in 0..b * n {
            let cx = x0[i] + dx;
            let cy = y0[i] + dy;
            let ok = cx >= 0.0 && cx <= (w - 1) as f64 && cy >= 0.0 && cy <= (h - 1) as f64;
            inside.push(if ok { 1.0 } else { 0.0 });
            let xi = cx.clamp(0.0, (w - 1) as f64) as u32;
            let yi = cy.clamp(0.0, (h - 1) as f64) as u32;
            idx.push(yi * w as u32 + xi);
        }
        let idx = Tensor::from_vec(idx, (b, 1, n), dev)?
            .broadcast_as((b, c, n))?
            .contiguous()?;
        let inside = Tensor::from_vec(inside, (b, n), dev)?.to_dtype(dtype)?;
        let wx = if dx == 0.0 { &gx } else { &fx };
        let wy = if dy == 0.0 { &gy } else { &fy };
        let weight = (wx * wy)?.mul(&inside)?.reshape((b, 1, n))?;
        let term = src.gather(&idx, 2)?.broadcast_mul(&weight)?;
        out = Some(match out {
            None => term,
            Some(acc) => (acc + term)?,
        });
    }
    Ok(out.expect("four corners").reshape((b, c, ho, wo))?)
}

/// Synthesizes the target view by sampling `source` at the projection of
/// every target pixel, given target depth and the target-to-source pose.
pub fn inverse_warp(
    source: &Tensor,
    target_depth: &Tensor,
    pose_t2s: &Tensor,
    k: &CameraIntrinsics,
) -> Result<Warped> {
    let (b, _, h, w) = source.dims4()?;
    let (db, _, dh, dw) = target_depth.dims4()?;
    if (db, dh, dw) != (b, h, w) {
        return Err(Error::Shape(format!(
            "source {:?} and depth {:?} disagree",
            source.dims(),
            target_depth.dims()
        )));
    }
    if pose_t2s.dims() != [b, 6] {
        return Err(Error::Shape(format!(
            "expected ({b}, 6) poses, got {:?}",
            pose_t2s.dims()
        )));
    }
    let min_depth = ops::scalar(&target_depth.min_all()?)?;
    if !(min_depth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth must be strictly positive, minimum is {min_depth}"
        )));
    }
    let coords = project_coords(target_depth, pose_t2s, k)?;
    let image = bilinear_sample(source, &coords)?;

    let xy: Vec<f64> = coords.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    let valid: Vec<f64> = xy
        .chunks_exact(2)
        .map(|p| {
            let ok = p[0] >= -BOUNDS_EPS
                && p[0] <= (w - 1) as f64 + BOUNDS_EPS
                && p[1] >= -BOUNDS_EPS
                && p[1] <= (h - 1) as f64 + BOUNDS_EPS;
            if ok {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let valid = Tensor::from_vec(valid, (b, 1, h, w), source.device())?.to_dtype(source.dtype())?;
    Ok(Warped {
        image,
        valid,
        coords,
    })
}

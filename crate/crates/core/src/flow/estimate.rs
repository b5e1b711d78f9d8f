//! Coarse-to-fine dense Lucas-Kanade.
//!
//! Each pyramid level refines the upsampled coarser flow with a few
//! Gauss-Newton iterations of the windowed brightness-constancy system
//! `G d = -sum(grad(a) * (b(x + flow) - a(x)))`, where `G` is the windowed
//! structure tensor of the first frame. Pixels whose structure tensor is
//! near-singular keep their previous estimate.

use super::FlowField;
use crate::error::{Error, Result};
use crate::image::ImageBuf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    /// Half-width of the square integration window.
    pub window_radius: usize,
    pub iterations: usize,
    /// Smallest structure-tensor eigenvalue (per window pixel) accepted.
    pub min_eigenvalue: f32,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window_radius: 4,
            iterations: 6,
            min_eigenvalue: 1e-6,
        }
    }
}

/// Dense flow with default parameters such that `a(x, y) ~ b(x + u, y + v)`.
pub fn compute_flow(a: &ImageBuf, b: &ImageBuf) -> Result<FlowField> {
    compute_flow_with(a, b, &FlowParams::default())
}

pub fn compute_flow_with(a: &ImageBuf, b: &ImageBuf, params: &FlowParams) -> Result<FlowField> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::InvalidArgument(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::InvalidArgument("flow needs single-channel frames".into()));
    }
    if params.levels == 0 {
        return Err(Error::InvalidArgument("flow pyramid needs at least one level".into()));
    }
    let pyr_a = pyramid(a, params.levels);
    let pyr_b = pyramid(b, params.levels);

    let mut flow: Option<ImageBuf> = None;
    for (la, lb) in pyr_a.iter().zip(&pyr_b).rev() {
        let init = match flow {
            None => ImageBuf::zeros(la.width(), la.height(), 2),
            Some(coarse) => upsample_flow(&coarse, la.width(), la.height()),
        };
        flow = Some(refine_level(la, lb, init, params));
    }
    let planes = flow.expect("at least one level");
    Ok(FlowField::from_planes(&planes))
}

fn pyramid(img: &ImageBuf, levels: usize) -> Vec<ImageBuf> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        if prev.width() < 8 || prev.height() < 8 {
            break;
        }
        out.push(blur_decimate(prev));
    }
    out
}

/// Binomial [1 4 6 4 1] blur followed by 2x decimation, clamped borders.
fn blur_decimate(img: &ImageBuf) -> ImageBuf {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (img.width(), img.height());
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horiz = ImageBuf::from_fn(w, h, 1, |_, x, y| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * img.get(0, clamp(x as isize + i as isize - 2, w), y))
            .sum()
    });
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    ImageBuf::from_fn(nw, nh, 1, |_, x, y| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * horiz.get(0, 2 * x, clamp(2 * y as isize + i as isize - 2, h)))
            .sum()
    })
}

fn upsample_flow(coarse: &ImageBuf, width: usize, height: usize) -> ImageBuf {
    let sx = width as f32 / coarse.width() as f32;
    let sy = height as f32 / coarse.height() as f32;
    ImageBuf::from_fn(width, height, 2, |c, x, y| {
        let cx = (x as f32 + 0.5) / sx - 0.5;
        let cy = (y as f32 + 0.5) / sy - 0.5;
        coarse.sample_clamped(c, cx, cy) * if c == 0 { sx } else { sy }
    })
}

/// Central-difference gradients with clamped borders.
fn gradients(img: &ImageBuf) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = (img.get(0, xr, y) - img.get(0, xl, y)) / (xr - xl).max(1) as f32;
            gy[y * w + x] = (img.get(0, x, yd) - img.get(0, x, yu)) / (yd - yu).max(1) as f32;
        }
    }
    (gx, gy)
}

/// Windowed sums of `v` via a summed-area table, window clipped at borders.
fn box_sum(v: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0f64;
        for x in 0..w {
            row += v[y * w + x] as f64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                + sat[y0 * (w + 1) + x0];
            out[y * w + x] = s as f32;
        }
    }
    out
}

fn refine_level(a: &ImageBuf, b: &ImageBuf, mut flow: ImageBuf, p: &FlowParams) -> ImageBuf {
    let (w, h) = (a.width(), a.height());
    let (gx, gy) = gradients(a);
    let prod = |f: &dyn Fn(usize) -> f32| (0..w * h).map(f).collect::<Vec<f32>>();
    let r = p.window_radius;
    let sxx = box_sum(&prod(&|i| gx[i] * gx[i]), w, h, r);
    let sxy = box_sum(&prod(&|i| gx[i] * gy[i]), w, h, r);
    let syy = box_sum(&prod(&|i| gy[i] * gy[i]), w, h, r);
    let area = ((2 * r + 1) * (2 * r + 1)) as f32;

    for _ in 0..p.iterations {
        let mut it = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let u = flow.get(0, x, y);
                let v = flow.get(1, x, y);
                it[y * w + x] = b.sample_clamped(0, x as f32 + u, y as f32 + v) - a.get(0, x, y);
            }
        }
        let bx = box_sum(&prod(&|i| gx[i] * it[i]), w, h, r);
        let by = box_sum(&prod(&|i| gy[i] * it[i]), w, h, r);
        let mut max_step = 0.0f32;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (a11, a12, a22) = (sxx[i], sxy[i], syy[i]);
                let tr = a11 + a22;
                let det = a11 * a22 - a12 * a12;
                let disc = ((a11 - a22) * (a11 - a22) + 4.0 * a12 * a12).sqrt();
                let min_eig = 0.5 * (tr - disc);
                if min_eig < p.min_eigenvalue * area || det <= 0.0 {
                    continue;
                }
                let du = -(a22 * bx[i] - a12 * by[i]) / det;
                let dv = -(a11 * by[i] - a12 * bx[i]) / det;
                if !(du.is_finite() && dv.is_finite()) {
                    continue;
                }
                flow.set(0, x, y, flow.get(0, x, y) + du);
                flow.set(1, x, y, flow.get(1, x, y) + dv);
                max_step = max_step.max(du.abs()).max(dv.abs());
            }
        }
        if max_step < 1e-4 {
            break;
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_frames() {
        let a = ImageBuf::zeros(8, 8, 1);
        let b = ImageBuf::zeros(8, 9, 1);
        assert!(matches!(compute_flow(&a, &b), Err(Error::InvalidArgument(_))));
        assert!(compute_flow(&ImageBuf::zeros(8, 8, 3), &ImageBuf::zeros(8, 8, 3)).is_err());
    }

    #[test]
    fn box_sum_matches_naive() {
        let (w, h, r) = (7, 5, 2);
        let v: Vec<f32> = (0..w * h).map(|i| (i * 7 % 11) as f32).collect();
        let fast = box_sum(&v, w, h, r);
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        s += v[yy * w + xx];
                    }
                }
                assert!((fast[y * w + x] - s).abs() < 1e-4);
            }
        }
    }
}

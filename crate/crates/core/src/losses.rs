//! Training objectives and their weighted combination.
//!
//! Every function here takes and returns candle tensors so the results can
//! be differentiated; [`total_loss`] works on plain `f64` term values and
//! produces the logged [`LossReport`].

use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose_mats, mat_to_pose_vec, pose_vec_to_hom};
use crate::ops;

/// SSIM window edge length.
pub const SSIM_WINDOW: usize = 10;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Weight between photometric and SSIM terms in the appearance loss.
pub const DEFAULT_ALPHA: f64 = 0.85;
/// Frame intervals checked by the trajectory loss.
pub const TRAJECTORY_INTERVALS: [usize; 3] = [2, 4, 8];
const MASK_LOG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub appearance: f64,
    pub smoothness: f64,
    pub trajectory: f64,
    pub gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            appearance: 0.75,
            smoothness: 0.1,
            trajectory: 0.14,
            gan: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("appearance", self.appearance),
            ("smoothness", self.smoothness),
            ("trajectory", self.trajectory),
            ("gan", self.gan),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight {name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanVariant {
    None,
    Wgan,
    PatchGan,
}

impl FromStr for GanVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(GanVariant::None),
            "wgan" => Ok(GanVariant::Wgan),
            "patchgan" => Ok(GanVariant::PatchGan),
            other => Err(Error::Config(format!(
                "unknown GAN variant {other:?} (expected none, wgan or patchgan)"
            ))),
        }
    }
}

impl fmt::Display for GanVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanVariant::None => "none",
            GanVariant::Wgan => "wgan",
            GanVariant::PatchGan => "patchgan",
        })
    }
}

fn same_dims(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Masked mean absolute error. `warped`/`target` are `(B, C, H, W)`,
/// `mask`/`valid` are `(B, 1, H, W)`. The channel mean is taken first; the
/// masked sum over pixels is then divided by the number of valid pixels, so
/// pixels that leave the source view neither add error nor dilute it.
/// Returns zero when no pixel is valid.
pub fn photometric_loss(
    warped: &Tensor,
    target: &Tensor,
    mask: &Tensor,
    valid: &Tensor,
) -> Result<Tensor> {
    same_dims(warped, target, "warped vs target")?;
    same_dims(mask, valid, "mask vs valid")?;
    let (b, _, h, w) = warped.dims4()?;
    if mask.dims() != [b, 1, h, w] {
        return Err(Error::Shape(format!(
            "mask {:?} does not match image {:?}",
            mask.dims(),
            warped.dims()
        )));
    }
    let diff = (warped - target)?.abs()?.mean_keepdim(1)?;
    let count = ops::scalar(&valid.sum_all()?)?.max(1.0);
    Ok(((diff * mask)?.mul(valid)?.sum_all()? / count)?)
}

/// Mean over 10x10 windows of `(1 - SSIM) / 2`, clamped to `[0, 1]`.
pub fn ssim_loss(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    same_dims(x, y, "ssim inputs")?;
    let k = SSIM_WINDOW;
    let mu_x = ops::box_filter(x, k)?;
    let mu_y = ops::box_filter(y, k)?;
    let mu_xx = mu_x.sqr()?;
    let mu_yy = mu_y.sqr()?;
    let mu_xy = (&mu_x * &mu_y)?;
    let sigma_x = (ops::box_filter(&x.sqr()?, k)? - &mu_xx)?;
    let sigma_y = (ops::box_filter(&y.sqr()?, k)? - &mu_yy)?;
    let sigma_xy = (ops::box_filter(&(x * y)?, k)? - &mu_xy)?;
    let num = ((mu_xy * 2.0)? + SSIM_C1)?.mul(&((sigma_xy * 2.0)? + SSIM_C2)?)?;
    let den = ((mu_xx + mu_yy)? + SSIM_C1)?.mul(&((sigma_x + sigma_y)? + SSIM_C2)?)?;
    let ssim = (num / den)?;
    let d = ssim.affine(-0.5, 0.5)?.clamp(0.0, 1.0)?;
    Ok(d.mean_all()?)
}

/// Cross-entropy of each mask against an all-ones target, summed over
/// scales.
pub fn mask_regularization(masks: &[Tensor]) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for m in masks {
        let term = mask_bce(m)?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("no masks given".into()))
}

pub(crate) fn mask_bce(m: &Tensor) -> Result<Tensor> {
    Ok(m.clamp(MASK_LOG_FLOOR, 1.0)?.log()?.neg()?.mean_all()?)
}

/// `reg + (1 - alpha) * pho + ssim / n`.
pub fn appearance_loss(
    pho: &Tensor,
    ssim: &Tensor,
    reg: &Tensor,
    alpha: f64,
    n: usize,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("minibatch size must be at least 1".into()));
    }
    Ok(((reg + (pho * (1.0 - alpha))?)? + (ssim / n as f64)?)?)
}

/// Edge-aware first-order smoothness of a `(B, 1, H, W)` disparity against a
/// `(B, C, H, W)` image. Forward differences are summed and divided by the
/// full pixel count, so the missing last row/column counts as zero.
pub fn smoothness_loss(disp: &Tensor, img: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = disp.dims4()?;
    let (ib, _, ih, iw) = img.dims4()?;
    if c != 1 || (b, h, w) != (ib, ih, iw) {
        return Err(Error::Shape(format!(
            "disparity {:?} does not match image {:?}",
            disp.dims(),
            img.dims()
        )));
    }
    let (ddx, ddy) = ops::spatial_diffs(disp)?;
    let (idx, idy) = ops::spatial_diffs(img)?;
    let wx = idx.abs()?.mean_keepdim(1)?.neg()?.exp()?;
    let wy = idy.abs()?.mean_keepdim(1)?.neg()?.exp()?;
    let sx = (ddx.abs()? * wx)?.sum_all()?;
    let sy = (ddy.abs()? * wy)?.sum_all()?;
    Ok(((sx + sy)? / (b * h * w) as f64)?)
}

/// [`smoothness_loss`] on every pyramid level against the image reduced to
/// that level, averaged over levels.
pub fn multiscale_smoothness(disps: &[Tensor], img: &Tensor) -> Result<Tensor> {
    if disps.is_empty() {
        return Err(Error::InvalidArgument("no disparity scales given".into()));
    }
    let mut total: Option<Tensor> = None;
    for d in disps {
        let (_, _, h, w) = d.dims4()?;
        let term = smoothness_loss(d, &downsample_to(img, h, w)?)?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    Ok((total.expect("nonempty") / disps.len() as f64)?)
}

/// Reduces `x` to `h x w`: repeated 2x2 area averaging while the size halves
/// exactly, bilinear resampling otherwise.
pub fn downsample_to(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let mut cur = x.clone();
    loop {
        let (_, _, ch, cw) = cur.dims4()?;
        if (ch, cw) == (h, w) {
            return Ok(cur);
        }
        if ch % 2 == 0 && cw % 2 == 0 && ch >= 2 * h && cw >= 2 * w {
            cur = ops::downsample2(&cur)?;
        } else {
            return ops::resize_bilinear(&cur, h, w);
        }
    }
}

/// `(anchor, interval)` pairs checked by the trajectory loss over a sequence
/// with `num_steps` single-step poses.
pub fn trajectory_pairs(num_steps: usize, intervals: &[usize]) -> Result<Vec<(usize, usize)>> {
    let longest = intervals.iter().copied().max().unwrap_or(0);
    if intervals.is_empty() || intervals.contains(&0) {
        return Err(Error::InvalidArgument("intervals must be positive".into()));
    }
    if num_steps < longest {
        return Err(Error::InvalidArgument(format!(
            "{} frames are too few for interval {longest}",
            num_steps + 1
        )));
    }
    let mut pairs = Vec::new();
    for &t in intervals {
        for i in 0..=num_steps - t {
            pairs.push((i, t));
        }
    }
    Ok(pairs)
}

/// Composes single-step poses over each `(anchor, interval)` pair:
/// `P[i+t-1] * ... * P[i]`, returned as `(pairs, 6)` pose vectors.
pub fn compose_intervals(steps: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    let (s, six) = steps.dims2()?;
    if six != 6 {
        return Err(Error::Shape(format!("steps must be (S, 6), got {:?}", steps.dims())));
    }
    let hom = pose_vec_to_hom(steps)?;
    let mut intervals: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    intervals.sort_unstable();
    intervals.dedup();
    let mut per_interval = Vec::with_capacity(intervals.len());
    let mut offsets = Vec::with_capacity(intervals.len());
    let mut offset = 0;
    for &t in &intervals {
        if t == 0 || t > s {
            return Err(Error::InvalidArgument(format!(
                "interval {t} does not fit {s} steps"
            )));
        }
        let n = s - t + 1;
        let mut acc = hom.narrow(0, 0, n)?;
        for k in 1..t {
            acc = compose_mats(&hom.narrow(0, k, n)?, &acc)?;
        }
        per_interval.push(acc);
        offsets.push(offset);
        offset += n;
    }
    let all = Tensor::cat(&per_interval, 0)?;
    let idx: Vec<u32> = pairs
        .iter()
        .map(|&(i, t)| {
            let k = intervals.binary_search(&t).expect("interval listed");
            if i + t > s {
                return Err(Error::InvalidArgument(format!(
                    "anchor {i} with interval {t} exceeds {s} steps"
                )));
            }
            Ok((offsets[k] + i) as u32)
        })
        .collect::<Result<_>>()?;
    let idx = Tensor::from_vec(idx, pairs.len(), steps.device())?;
    mat_to_pose_vec(&all.index_select(&idx, 0)?)
}

/// Mean over `(anchor, interval)` pairs of the L1 distance between the
/// directly predicted pose (`direct`, `(pairs, 6)`) and the composition of
/// the single-step poses (`steps`, `(S, 6)`).
pub fn trajectory_loss(steps: &Tensor, direct: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no trajectory pairs".into()));
    }
    if direct.dims() != [pairs.len(), 6] {
        return Err(Error::Shape(format!(
            "expected ({}, 6) direct poses, got {:?}",
            pairs.len(),
            direct.dims()
        )));
    }
    let composed = compose_intervals(steps, pairs)?;
    Ok((direct - composed)?.abs()?.sum(1)?.mean_all()?)
}

/// Generator and discriminator objectives for one set of scores.
pub fn gan_losses(variant: GanVariant, real: &Tensor, fake: &Tensor) -> Result<(Tensor, Tensor)> {
    match variant {
        GanVariant::None => Err(Error::Config(
            "GAN losses requested with variant none".into(),
        )),
        GanVariant::Wgan => {
            let mf = fake.mean_all()?;
            let mr = real.mean_all()?;
            Ok((mf.neg()?, (mf - mr)?))
        }
        GanVariant::PatchGan => {
            let gen = (fake - 1.0)?.sqr()?.mean_all()?;
            let d_real = (real - 1.0)?.sqr()?.mean_all()?;
            let d_fake = fake.sqr()?.mean_all()?;
            Ok((gen, ((d_real + d_fake)? * 0.5)?))
        }
    }
}

/// Generator-side objective only; needs no real scores.
pub fn gan_generator_loss(variant: GanVariant, fake: &Tensor) -> Result<Tensor> {
    match variant {
        GanVariant::None => Err(Error::Config(
            "GAN loss requested with variant none".into(),
        )),
        GanVariant::Wgan => Ok(fake.mean_all()?.neg()?),
        GanVariant::PatchGan => Ok((fake - 1.0)?.sqr()?.mean_all()?),
    }
}

/// Coefficients of the appearance term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppearanceParams {
    pub alpha: f64,
    /// Factor on the SSIM term, `1 / N` with `N` the minibatch size.
    pub ssim_scale: f64,
}

impl AppearanceParams {
    pub fn new(alpha: f64, minibatch: usize, scale_ssim_by_batch: bool) -> Self {
        let ssim_scale = if scale_ssim_by_batch {
            1.0 / minibatch.max(1) as f64
        } else {
            1.0
        };
        Self { alpha, ssim_scale }
    }
}

/// Raw per-step term values before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub pho: f64,
    pub ssim: f64,
    pub reg: f64,
    pub smo: f64,
    pub tc: f64,
    pub gan: f64,
    pub gan_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pho: f64,
    pub ssim: f64,
    pub reg: f64,
    pub ap: f64,
    pub smo: f64,
    pub tc: f64,
    pub gan: f64,
    pub gan_d: f64,
    pub total: f64,
    pub appearance: AppearanceParams,
    pub weights: LossWeights,
}

pub const LOSS_CSV_HEADER: &str = "step,pho,ssim,reg,smo,tc,gan_g,gan_d,total";

impl LossReport {
    /// Weighted sum recomputed from the stored components.
    pub fn recomputed_total(&self) -> f64 {
        let ap = self.reg + (1.0 - self.appearance.alpha) * self.pho + self.appearance.ssim_scale * self.ssim;
        self.weights.appearance * ap
            + self.weights.smoothness * self.smo
            + self.weights.trajectory * self.tc
            + self.weights.gan * self.gan
    }

    /// First term (in logging order) that is not finite.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("pho", self.pho),
            ("ssim", self.ssim),
            ("reg", self.reg),
            ("smo", self.smo),
            ("tc", self.tc),
            ("gan_g", self.gan),
            ("gan_d", self.gan_d),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }

    pub fn csv_row(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{},{},{}",
            self.pho, self.ssim, self.reg, self.smo, self.tc, self.gan, self.gan_d, self.total
        )
    }
}

pub fn total_loss(terms: &LossTerms, appearance: AppearanceParams, w: &LossWeights) -> LossReport {
    let ap = terms.reg + (1.0 - appearance.alpha) * terms.pho + appearance.ssim_scale * terms.ssim;
    let total = w.appearance * ap + w.smoothness * terms.smo + w.trajectory * terms.tc + w.gan * terms.gan;
    LossReport {
        pho: terms.pho,
        ssim: terms.ssim,
        reg: terms.reg,
        ap,
        smo: terms.smo,
        tc: terms.tc,
        gan: terms.gan,
        gan_d: terms.gan_d,
        total,
        appearance,
        weights: *w,
    }
}

/// Tensor counterpart of the weighted sum in [`total_loss`], for backprop.
pub fn weighted_total(
    ap: &Tensor,
    smo: &Tensor,
    tc: Option<&Tensor>,
    gan: Option<&Tensor>,
    w: &LossWeights,
) -> Result<Tensor> {
    let mut t = ((ap * w.appearance)? + (smo * w.smoothness)?)?;
    if let Some(tc) = tc {
        t = (t + (tc * w.trajectory)?)?;
    }
    if let Some(g) = gan {
        t = (t + (g * w.gan)?)?;
    }
    Ok(t)
}

pub(crate) fn to_f64(t: &Tensor) -> Result<f64> {
    ops::scalar(&t.to_dtype(DType::F64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn t(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_slice(v, shape, &Device::Cpu).unwrap()
    }

    fn s(v: f64) -> Tensor {
        Tensor::new(v, &Device::Cpu).unwrap()
    }

    fn val(x: &Tensor) -> f64 {
        to_f64(x).unwrap()
    }

    #[test]
    fn photometric_hand_cases() {
        let target = t(&[0.0; 4], &[1, 1, 2, 2]);
        let warped = t(&[1.0; 4], &[1, 1, 2, 2]);
        let mask = t(&[1.0, 0.0, 1.0, 0.0], &[1, 1, 2, 2]);
        let ones = t(&[1.0; 4], &[1, 1, 2, 2]);
        assert!((val(&photometric_loss(&warped, &target, &mask, &ones).unwrap()) - 0.5).abs() < 1e-12);
        let zeros = t(&[0.0; 4], &[1, 1, 2, 2]);
        assert_eq!(val(&photometric_loss(&warped, &target, &zeros, &ones).unwrap()), 0.0);
        assert_eq!(val(&photometric_loss(&warped, &warped, &ones, &ones).unwrap()), 0.0);
        let half = t(&[1.0, 1.0, 0.0, 0.0], &[1, 1, 2, 2]);
        assert!((val(&photometric_loss(&warped, &target, &ones, &half).unwrap()) - 1.0).abs() < 1e-12);
        assert_eq!(val(&photometric_loss(&warped, &target, &ones, &zeros).unwrap()), 0.0);
        assert!(photometric_loss(&warped, &t(&[0.0; 2], &[1, 1, 1, 2]), &ones, &ones).is_err());
    }

    #[test]
    fn ssim_identical_is_zero_and_small_image_rejected() {
        let x = Tensor::rand(0f64, 1.0, (1, 3, 12, 12), &Device::Cpu).unwrap();
        assert!(val(&ssim_loss(&x, &x).unwrap()).abs() < 1e-9);
        let small = Tensor::rand(0f64, 1.0, (1, 1, 9, 12), &Device::Cpu).unwrap();
        assert!(matches!(ssim_loss(&small, &small), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mask_regularization_closed_form() {
        let half = t(&[0.5; 16], &[1, 1, 4, 4]);
        assert!((val(&mask_regularization(&[half.clone()]).unwrap()) - 2f64.ln()).abs() < 1e-9);
        let two = mask_regularization(&[half.clone(), half]).unwrap();
        assert!((val(&two) - 2.0 * 2f64.ln()).abs() < 1e-9);
        let ones = t(&[1.0; 4], &[1, 1, 2, 2]);
        assert!(val(&mask_regularization(&[ones]).unwrap()).abs() < 1e-12);
        let zero = t(&[0.0; 4], &[1, 1, 2, 2]);
        assert!(val(&mask_regularization(&[zero]).unwrap()).is_finite());
    }

    #[test]
    fn appearance_substitution() {
        let ap = appearance_loss(&s(2.0), &s(3.0), &s(1.0), 0.85, 4).unwrap();
        assert!((val(&ap) - (1.0 + 0.15 * 2.0 + 0.75)).abs() < 1e-12);
        assert!(appearance_loss(&s(0.0), &s(0.0), &s(0.0), 1.5, 4).is_err());
        assert!(appearance_loss(&s(0.0), &s(0.0), &s(0.0), 0.5, 0).is_err());
    }

    #[test]
    fn smoothness_one_dimensional_hand_case() {
        let d = t(&[0.0, 1.0, 0.0], &[1, 1, 1, 3]);
        let img = t(&[0.3; 3], &[1, 1, 1, 3]);
        assert!((val(&smoothness_loss(&d, &img).unwrap()) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_is_damped_at_edges() {
        let ramp: Vec<f64> = (0..16).map(|i| (i % 4) as f64).collect();
        let d = t(&ramp, &[1, 1, 4, 4]);
        let flat = t(&[0.5; 16], &[1, 1, 4, 4]);
        let edges: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let edges = t(&edges, &[1, 1, 4, 4]);
        let a = val(&smoothness_loss(&d, &flat).unwrap());
        let b = val(&smoothness_loss(&d, &edges).unwrap());
        assert!(b < a);
        let c = t(&[2.0; 16], &[1, 1, 4, 4]);
        assert_eq!(val(&smoothness_loss(&c, &edges).unwrap()), 0.0);
    }

    #[test]
    fn trajectory_pure_translation() {
        let steps = t(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[2, 6]);
        let pairs = [(0, 2)];
        let exact = t(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[1, 6]);
        assert!(val(&trajectory_loss(&steps, &exact, &pairs).unwrap()).abs() < 1e-12);
        let off = t(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[1, 6]);
        assert!((val(&trajectory_loss(&steps, &off, &pairs).unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_pairs_need_enough_frames() {
        assert!(trajectory_pairs(7, &TRAJECTORY_INTERVALS).is_err());
        let p = trajectory_pairs(8, &TRAJECTORY_INTERVALS).unwrap();
        assert_eq!(p.len(), 7 + 5 + 1);
        assert!(p.iter().all(|&(i, t)| i + t <= 8));
    }

    #[test]
    fn gan_hand_cases() {
        let real = t(&[0.8; 4], &[1, 1, 2, 2]);
        let fake = t(&[0.3; 4], &[1, 1, 2, 2]);
        let (_, d) = gan_losses(GanVariant::PatchGan, &real, &fake).unwrap();
        assert!((val(&d) - 0.065).abs() < 1e-12);
        let ones = t(&[1.0; 4], &[1, 1, 2, 2]);
        let (g, _) = gan_losses(GanVariant::PatchGan, &real, &ones).unwrap();
        assert_eq!(val(&g), 0.0);
        let (_, d) = gan_losses(GanVariant::Wgan, &real, &real).unwrap();
        assert_eq!(val(&d), 0.0);
        assert!(matches!(gan_losses(GanVariant::None, &real, &fake), Err(Error::Config(_))));
        assert!(matches!("lsgan".parse::<GanVariant>(), Err(Error::Config(_))));
        assert_eq!("PatchGAN".parse::<GanVariant>().unwrap(), GanVariant::PatchGan);
    }

    #[test]
    fn total_substitution() {
        let w = LossWeights::default();
        let ap = AppearanceParams { alpha: 0.85, ssim_scale: 0.25 };
        let mut terms = LossTerms::default();
        terms.reg = 2.0;
        let r = total_loss(&terms, ap, &w);
        assert!((r.total - 1.5).abs() < 1e-12);
        assert!((r.total - r.recomputed_total()).abs() < 1e-12);
        assert_eq!(total_loss(&LossTerms::default(), ap, &w).total, 0.0);
        assert!(LossWeights { gan: -1.0, ..w }.validate().is_err());
    }
}

//! The generator networks, the optional discriminator, and the mapping from
//! a batch of windows to loss terms.

use candle_core::{DType, Device, Tensor, Var};

use crate::data::SequenceSample;
use crate::error::{Error, Result};
use crate::flow::flow_to_encoder_input;
use crate::geometry::{inverse_warp, CameraIntrinsics};
use crate::image::ImageBuf;
use crate::losses::{
    downsample_to, gan_generator_loss, mask_bce, multiscale_smoothness, photometric_loss, ssim_loss,
    trajectory_loss, trajectory_pairs, AppearanceParams, GanVariant, SSIM_WINDOW,
};
use crate::nets::{
    ArchConfig, Critic, DispNet, FlowEncoder, Lstm, LstmState, Mode, ParamStore, PatchDiscriminator, PoseExpNet,
    CODE_DIM,
};

pub const GENERATOR_GROUPS: [&str; 4] = ["encoder", "lstm", "disp", "pose"];
pub const DISCRIMINATOR_GROUPS: [&str; 2] = ["critic", "patch"];

pub enum Discriminator {
    Critic(Critic),
    Patch(PatchDiscriminator),
}

impl Discriminator {
    /// Scores of `img` (conditioned on `condition` for the patch variant).
    pub fn scores(&self, img: &Tensor, condition: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Discriminator::Critic(c) => c.forward(img, mode),
            Discriminator::Patch(p) => p.forward(img, condition, mode),
        }
    }
}

/// Every network of one training configuration, sharing a single store.
pub struct Model {
    pub arch: ArchConfig,
    pub store: ParamStore,
    pub encoder: FlowEncoder,
    pub lstm: Option<Lstm>,
    pub disp: DispNet,
    pub pose: PoseExpNet,
    pub disc: Option<Discriminator>,
}

impl Model {
    pub fn new(arch: &ArchConfig, use_lstm: bool, gan: GanVariant, seed: u64, dtype: DType) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new(seed, dtype);
        let encoder = FlowEncoder::new(&mut store, arch)?;
        let lstm = if use_lstm {
            Some(Lstm::new(&mut store, "lstm", CODE_DIM, CODE_DIM)?)
        } else {
            None
        };
        let disp = DispNet::new(&mut store, arch)?;
        let pose = PoseExpNet::new(&mut store, arch)?;
        let disc = match gan {
            GanVariant::None => None,
            GanVariant::Wgan => Some(Discriminator::Critic(Critic::new(&mut store, arch)?)),
            GanVariant::PatchGan => Some(Discriminator::Patch(PatchDiscriminator::new(&mut store, arch)?)),
        };
        Ok(Self {
            arch: arch.clone(),
            store,
            encoder,
            lstm,
            disp,
            pose,
            disc,
        })
    }

    pub fn generator_vars(&self) -> Vec<(String, Var)> {
        self.store.group_vars(&GENERATOR_GROUPS)
    }

    pub fn discriminator_vars(&self) -> Vec<(String, Var)> {
        self.store.group_vars(&DISCRIMINATOR_GROUPS)
    }

    /// Per-target codes `(N, CODE_DIM)`: target `t` of a window gets the
    /// sequence output after the flow from frame `t - 1` to `t`.
    pub fn codes(&self, batch: &Batch, mode: Mode) -> Result<Tensor> {
        let (b, pairs) = (batch.windows.len(), batch.window_len - 1);
        let (h, w) = (self.arch.height, self.arch.width);
        let flat = batch.flows.reshape((b * pairs, 2, h, w))?;
        let codes = self.encoder.forward(&flat, mode)?.reshape((b, pairs, CODE_DIM))?;
        let seq = match &self.lstm {
            Some(lstm) => {
                let xs = codes.transpose(0, 1)?.contiguous()?;
                let state = LstmState::zeros(b, CODE_DIM, xs.dtype(), xs.device())?;
                let (_, out) = lstm.sequence(&xs, state)?;
                out.transpose(0, 1)?.contiguous()?
            }
            None => codes,
        };
        Ok(seq.narrow(1, 0, pairs - 1)?.reshape((b * (pairs - 1), CODE_DIM))?)
    }

    pub fn predict(&self, batch: &Batch, mode: Mode) -> Result<Predictions> {
        let codes = self.codes(batch, mode)?;
        let disps = self.disp.forward(&batch.targets, &codes, mode)?;
        let out = self.pose.forward(&batch.targets, &[batch.prev.clone(), batch.next.clone()])?;
        Ok(Predictions {
            disps,
            poses: out.poses,
            masks: out.masks,
        })
    }

    /// Trajectory consistency over every window. Single steps come from the
    /// tuples' target-to-next poses, so the chain covers frames `1..L`.
    pub fn trajectory_term(&self, batch: &Batch, preds: &Predictions, intervals: &[usize]) -> Result<Tensor> {
        let n = batch.window_len - 2;
        let pairs = trajectory_pairs(n, intervals)?;
        let mut targets = Vec::new();
        let mut mids = Vec::new();
        let mut fars = Vec::new();
        for win in &batch.windows {
            let idx = |f: usize| -> Result<Tensor> { Ok(win.frames.narrow(0, f, 1)?) };
            for &(i, t) in &pairs {
                targets.push(idx(1 + i)?);
                mids.push(idx(1 + i + t / 2)?);
                fars.push(idx(1 + i + t)?);
            }
        }
        let direct = self
            .pose
            .forward(&Tensor::cat(&targets, 0)?, &[Tensor::cat(&mids, 0)?, Tensor::cat(&fars, 0)?])?
            .poses
            .narrow(1, 1, 1)?
            .squeeze(1)?;
        let mut total: Option<Tensor> = None;
        for b in 0..batch.windows.len() {
            let steps = preds.poses.narrow(0, b * n, n)?.narrow(1, 1, 1)?.squeeze(1)?;
            let d = direct.narrow(0, b * pairs.len(), pairs.len())?;
            let term = trajectory_loss(&steps, &d, &pairs)?;
            total = Some(match total {
                Some(t) => (t + term)?,
                None => term,
            });
        }
        Ok((total.expect("at least one window") / batch.windows.len() as f64)?)
    }
}

/// Window frames and intrinsics at network resolution.
pub struct WindowTensors {
    /// `(L, 3, H, W)`.
    pub frames: Tensor,
    pub intrinsics: CameraIntrinsics,
}

/// Stacked inputs for one step.
pub struct Batch {
    pub window_len: usize,
    pub windows: Vec<WindowTensors>,
    /// `(N, 3, H, W)` targets, window-major, `N = B * (L - 2)`.
    pub targets: Tensor,
    /// Frames before and after each target.
    pub prev: Tensor,
    pub next: Tensor,
    /// `(B, L - 1, 2, H, W)` normalized flows.
    pub flows: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[SequenceSample], arch: &ArchConfig, dtype: DType) -> Result<Self> {
        let dev = Device::Cpu;
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let len = first.len();
        if len < 3 {
            return Err(Error::InvalidArgument(format!("windows need at least 3 frames, got {len}")));
        }
        let (h, w) = (arch.height, arch.width);
        let mut windows = Vec::with_capacity(samples.len());
        let mut flows = Vec::with_capacity(samples.len());
        for s in samples {
            if s.len() != len {
                return Err(Error::InvalidArgument("windows in a batch differ in length".into()));
            }
            let resized: Vec<ImageBuf>;
            let (frames, k) = if (s.intrinsics.width, s.intrinsics.height) == (w, h) {
                (&s.frames, s.intrinsics)
            } else {
                resized = s.frames.iter().map(|f| f.resize(w, h)).collect();
                (&resized, s.intrinsics.rescaled(w, h))
            };
            let frames: Vec<Tensor> = frames
                .iter()
                .map(|f| f.to_tensor(dtype, &dev))
                .collect::<Result<_>>()?;
            windows.push(WindowTensors {
                frames: Tensor::cat(&frames, 0)?,
                intrinsics: k,
            });
            let f: Vec<Tensor> = s
                .flows
                .iter()
                .map(|f| flow_to_encoder_input(f, w, h).to_tensor(dtype, &dev))
                .collect::<Result<_>>()?;
            flows.push(Tensor::cat(&f, 0)?.unsqueeze(0)?);
        }
        let n = len - 2;
        let pick = |off: usize| -> Result<Tensor> {
            let parts: Vec<Tensor> = windows
                .iter()
                .map(|win| win.frames.narrow(0, off, n))
                .collect::<candle_core::Result<_>>()?;
            Ok(Tensor::cat(&parts, 0)?)
        };
        Ok(Self {
            window_len: len,
            targets: pick(1)?,
            prev: pick(0)?,
            next: pick(2)?,
            flows: Tensor::cat(&flows, 0)?,
            windows,
        })
    }

    pub fn targets_per_window(&self) -> usize {
        self.window_len - 2
    }

    /// Number of training tuples.
    pub fn num_targets(&self) -> usize {
        self.windows.len() * self.targets_per_window()
    }
}

/// Network outputs for a batch.
pub struct Predictions {
    /// Disparities `[full, 1/2, 1/4, 1/8]`, each `(N, 1, h, w)`.
    pub disps: Vec<Tensor>,
    /// `(N, 2, 6)` target-to-source poses for (previous, next).
    pub poses: Tensor,
    /// Masks `[full, .., 1/8]`, each `(N, 2, h, w)`.
    pub masks: Vec<Tensor>,
}

/// Appearance-side terms, each averaged over scales and windows.
pub struct AppearanceTerms {
    pub pho: Tensor,
    pub ssim: Tensor,
    pub reg: Tensor,
    pub ap: Tensor,
    /// Full-resolution syntheses of every target from each source, with
    /// out-of-view pixels filled from the target: `(2N, 3, H, W)`.
    pub fake: Tensor,
}

fn add(acc: Option<Tensor>, t: Tensor) -> Result<Option<Tensor>> {
    Ok(Some(match acc {
        Some(a) => (a + t)?,
        None => t,
    }))
}

/// Photometric, SSIM and mask terms at every scale. SSIM is skipped (counts
/// as zero) at scales smaller than its window.
pub fn appearance_terms(batch: &Batch, preds: &Predictions, params: AppearanceParams) -> Result<AppearanceTerms> {
    let n = batch.targets_per_window();
    let scales = preds.disps.len();
    let dtype = batch.targets.dtype();
    let zero = Tensor::zeros((), dtype, batch.targets.device())?;
    let (mut pho, mut ssim, mut reg, mut ap) = (None, None, None, None);
    let mut fakes = vec![Vec::new(), Vec::new()];
    for (b, win) in batch.windows.iter().enumerate() {
        let rows = |t: &Tensor| t.narrow(0, b * n, n);
        let target = rows(&batch.targets)?;
        let sources = [rows(&batch.prev)?, rows(&batch.next)?];
        for s in 0..scales {
            let disp = rows(&preds.disps[s])?;
            let (_, _, h, w) = disp.dims4()?;
            let k = win.intrinsics.scaled(s as u32)?;
            let depth = disp.recip()?;
            let target_s = downsample_to(&target, h, w)?;
            let mask_s = rows(&preds.masks[s])?;
            let (mut pho_s, mut ssim_s) = (None, None);
            for (j, src) in sources.iter().enumerate() {
                let src_s = downsample_to(src, h, w)?;
                let pose = rows(&preds.poses)?.narrow(1, j, 1)?.squeeze(1)?;
                let warped = inverse_warp(&src_s, &depth, &pose, &k)?;
                let m = mask_s.narrow(1, j, 1)?;
                pho_s = add(pho_s, photometric_loss(&warped.image, &target_s, &m, &warped.valid)?)?;
                if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
                    ssim_s = add(ssim_s, ssim_loss(&warped.image, &target_s)?)?;
                }
                if s == 0 {
                    let inv = warped.valid.affine(-1.0, 1.0)?;
                    let fill = (warped.image.broadcast_mul(&warped.valid)? + target_s.broadcast_mul(&inv)?)?;
                    fakes[j].push(fill);
                }
            }
            let k_src = sources.len() as f64;
            let pho_s = (pho_s.expect("two sources") / k_src)?;
            let ssim_s = match ssim_s {
                Some(v) => (v / k_src)?,
                None => zero.clone(),
            };
            let reg_s = mask_bce(&mask_s)?;
            let ap_s = ((&reg_s + (&pho_s * (1.0 - params.alpha))?)? + (&ssim_s * params.ssim_scale)?)?;
            pho = add(pho, pho_s)?;
            ssim = add(ssim, ssim_s)?;
            reg = add(reg, reg_s)?;
            ap = add(ap, ap_s)?;
        }
    }
    let denom = (scales * batch.windows.len()) as f64;
    let fin = |t: Option<Tensor>| -> Result<Tensor> { Ok((t.expect("nonempty batch") / denom)?) };
    let fake: Vec<Tensor> = fakes.into_iter().map(|v| Tensor::cat(&v, 0)).collect::<candle_core::Result<_>>()?;
    Ok(AppearanceTerms {
        pho: fin(pho)?,
        ssim: fin(ssim)?,
        reg: fin(reg)?,
        ap: fin(ap)?,
        fake: Tensor::cat(&fake, 0)?,
    })
}

pub fn smoothness_term(batch: &Batch, preds: &Predictions) -> Result<Tensor> {
    multiscale_smoothness(&preds.disps, &batch.targets)
}

/// Generator-side adversarial term with the discriminator's batch norm in
/// batch-statistics mode (running averages untouched).
pub fn gan_term(disc: &Discriminator, variant: GanVariant, fake: &Tensor, real: &Tensor) -> Result<Tensor> {
    let scores = disc.scores(fake, real, Mode::BatchStats)?;
    gan_generator_loss(variant, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_scene, SynthConfig};

    fn window(seed: u64, len: usize) -> SequenceSample {
        let cfg = SynthConfig {
            seed,
            frames: len,
            ..Default::default()
        };
        synth_scene(&cfg).unwrap().window(0, len).unwrap()
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        crate::losses::to_f64(&(a - b).unwrap().abs().unwrap().max_all().unwrap()).unwrap()
    }

    #[test]
    fn prediction_shapes() {
        let arch = ArchConfig::with_resolution(32, 96);
        let model = Model::new(&arch, true, GanVariant::None, 1, DType::F32).unwrap();
        let batch = Batch::from_samples(&[window(0, 5), window(1, 5)], &arch, DType::F32).unwrap();
        assert_eq!(batch.num_targets(), 6);
        let p = model.predict(&batch, Mode::Eval).unwrap();
        assert_eq!(p.poses.dims(), &[6, 2, 6]);
        for (s, (d, m)) in p.disps.iter().zip(&p.masks).enumerate() {
            assert_eq!(d.dims(), &[6, 1, 32 >> s, 96 >> s]);
            assert_eq!(m.dims(), &[6, 2, 32 >> s, 96 >> s]);
        }
        let lo = crate::losses::to_f64(&p.disps[0].min_all().unwrap()).unwrap();
        let hi = crate::losses::to_f64(&p.disps[0].max_all().unwrap()).unwrap();
        assert!(lo >= arch.disp_beta && hi <= arch.disp_alpha + arch.disp_beta);
    }

    #[test]
    fn windows_do_not_leak_into_each_other() {
        let arch = ArchConfig::with_resolution(32, 96);
        let model = Model::new(&arch, true, GanVariant::None, 2, DType::F32).unwrap();
        let a = Batch::from_samples(&[window(0, 5), window(1, 5)], &arch, DType::F32).unwrap();
        let b = Batch::from_samples(&[window(0, 5), window(7, 5)], &arch, DType::F32).unwrap();
        let (pa, pb) = (model.predict(&a, Mode::Eval).unwrap(), model.predict(&b, Mode::Eval).unwrap());
        let first = |t: &Tensor| t.narrow(0, 0, 3).unwrap();
        assert!(max_diff(&first(&pa.disps[0]), &first(&pb.disps[0])) < 1e-6);
        assert!(max_diff(&first(&pa.poses), &first(&pb.poses)) < 1e-6);
        assert!(max_diff(&pa.disps[0].narrow(0, 3, 3).unwrap(), &pb.disps[0].narrow(0, 3, 3).unwrap()) > 0.0);
    }

    #[test]
    fn codes_only_see_past_flows() {
        let arch = ArchConfig::with_resolution(32, 96);
        let model = Model::new(&arch, true, GanVariant::None, 3, DType::F32).unwrap();
        let mut batch = Batch::from_samples(&[window(0, 5)], &arch, DType::F32).unwrap();
        let before = model.codes(&batch, Mode::Eval).unwrap();
        // Scramble the flow into the last frame, which follows every target.
        let last = batch.flows.narrow(1, 3, 1).unwrap();
        let noise = Tensor::randn(0f32, 1.0, last.dims(), last.device()).unwrap();
        batch.flows = Tensor::cat(&[batch.flows.narrow(1, 0, 3).unwrap(), noise], 1).unwrap();
        let after = model.codes(&batch, Mode::Eval).unwrap();
        assert!(max_diff(&before, &after) < 1e-7);
    }
}

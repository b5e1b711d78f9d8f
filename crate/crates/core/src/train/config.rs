//! Training configuration read from flat key-value text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{KvConfig, SynthConfig, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::losses::{GanVariant, LossWeights, DEFAULT_ALPHA, TRAJECTORY_INTERVALS};
use crate::nets::ArchConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Kitti {
        root: PathBuf,
        /// Camera index in `calib.txt` (2 is the left color camera).
        camera: usize,
        /// Directory of cached flow files; flows missing there are computed
        /// and written back.
        flow_cache: Option<PathBuf>,
    },
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: DataSource,
    pub arch: ArchConfig,
    pub gan: GanVariant,
    pub use_lstm: bool,
    pub use_trajectory_loss: bool,
    pub weights: LossWeights,
    pub alpha: f64,
    /// Divide the SSIM term by the minibatch size.
    pub scale_ssim_by_batch: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// SGD learning rate of the WGAN critic.
    pub critic_lr: f64,
    /// Windows per step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Optional hard cap on the number of generator steps.
    pub max_steps: Option<u64>,
    pub window_len: usize,
    pub stride: usize,
    /// WGAN weight-clipping bound.
    pub clip: f64,
    /// Discriminator updates per generator update.
    pub critic_steps: usize,
    /// Steps over which the trajectory weight ramps up linearly.
    pub tc_warmup: u64,
    pub intervals: Vec<usize>,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SynthConfig::default()),
            arch: ArchConfig::default(),
            gan: GanVariant::None,
            use_lstm: true,
            use_trajectory_loss: true,
            weights: LossWeights::default(),
            alpha: DEFAULT_ALPHA,
            scale_ssim_by_batch: true,
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            critic_lr: 5e-5,
            batch_size: 1,
            epochs: 1,
            max_steps: None,
            window_len: DEFAULT_WINDOW,
            stride: 1,
            clip: 0.01,
            critic_steps: 1,
            tc_warmup: 1000,
            intervals: TRAJECTORY_INTERVALS.to_vec(),
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
            checkpoint_every: 1000,
        }
    }
}

fn resolve(base: &Path, p: String) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl TrainConfig {
    /// Reads a config; relative paths are taken relative to `base_dir`.
    /// Values are not cross-checked; call [`Self::validate`] once any
    /// command-line overrides are applied.
    pub fn from_kv(mut kv: KvConfig, base_dir: &Path) -> Result<Self> {
        let d = Self::default();
        let dataset = kv.take_str("dataset").unwrap_or_else(|| "synthetic".into());
        let synth_kv = kv.take_prefixed("synth");
        let data = match dataset.as_str() {
            "kitti" => {
                let root = kv
                    .take_str("data_root")
                    .ok_or_else(|| Error::Config("dataset = kitti needs data_root".into()))?;
                DataSource::Kitti {
                    root: resolve(base_dir, root),
                    camera: kv.take_or("camera", 2)?,
                    flow_cache: kv.take_str("flow_cache").map(|p| resolve(base_dir, p)),
                }
            }
            "synthetic" => DataSource::Synthetic(SynthConfig::from_kv(synth_kv.clone())?),
            other => return Err(Error::Config(format!("unknown dataset {other:?} (expected kitti or synthetic)"))),
        };
        if dataset == "kitti" {
            synth_kv.finish()?;
        }
        let (def_h, def_w) = match &data {
            DataSource::Synthetic(s) => (s.height, s.width),
            DataSource::Kitti { .. } => (d.arch.height, d.arch.width),
        };
        let height = kv.take_or("height", def_h)?;
        let width = kv.take_or("width", def_w)?;
        let gan = match kv.take_str("gan") {
            Some(s) => s.parse()?,
            None => d.gan,
        };
        let weights = LossWeights {
            appearance: kv.take_or("w_appearance", d.weights.appearance)?,
            smoothness: kv.take_or("w_smoothness", d.weights.smoothness)?,
            trajectory: kv.take_or("w_trajectory", d.weights.trajectory)?,
            gan: kv.take_or("w_gan", d.weights.gan)?,
        };
        let cfg = Self {
            data,
            arch: ArchConfig::with_resolution(height, width),
            gan,
            use_lstm: kv.take_bool("use_lstm")?.unwrap_or(d.use_lstm),
            use_trajectory_loss: kv.take_bool("use_trajectory_loss")?.unwrap_or(d.use_trajectory_loss),
            weights,
            alpha: kv.take_or("alpha", d.alpha)?,
            scale_ssim_by_batch: kv.take_bool("scale_ssim_by_batch")?.unwrap_or(d.scale_ssim_by_batch),
            lr: kv.take_or("lr", d.lr)?,
            beta1: kv.take_or("beta1", d.beta1)?,
            beta2: kv.take_or("beta2", d.beta2)?,
            critic_lr: kv.take_or("critic_lr", d.critic_lr)?,
            batch_size: kv.take_or("batch_size", d.batch_size)?,
            epochs: kv.take_or("epochs", d.epochs)?,
            max_steps: kv.take("max_steps")?,
            window_len: kv.take_or("window", d.window_len)?,
            stride: kv.take_or("stride", d.stride)?,
            clip: kv.take_or("clip", d.clip)?,
            critic_steps: kv.take_or("critic_steps", d.critic_steps)?,
            tc_warmup: kv.take_or("tc_warmup", d.tc_warmup)?,
            intervals: kv.take_list("intervals")?.unwrap_or(d.intervals),
            seed: kv.take_or("seed", d.seed)?,
            checkpoint_dir: kv
                .take_str("checkpoint_dir")
                .map(|p| resolve(base_dir, p))
                .unwrap_or_else(|| base_dir.join(&d.checkpoint_dir)),
            checkpoint_every: kv.take_or("checkpoint_every", d.checkpoint_every)?,
        };
        kv.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(KvConfig::load(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        for (name, v) in [("lr", self.lr), ("critic_lr", self.critic_lr), ("clip", self.clip)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 || self.stride == 0 || self.critic_steps == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "batch_size, stride, critic_steps and checkpoint_every must be positive".into(),
            ));
        }
        if self.window_len < 3 {
            return Err(Error::Config(format!("window must hold at least 3 frames, got {}", self.window_len)));
        }
        if self.arch.num_sources != 2 {
            return Err(Error::Config("training tuples use exactly 2 source frames".into()));
        }
        if self.use_trajectory_loss {
            let longest = self.intervals.iter().copied().max().unwrap_or(0);
            if self.intervals.is_empty() || self.intervals.contains(&0) {
                return Err(Error::Config("trajectory intervals must be positive".into()));
            }
            // The single-step chain spans the window minus its first frame.
            if self.window_len < longest + 2 {
                return Err(Error::Config(format!(
                    "a {}-frame window is too short for trajectory interval {longest}",
                    self.window_len
                )));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.frames < self.window_len {
                return Err(Error::Config(format!(
                    "synthetic scene has {} frames, window needs {}",
                    s.frames, self.window_len
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config_with_synth_section() {
        let text = "dataset = synthetic\nsynth.frames = 20\nsynth.width = 96\nsynth.height = 32\ngan = patchgan\nuse_lstm = false\nwindow = 10\nintervals = 2 4 8\nmax_steps = 5\ncheckpoint_dir = out\n";
        let cfg = TrainConfig::from_kv(KvConfig::parse(text, "t").unwrap(), Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.gan, GanVariant::PatchGan);
        assert!(!cfg.use_lstm);
        assert_eq!((cfg.arch.height, cfg.arch.width), (32, 96));
        assert_eq!(cfg.max_steps, Some(5));
        assert_eq!(cfg.checkpoint_dir, PathBuf::from("/tmp/x/out"));
        let back: TrainConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let parse = |t: &str| {
            TrainConfig::from_kv(KvConfig::parse(t, "t").unwrap(), Path::new(".")).and_then(|c| c.validate())
        };
        assert!(parse("gan = lsgan\n").is_err());
        assert!(parse("lr = 0\n").is_err());
        assert!(parse("window = 9\n").is_err());
        assert!(parse("window = 9\nuse_trajectory_loss = no\n").is_ok());
        assert!(parse("bogus = 1\n").is_err());
        assert!(parse("dataset = kitti\n").is_err());
    }
}

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DataSource, TrainConfig};
use super::model::{appearance_terms, gan_term, smoothness_term, Batch, Discriminator, Model};
use super::optim::{Adam, AdamParams, Sgd};
use crate::data::{scan_dataset, synth_scene, DatasetIndex, LoadOptions, SequenceSample, SplitSpec};
use crate::error::{Error, Result};
use crate::flow::{CachedFlow, FlowParams, FlowProvider, OnTheFlyFlow};
use crate::losses::{
    gan_losses, to_f64, total_loss, weighted_total, AppearanceParams, GanVariant, LossReport, LossTerms,
    LOSS_CSV_HEADER,
};
use crate::nets::{load_checkpoint, save_checkpoint, Block, Checkpoint, Critic, Mode};

enum DiscOptimizer {
    Adam(Adam),
    Sgd(Sgd),
}

/// Images handed from a generator step to the discriminator step.
pub struct GanBatch {
    pub real: Tensor,
    /// Detached syntheses.
    pub fake: Tensor,
}

pub struct StepOutput {
    pub report: LossReport,
    pub gan_batch: Option<GanBatch>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    gen_opt: Adam,
    disc_opt: Option<DiscOptimizer>,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(&cfg.arch, cfg.use_lstm, cfg.gan, cfg.seed, DType::F32)?;
        let gen_opt = Adam::new(AdamParams {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            ..Default::default()
        });
        let disc_opt = match cfg.gan {
            GanVariant::None => None,
            GanVariant::Wgan => Some(DiscOptimizer::Sgd(Sgd::new(cfg.critic_lr))),
            GanVariant::PatchGan => Some(DiscOptimizer::Adam(Adam::new(AdamParams {
                lr: cfg.lr,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                ..Default::default()
            }))),
        };
        if cfg.gan == GanVariant::Wgan {
            Critic::clip_weights(&model.store, cfg.clip)?;
        }
        Ok(Self {
            cfg,
            model,
            gen_opt,
            disc_opt,
            step: 0,
        })
    }

    /// Completed training steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Trajectory weight at step `step` (1-based) after linear warm-up.
    pub fn trajectory_weight(&self, step: u64) -> f64 {
        let w = self.cfg.weights.trajectory;
        if self.cfg.tc_warmup == 0 {
            w
        } else {
            w * (step as f64 / self.cfg.tc_warmup as f64).min(1.0)
        }
    }

    pub fn batch(&self, samples: &[SequenceSample]) -> Result<Batch> {
        Batch::from_samples(samples, &self.cfg.arch, self.model.store.dtype())
    }

    /// Forward pass and loss terms without any update.
    pub fn evaluate(&self, batch: &Batch, mode: Mode) -> Result<(LossReport, Tensor, Option<GanBatch>)> {
        let cfg = &self.cfg;
        let step = self.step + 1;
        let preds = self.model.predict(batch, mode)?;
        let appearance = AppearanceParams::new(cfg.alpha, batch.num_targets(), cfg.scale_ssim_by_batch);
        let ap = appearance_terms(batch, &preds, appearance)?;
        let smo = smoothness_term(batch, &preds)?;
        let tc = if cfg.use_trajectory_loss {
            Some(self.model.trajectory_term(batch, &preds, &cfg.intervals)?)
        } else {
            None
        };
        let real = Tensor::cat(&[&batch.targets, &batch.targets], 0)?;
        let (gan, gan_batch) = match &self.model.disc {
            Some(disc) => {
                let g = gan_term(disc, cfg.gan, &ap.fake, &real)?;
                let gb = GanBatch {
                    real: real.clone(),
                    fake: ap.fake.detach(),
                };
                (Some(g), Some(gb))
            }
            None => (None, None),
        };
        let mut weights = cfg.weights;
        weights.trajectory = if tc.is_some() { self.trajectory_weight(step) } else { 0.0 };
        if gan.is_none() {
            weights.gan = 0.0;
        }
        let total = weighted_total(&ap.ap, &smo, tc.as_ref(), gan.as_ref(), &weights)?;
        let opt = |t: &Option<Tensor>| -> Result<f64> { t.as_ref().map(to_f64).transpose().map(|v| v.unwrap_or(0.0)) };
        let terms = LossTerms {
            pho: to_f64(&ap.pho)?,
            ssim: to_f64(&ap.ssim)?,
            reg: to_f64(&ap.reg)?,
            smo: to_f64(&smo)?,
            tc: opt(&tc)?,
            gan: opt(&gan)?,
            gan_d: 0.0,
        };
        let report = total_loss(&terms, appearance, &weights);
        Ok((report, total, gan_batch))
    }

    /// One forward pass and one Adam update of the generator networks.
    pub fn generator_step(&mut self, batch: &Batch) -> Result<StepOutput> {
        let (report, total, gan_batch) = self.evaluate(batch, Mode::Train)?;
        if let Some(term) = report.first_non_finite() {
            return Err(Error::NonFinite {
                term: term.into(),
                step: self.step + 1,
            });
        }
        let grads = total.backward()?;
        self.gen_opt.step(&self.model.generator_vars(), &grads)?;
        Ok(StepOutput { report, gan_batch })
    }

    /// One discriminator update on detached syntheses; returns its loss.
    pub fn discriminator_step(&mut self, gan: &GanBatch) -> Result<f64> {
        let variant = self.cfg.gan;
        let (disc, opt) = match (&self.model.disc, &mut self.disc_opt) {
            (Some(d), Some(o)) => (d, o),
            _ => return Err(Error::Config("discriminator step requested with gan = none".into())),
        };
        let fake = gan.fake.detach();
        let real_scores = disc.scores(&gan.real, &gan.real, Mode::Train)?;
        let fake_scores = disc.scores(&fake, &gan.real, Mode::Train)?;
        let (_, loss) = gan_losses(variant, &real_scores, &fake_scores)?;
        let value = to_f64(&loss)?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                term: "gan_d".into(),
                step: self.step + 1,
            });
        }
        let grads = loss.backward()?;
        let vars = self.model.discriminator_vars();
        match opt {
            DiscOptimizer::Adam(a) => a.step(&vars, &grads)?,
            DiscOptimizer::Sgd(s) => s.step(&vars, &grads)?,
        }
        if matches!(disc, Discriminator::Critic(_)) {
            Critic::clip_weights(&self.model.store, self.cfg.clip)?;
        }
        Ok(value)
    }

    /// Generator step followed by the configured number of discriminator
    /// steps. Advances the step counter.
    pub fn train_step(&mut self, samples: &[SequenceSample]) -> Result<LossReport> {
        let batch = self.batch(samples)?;
        let StepOutput { mut report, gan_batch } = self.generator_step(&batch)?;
        if let Some(gb) = gan_batch {
            let mut d = 0.0;
            for _ in 0..self.cfg.critic_steps {
                d = self.discriminator_step(&gb)?;
            }
            report.gan_d = d;
        }
        self.step += 1;
        Ok(report)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(self.cfg.to_json());
        ck.blocks = self.model.store.export_blocks()?;
        ck.blocks.insert("meta/step".into(), Block::scalar(self.step as f64));
        ck.blocks.extend(self.gen_opt.export("opt.gen")?);
        match &self.disc_opt {
            Some(DiscOptimizer::Adam(a)) => ck.blocks.extend(a.export("opt.disc")?),
            Some(DiscOptimizer::Sgd(s)) => ck.blocks.extend(s.export("opt.disc")),
            None => {}
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, &self.checkpoint()?)
    }

    /// Restores parameters, buffers, optimizer state and the step counter.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        let model_blocks: BTreeMap<String, Block> = ck
            .blocks
            .iter()
            .filter(|(k, _)| k.starts_with("param/") || k.starts_with("buffer/"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        self.model.store.import_blocks(&model_blocks)?;
        self.gen_opt.import("opt.gen", &ck.blocks, &self.model.generator_vars())?;
        let disc_vars = self.model.discriminator_vars();
        match &mut self.disc_opt {
            Some(DiscOptimizer::Adam(a)) => a.import("opt.disc", &ck.blocks, &disc_vars)?,
            Some(DiscOptimizer::Sgd(s)) => s.import("opt.disc", &ck.blocks)?,
            None => {}
        }
        self.step = ck
            .blocks
            .get("meta/step")
            .and_then(Block::as_scalar)
            .ok_or_else(|| Error::Config("checkpoint has no step counter".into()))? as u64;
        Ok(())
    }

    pub fn resume(cfg: TrainConfig, path: &Path) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let mut t = Self::new(cfg)?;
        t.restore(&ck)?;
        Ok(t)
    }
}

/// Windows available for training.
pub enum SampleSource {
    Synthetic { scene: SequenceSample, starts: Vec<usize>, len: usize },
    Kitti { index: DatasetIndex, opts: LoadOptions, flow: Box<dyn FlowProvider> },
}

impl SampleSource {
    pub fn from_config(cfg: &TrainConfig) -> Result<Self> {
        match &cfg.data {
            DataSource::Synthetic(s) => {
                let scene = synth_scene(s)?;
                let starts = (0..=s.frames - cfg.window_len).step_by(cfg.stride).collect();
                Ok(SampleSource::Synthetic {
                    scene,
                    starts,
                    len: cfg.window_len,
                })
            }
            DataSource::Kitti {
                root,
                camera,
                flow_cache,
            } => {
                let split = SplitSpec::kitti_train().with_window(cfg.window_len, cfg.stride);
                let index = scan_dataset(root, &split)?;
                let flow: Box<dyn FlowProvider> = match flow_cache {
                    Some(dir) => Box::new(CachedFlow::new(dir, FlowParams::default())),
                    None => Box::new(OnTheFlyFlow::default()),
                };
                Ok(SampleSource::Kitti {
                    index,
                    opts: LoadOptions {
                        width: cfg.arch.width,
                        height: cfg.arch.height,
                        camera: *camera,
                    },
                    flow,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SampleSource::Synthetic { starts, .. } => starts.len(),
            SampleSource::Kitti { index, .. } => index.windows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Result<SequenceSample> {
        match self {
            SampleSource::Synthetic { scene, starts, len } => scene.window(starts[i], *len),
            SampleSource::Kitti { index, opts, flow } => index.load_sample(i, opts, flow.as_ref()),
        }
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:08}.vock"))
}

/// Runs the configured schedule and returns the last checkpoint written.
/// With `resume`, training continues from that checkpoint's step.
pub fn run_training(cfg: &TrainConfig, resume: Option<&Path>) -> Result<PathBuf> {
    let mut trainer = match resume {
        Some(p) => Trainer::resume(cfg.clone(), p)?,
        None => Trainer::new(cfg.clone())?,
    };
    let source = SampleSource::from_config(cfg)?;
    if source.is_empty() && cfg.epochs > 0 {
        return Err(Error::Ingestion(format!(
            "no {}-frame windows available for training",
            cfg.window_len
        )));
    }
    let dir = &cfg.checkpoint_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("losses.csv");
    let fresh_log = !csv_path.exists();
    let mut csv = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&csv_path)
        .map_err(|e| Error::io(&csv_path, e))?;
    if fresh_log {
        writeln!(csv, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
    }

    let mut last = checkpoint_path(dir, trainer.step());
    if resume.is_none() {
        trainer.save(&last)?;
    }
    let per_epoch = source.len().div_ceil(cfg.batch_size) as u64;
    let limit = cfg.max_steps.unwrap_or(u64::MAX);
    let mut scheduled = 0u64;
    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        for chunk in order.chunks(cfg.batch_size) {
            scheduled += 1;
            if scheduled <= trainer.step() {
                continue;
            }
            if trainer.step() >= limit {
                break 'epochs;
            }
            let samples: Vec<SequenceSample> = chunk.iter().map(|&i| source.get(i)).collect::<Result<_>>()?;
            let report = trainer.train_step(&samples)?;
            let step = trainer.step();
            writeln!(csv, "{}", report.csv_row(step)).map_err(|e| Error::io(&csv_path, e))?;
            log::info!(
                "epoch {epoch} step {step}/{} total {:.5} pho {:.5} ssim {:.5} smo {:.5} tc {:.5}",
                per_epoch * cfg.epochs as u64,
                report.total,
                report.pho,
                report.ssim,
                report.smo,
                report.tc
            );
            if step % cfg.checkpoint_every == 0 {
                last = checkpoint_path(dir, step);
                trainer.save(&last)?;
            }
        }
    }
    let final_path = checkpoint_path(dir, trainer.step());
    if final_path != last || !final_path.exists() {
        trainer.save(&final_path)?;
    }
    Ok(final_path)
}

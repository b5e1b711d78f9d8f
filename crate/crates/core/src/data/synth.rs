//! Procedurally textured surface seen by a moving pinhole camera.
//!
//! The surface is `Z = depth + slope * X + ridge * |X|` in the frame of
//! camera 0: a plane when `ridge` is zero, otherwise two half-planes meeting
//! in a vertical fold at `X = 0`. Zero slope and ridge make it parallel to
//! the image plane. Every frame applies the same
//! camera motion (expressed in the current camera frame). Frames, depth
//! maps, flows and motions are all computed analytically.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kv::KvConfig;
use super::SequenceSample;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::{rotation_from_euler, CameraIntrinsics, DepthMap, RigidTransform};
use crate::image::ImageBuf;

const WAVES_PER_CHANNEL: usize = 4;
const WAVE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth: f64,
    /// Plane tilt: depth grows by `slope` per unit of `X`.
    pub slope: f64,
    /// Fold strength; positive values bring the fold toward the camera.
    pub ridge: f64,
    pub frames: usize,
    /// Per-frame camera translation in the current camera frame.
    pub translation: [f64; 3],
    /// Per-frame camera rotation as Euler angles (rx, ry, rz).
    pub rotation: [f64; 3],
    pub seed: u64,
    /// Highest texture frequency, in cycles across the image width of
    /// the first frame.
    pub max_cycles: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 32,
            fx: 48.0,
            fy: 48.0,
            cx: 47.5,
            cy: 15.5,
            depth: 10.0,
            slope: 0.0,
            ridge: 0.0,
            frames: 20,
            translation: [0.4, 0.0, 0.0],
            rotation: [0.0; 3],
            seed: 0,
            max_cycles: 4.0,
        }
    }
}

fn triple(v: Vec<f64>, key: &str, source: &str) -> Result<[f64; 3]> {
    v.try_into()
        .map_err(|v: Vec<f64>| Error::parse(source, key, None, format!("expected 3 values, got {}", v.len())))
}

impl SynthConfig {
    pub fn from_kv(mut kv: KvConfig) -> Result<Self> {
        let d = Self::default();
        let source = kv.source().to_string();
        let cfg = Self {
            width: kv.take_or("width", d.width)?,
            height: kv.take_or("height", d.height)?,
            fx: kv.take_or("fx", d.fx)?,
            fy: kv.take_or("fy", d.fy)?,
            cx: kv.take_or("cx", d.cx)?,
            cy: kv.take_or("cy", d.cy)?,
            depth: kv.take_or("depth", d.depth)?,
            slope: kv.take_or("slope", d.slope)?,
            ridge: kv.take_or("ridge", d.ridge)?,
            frames: kv.take_or("frames", d.frames)?,
            translation: match kv.take_list("translation")? {
                Some(v) => triple(v, "translation", &source)?,
                None => d.translation,
            },
            rotation: match kv.take_list("rotation")? {
                Some(v) => triple(v, "rotation", &source)?,
                None => d.rotation,
            },
            seed: kv.take_or("seed", d.seed)?,
            max_cycles: kv.take_or("max_cycles", d.max_cycles)?,
        };
        kv.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(KvConfig::load(path)?)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    /// Camera motion applied between consecutive frames.
    pub fn motion(&self) -> RigidTransform {
        let [rx, ry, rz] = self.rotation;
        let [tx, ty, tz] = self.translation;
        RigidTransform::from_parts(rotation_from_euler(rx, ry, rz), Vector3::new(tx, ty, tz))
    }
}

struct Wave {
    dir: Vector2<f64>,
    freq: f64,
    phase: f64,
}

struct Texture {
    channels: Vec<Vec<Wave>>,
}

impl Texture {
    fn new(seed: u64, min_freq: f64, max_freq: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = (0..3)
            .map(|_| {
                (0..WAVES_PER_CHANNEL)
                    .map(|_| {
                        let a = rng.random_range(0.0..PI);
                        Wave {
                            dir: Vector2::new(a.cos(), a.sin()),
                            freq: rng.random_range(min_freq..=max_freq),
                            phase: rng.random_range(0.0..2.0 * PI),
                        }
                    })
                    .collect()
            })
            .collect();
        Self { channels }
    }

    fn eval(&self, c: usize, x: f64, y: f64) -> f64 {
        let p = Vector2::new(x, y);
        0.5 + self.channels[c]
            .iter()
            .map(|w| WAVE_AMPLITUDE * (2.0 * PI * w.freq * w.dir.dot(&p) + w.phase).sin())
            .sum::<f64>()
    }
}

/// Renders the configured scene with ground-truth depth, flow and motion.
pub fn synth_scene(cfg: &SynthConfig) -> Result<SequenceSample> {
    let k = cfg.intrinsics()?;
    if !(cfg.depth.is_finite() && cfg.depth > 0.0) {
        return Err(Error::InvalidArgument(format!("plane depth must be positive, got {}", cfg.depth)));
    }
    if cfg.frames < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", cfg.frames)));
    }
    if !(cfg.max_cycles.is_finite() && cfg.max_cycles >= 1.0) {
        return Err(Error::InvalidArgument(format!("max_cycles must be at least 1, got {}", cfg.max_cycles)));
    }
    if !(cfg.slope.is_finite() && cfg.ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "surface slope and ridge must be finite, got {} and {}",
            cfg.slope, cfg.ridge
        )));
    }
    if cfg.translation.iter().chain(&cfg.rotation).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("camera motion must be finite".into()));
    }
    let (w, h) = (cfg.width, cfg.height);
    let extent = cfg.depth * w as f64 / cfg.fx;
    let texture = Texture::new(cfg.seed, 1.0 / extent, cfg.max_cycles / extent);
    let motion = cfg.motion();
    let step_inv = motion.invert();

    let mut pose = RigidTransform::identity();
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut depths = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let r = pose.rotation();
        let o = pose.translation();
        let mut img = ImageBuf::zeros(w, h, 3);
        let mut depth = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let d = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let dw = r * d;
                // Z = max of the two half-plane equations when ridge > 0 and
                // min otherwise; the ray meets the envelope at the matching
                // extreme of the two hits.
                let hit = |m: f64| {
                    let denom = dw.z - m * dw.x;
                    (denom, (cfg.depth - o.z + m * o.x) / denom)
                };
                let (da, la) = hit(cfg.slope + cfg.ridge);
                let (db, lb) = hit(cfg.slope - cfg.ridge);
                let (denom, lambda) = match (cfg.ridge >= 0.0, la >= lb) {
                    (true, true) | (false, false) => (da, la),
                    _ => (db, lb),
                };
                if !(dw.z > 0.0 && denom > 0.0 && da > 0.0 && db > 0.0 && lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "frame {f}: pixel ({x}, {y}) does not see the plane"
                    )));
                }
                let p = o + dw * lambda;
                depth[y * w + x] = lambda as f32;
                for c in 0..3 {
                    img.set(c, x, y, texture.eval(c, p.x, p.y) as f32);
                }
            }
        }
        frames.push(img);
        depths.push(DepthMap::new(w, h, depth)?);
        pose = pose.compose(&motion);
    }

    let mut flows = Vec::with_capacity(cfg.frames - 1);
    for (f, dm) in depths[..cfg.frames - 1].iter().enumerate() {
        let mut data = Vec::with_capacity(2 * w * h);
        let mut inside = 0usize;
        for y in 0..h {
            for x in 0..w {
                let z = dm.get(x, y) as f64;
                let p = Vector3::new((x as f64 - k.cx) / k.fx * z, (y as f64 - k.cy) / k.fy * z, z);
                let q = step_inv.transform_point(&p);
                let (u, v) = if q.z > 0.0 {
                    (k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy)
                } else {
                    (f64::NAN, f64::NAN)
                };
                if u >= 0.0 && u <= (w - 1) as f64 && v >= 0.0 && v <= (h - 1) as f64 {
                    inside += 1;
                }
                let (du, dv) = if u.is_finite() && v.is_finite() {
                    (u - x as f64, v - y as f64)
                } else {
                    (0.0, 0.0)
                };
                data.push(du as f32);
                data.push(dv as f32);
            }
        }
        if inside == 0 {
            return Err(Error::InvalidArgument(format!(
                "camera motion leaves no overlap between frames {f} and {}",
                f + 1
            )));
        }
        flows.push(FlowField::new(w, h, data)?);
    }
    let motions = vec![motion; cfg.frames - 1];
    Ok(SequenceSample::new(frames, flows, k, Some(depths), Some(motions))?.with_origin("synthetic", 0))
}

//! Dense optical flow between consecutive frames: estimation, the binary
//! cache format, normalization for the flow encoder, and the provider
//! interface the trainer consumes.

mod estimate;
mod format;

pub use estimate::{compute_flow, compute_flow_with, FlowParams};
pub use format::{decode_flow, encode_flow, load_precomputed_flow, write_flow, FLOW_MAGIC};

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};
use crate::image::ImageBuf;

/// Per-pixel `(u, v)` displacement in pixels, stored row-major with the two
/// components interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 2 {
            return Err(Error::Shape(format!(
                "flow buffer of {} values does not match {width}x{height}x2",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("flow contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 2],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let data = (0..width * height).flat_map(|_| [u, v]).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = 2 * (y * self.width + x);
        (self.data[i], self.data[i + 1])
    }

    pub fn max_magnitude(&self) -> f32 {
        self.data
            .chunks_exact(2)
            .map(|p| p[0].hypot(p[1]))
            .fold(0.0, f32::max)
    }

    fn to_planes(&self) -> ImageBuf {
        ImageBuf::from_fn(self.width, self.height, 2, |c, x, y| {
            self.data[2 * (y * self.width + x) + c]
        })
    }

    fn from_planes(planes: &ImageBuf) -> Self {
        let mut data = Vec::with_capacity(planes.width() * planes.height() * 2);
        for y in 0..planes.height() {
            for x in 0..planes.width() {
                data.push(planes.get(0, x, y));
                data.push(planes.get(1, x, y));
            }
        }
        Self {
            width: planes.width(),
            height: planes.height(),
            data,
        }
    }

    /// Bilinear resize that also rescales the displacements so they stay in
    /// pixels of the new grid.
    pub fn resize(&self, width: usize, height: usize) -> FlowField {
        let sx = width as f32 / self.width as f32;
        let sy = height as f32 / self.height as f32;
        let mut planes = self.to_planes().resize(width, height);
        for y in 0..height {
            for x in 0..width {
                planes.set(0, x, y, planes.get(0, x, y) * sx);
                planes.set(1, x, y, planes.get(1, x, y) * sy);
            }
        }
        Self::from_planes(&planes)
    }
}

/// Flow divided by half the image extent per axis, planar `(2, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFlow(ImageBuf);

impl NormalizedFlow {
    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn planes(&self) -> &ImageBuf {
        &self.0
    }

    /// Plain bilinear resize; normalized values are resolution independent.
    pub fn resize(&self, width: usize, height: usize) -> NormalizedFlow {
        NormalizedFlow(self.0.resize(width, height))
    }

    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        self.0.to_tensor(dtype, device)
    }
}

/// Normalizes `(u, v)` by `(W/2, H/2)` of the flow's own grid.
pub fn normalize_flow(f: &FlowField) -> NormalizedFlow {
    let hw = f.width as f32 / 2.0;
    let hh = f.height as f32 / 2.0;
    NormalizedFlow(ImageBuf::from_fn(f.width, f.height, 2, |c, x, y| {
        let (u, v) = f.get(x, y);
        if c == 0 {
            u / hw
        } else {
            v / hh
        }
    }))
}

/// Resizes to the encoder resolution and normalizes.
pub fn flow_to_encoder_input(f: &FlowField, width: usize, height: usize) -> NormalizedFlow {
    normalize_flow(&f.resize(width, height))
}

/// Source of flow fields for consecutive frame pairs.
///
/// `pair_index` is the index of the first frame of the pair within its
/// sequence.
pub trait FlowProvider: Send + Sync {
    fn flow(
        &self,
        sequence: &str,
        pair_index: usize,
        frame_a: &ImageBuf,
        frame_b: &ImageBuf,
    ) -> Result<FlowField>;
}

/// Computes flow from the (grayscale-converted) frames on every request.
#[derive(Debug, Clone, Default)]
pub struct OnTheFlyFlow {
    pub params: FlowParams,
}

impl FlowProvider for OnTheFlyFlow {
    fn flow(&self, _: &str, _: usize, a: &ImageBuf, b: &ImageBuf) -> Result<FlowField> {
        compute_flow_with(&a.to_gray(), &b.to_gray(), &self.params)
    }
}

/// Reads `<root>/<sequence>/<pair_index:06>.vofl` files.
#[derive(Debug, Clone)]
pub struct PrecomputedFlow {
    root: PathBuf,
}

impl PrecomputedFlow {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(root: &Path, sequence: &str, pair_index: usize) -> PathBuf {
        root.join(sequence).join(format!("{pair_index:06}.vofl"))
    }
}

impl FlowProvider for PrecomputedFlow {
    fn flow(&self, sequence: &str, pair_index: usize, _: &ImageBuf, _: &ImageBuf) -> Result<FlowField> {
        load_precomputed_flow(&Self::path_for(&self.root, sequence, pair_index))
    }
}

/// Reads cached flow files, computing and writing any that are missing.
#[derive(Debug, Clone)]
pub struct CachedFlow {
    root: PathBuf,
    params: FlowParams,
}

impl CachedFlow {
    pub fn new(root: impl Into<PathBuf>, params: FlowParams) -> Self {
        Self {
            root: root.into(),
            params,
        }
    }
}

impl FlowProvider for CachedFlow {
    fn flow(&self, sequence: &str, pair_index: usize, a: &ImageBuf, b: &ImageBuf) -> Result<FlowField> {
        let path = PrecomputedFlow::path_for(&self.root, sequence, pair_index);
        if path.is_file() {
            return load_precomputed_flow(&path);
        }
        let f = compute_flow_with(&a.to_gray(), &b.to_gray(), &self.params)?;
        write_flow(&path, &f)?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_by_construction() {
        assert!(normalize_flow(&FlowField::zeros(6, 4))
            .planes()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let n = normalize_flow(&FlowField::constant(8, 6, 4.0, 0.0));
        assert!(n.planes().plane(0).iter().all(|&v| v == 1.0));
        assert!(n.planes().plane(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_resolution_rescales_displacement() {
        let half = FlowField::constant(8, 8, 4.0, 0.0).resize(4, 4);
        assert_eq!((half.width(), half.height()), (4, 4));
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(half.get(x, y), (2.0, 0.0));
            }
        }
    }

    #[test]
    fn new_validates() {
        assert!(FlowField::new(2, 2, vec![0.0; 7]).is_err());
        assert!(FlowField::new(1, 1, vec![f32::NAN, 0.0]).is_err());
    }
}

//! Self-supervised monocular depth and ego-motion learning from video.
//!
//! The pipeline encodes dense optical flow between consecutive frames into a
//! compact code, runs the codes through an LSTM, and conditions a multi-scale
//! disparity network on the result. A pose network predicts relative motion
//! and explainability masks; the source frames are inverse-warped into the
//! target view and the reconstruction drives all learning. Optional WGAN or
//! PatchGAN discriminators add an adversarial term.

pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod nets;
pub mod ops;
pub mod train;

pub use error::{Error, Result};

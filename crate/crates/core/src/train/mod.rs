//! Joint optimization of the flow encoder, sequence model, disparity and
//! pose networks, optionally against a discriminator.

mod config;
mod model;
mod optim;
mod trainer;

pub use config::{DataSource, TrainConfig};
pub use model::{
    appearance_terms, gan_term, smoothness_term, AppearanceTerms, Batch, Discriminator, Model, Predictions,
    WindowTensors, DISCRIMINATOR_GROUPS, GENERATOR_GROUPS,
};
pub use optim::{Adam, AdamParams, Sgd};
pub use trainer::{checkpoint_path, run_training, GanBatch, SampleSource, StepOutput, Trainer};

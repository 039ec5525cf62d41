pub mod checkpoint;
pub mod config;
pub mod losses;
pub mod optim;
pub mod sampler;
pub mod trainer;

pub use checkpoint::{load_checkpoint, load_generator, save_checkpoint};
pub use config::{OptimizerKind, Phase, TrainingConfig};
pub use losses::{
    discriminator_step, generator_step, gradient_penalty, interpolate, penalty_at, Critic,
    GanState, LossReport,
};
pub use sampler::{derive_seed, prepare_pairs, stream_rng, Batch, SampleStream};
pub use trainer::{train, JsonLog, NoObserver, StepRecord, TrainObserver};

pub mod config;
pub mod discriminator;
pub mod generator;
pub mod io;
pub mod layers;
pub mod weights;

pub use config::NetworkConfig;
pub use discriminator::{layout_discriminator, per_sample_score, Discriminator};
pub use generator::{generate, layout_generator, Generator, NoiseBlock};
pub use weights::{count_parameters, Binder, Layout, SpectralState, WeightSet};

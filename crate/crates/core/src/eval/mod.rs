pub mod ensemble;
pub mod metrics;

pub use ensemble::{evaluate_pairs, evaluate_suite, generate_ensemble, quantize_members, EnsembleBlock, Evaluator, MetricReport};
pub use metrics::{crps, crps_image, lsd, ms_ssim, normalized_rank, rank_count, rmse, RankTally};

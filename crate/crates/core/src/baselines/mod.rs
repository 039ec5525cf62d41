pub mod compare;
pub mod lanczos;
pub mod rainfarm;
pub mod rcnn;

pub use compare::{compare_methods, format_comparison, Method, MethodResult};
pub use lanczos::{lanczos_kernel, lanczos_upsample, lanczos_upsample_raw};
pub use rainfarm::{fit_spectral_slope, power_law_field, rainfarm, rainfarm_linear, RainFarmParams};
pub use rcnn::{rcnn_config, rcnn_predict, rcnn_step, train_rcnn, PixelLoss, RcnnState};

//! Deterministic recurrent CNN: the generator architecture without noise,
//! trained on a pixel loss.

use downscale_autograd::Var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::field::{FieldSequence, SequencePair};
use crate::error::{Error, Result};
use crate::nets::{generate, layout_generator, Binder, Generator, NetworkConfig, WeightSet};
use crate::training::optim::OptimizerState;
use crate::training::{Batch, SampleStream, TrainingConfig};

const STREAM_DATA: u64 = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelLoss {
    Rmse,
    Mae,
}

/// The generator configuration with the noise input removed.
pub fn rcnn_config(net: &NetworkConfig) -> NetworkConfig {
    NetworkConfig {
        noise_channels: 0,
        ..net.clone()
    }
}

pub struct RcnnState {
    pub net: NetworkConfig,
    pub weights: WeightSet,
    pub opt: OptimizerState,
    pub steps: u64,
}

impl RcnnState {
    pub fn init(net: &NetworkConfig, seed: u64) -> Self {
        let net = rcnn_config(net);
        let weights = layout_generator(&net).init(&mut ChaCha8Rng::seed_from_u64(seed));
        Self {
            opt: OptimizerState::new(&weights),
            net,
            weights,
            steps: 0,
        }
    }
}

/// One optimizer step on `batch`; returns the loss before the update.
pub fn rcnn_step(cfg: &TrainingConfig, state: &mut RcnnState, batch: &Batch, loss: PixelLoss) -> Result<f64> {
    let b = Binder::new(&state.weights, true);
    let g = Generator::new(&state.net, &b);
    let (y, _) = g.forward(&Var::constant(batch.lr.clone()), None, batch.samples, None)?;
    let diff = y.sub(&Var::constant(batch.hr.clone()));
    let mut l = match loss {
        PixelLoss::Rmse => diff.square().mean_all().add_scalar(1e-12).sqrt(),
        PixelLoss::Mae => diff.square().add_scalar(1e-12).sqrt().mean_all(),
    };
    if cfg.l2_weight > 0.0 {
        if let Some(sq) = b.kernel_square_sum() {
            l = l.add(&sq.scale(cfg.l2_weight));
        }
    }
    let value = l.item() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            step: state.steps,
            what: "RCNN loss".into(),
        });
    }
    let grads = b.gradients(&l);
    let phase = cfg.phase_at(state.steps * cfg.batch_size as u64);
    state.opt.step(cfg, phase, &mut state.weights, &grads);
    state.steps += 1;
    Ok(value)
}

/// Trains for `steps` batches drawn like GAN generator batches; returns the
/// loss trace.
pub fn train_rcnn(
    cfg: &TrainingConfig,
    pairs: &[SequencePair],
    state: &mut RcnnState,
    steps: u64,
    loss: PixelLoss,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let stream = SampleStream::new(pairs, cfg.seed, STREAM_DATA, cfg.augment)?.with_crop(cfg.crop_lr);
    (0..steps)
        .map(|_| {
            let batch = stream.batch(state.steps, cfg.batch_size)?;
            rcnn_step(cfg, state, &batch, loss)
        })
        .collect()
}

/// Deterministic prediction for one condition.
pub fn rcnn_predict(net: &NetworkConfig, weights: &WeightSet, lr: &FieldSequence) -> Result<FieldSequence> {
    if net.noise_channels != 0 {
        return Err(Error::Config("RCNN configuration must have no noise channels".into()));
    }
    let (y, _) = generate(net, weights, &lr.to_tensor(), None, 1, None)?;
    let (d, v) = crate::data::field::unstack_tensor(&y, 1, 0);
    let mut out = lr.with_values(d, v);
    out.pixel_size_km = lr.pixel_size_km / net.factor() as f64;
    Ok(out)
}

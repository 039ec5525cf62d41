//! Conditional WGAN-GP objectives and single optimization steps.

use downscale_autograd::{grad, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::optim::OptimizerState;
use super::sampler::Batch;
use crate::error::{Error, Result};
use crate::nets::{
    layout_discriminator, layout_generator, per_sample_score, Binder, Discriminator, Generator,
    NetworkConfig, NoiseBlock, SpectralState, WeightSet,
};

/// Anything producing one score per sample `[N, 1, 1, 1]` from a time-major
/// pair batch.
pub trait Critic {
    fn scores(&self, hr: &Var, lr: &Var, samples: usize) -> Result<Var>;
}

impl Critic for Discriminator<'_> {
    fn scores(&self, hr: &Var, lr: &Var, samples: usize) -> Result<Var> {
        Ok(per_sample_score(&self.forward(hr, lr, samples)?, samples))
    }
}

/// `ε·x + (1−ε)·x_gen` with one `ε` per sample of a time-major batch.
pub fn interpolate(x: &Tensor, x_gen: &Tensor, eps: &[f32]) -> Tensor {
    assert_eq!(x.shape(), x_gen.shape());
    let item = x.shape().item();
    let n = eps.len();
    let mut out = Vec::with_capacity(x.len());
    for (b, (xi, gi)) in x.data().chunks(item).zip(x_gen.data().chunks(item)).enumerate() {
        let e = eps[b % n];
        out.extend(xi.iter().zip(gi).map(|(a, g)| e * a + (1.0 - e) * g));
    }
    Tensor::from_vec(x.shape(), out)
}

/// `γ · mean_n (‖∇_x̂ D(x̂_n, y_n)‖₂ − 1)²`, the norm taken over all elements
/// of a sample (time included). Differentiable in the critic's weights.
pub fn penalty_at(critic: &dyn Critic, x_hat: Tensor, y: &Tensor, samples: usize, gamma: f32) -> Result<Var> {
    let leaf = Var::param(x_hat);
    let s = critic.scores(&leaf, &Var::constant(y.clone()), samples)?;
    let g = grad(&s.sum_all(), &[&leaf], true).remove(0);
    let norm = g.square().sum_per_sample(samples).add_scalar(1e-12).sqrt();
    Ok(norm.add_scalar(-1.0).square().mean_all().scale(gamma))
}

/// Draws one `ε ~ U(0, 1)` per sample and evaluates the penalty at the
/// interpolants. Returns the penalty and the draws.
pub fn gradient_penalty(
    critic: &dyn Critic,
    x: &Tensor,
    y: &Tensor,
    x_gen: &Tensor,
    samples: usize,
    gamma: f32,
    rng: &mut impl Rng,
) -> Result<(Var, Vec<f32>)> {
    let eps: Vec<f32> = (0..samples).map(|_| rng.gen::<f32>()).collect();
    let pen = penalty_at(critic, interpolate(x, x_gen, &eps), y, samples, gamma)?;
    Ok((pen, eps))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_d: Option<f64>,
    pub l_g: Option<f64>,
    pub penalty: Option<f64>,
    pub score_real: Option<f64>,
    pub score_gen: Option<f64>,
}

/// Everything that evolves during adversarial training.
#[derive(Clone, Debug, PartialEq)]
pub struct GanState {
    pub g: WeightSet,
    pub d: WeightSet,
    pub sn: SpectralState,
    pub opt_g: OptimizerState,
    pub opt_d: OptimizerState,
    pub g_steps: u64,
    pub d_steps: u64,
}

impl GanState {
    pub fn init(net: &NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = layout_generator(net).init(&mut rng);
        let d = layout_discriminator(net).init(&mut rng);
        let sn = SpectralState::init(&d, &mut rng);
        Self {
            opt_g: OptimizerState::new(&g),
            opt_d: OptimizerState::new(&d),
            g,
            d,
            sn,
            g_steps: 0,
            d_steps: 0,
        }
    }

    pub fn g_sequences(&self, cfg: &TrainingConfig) -> u64 {
        self.g_steps * cfg.batch_size as u64
    }
}

fn noise_for(net: &NetworkConfig, lr: &Tensor, rng: &mut impl Rng) -> Option<Tensor> {
    (net.noise_channels > 0).then(|| {
        let s = lr.shape();
        NoiseBlock::sample(rng, net, s.n, s.h, s.w, 1.0).values
    })
}

fn finite(v: f64, step: u64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            step,
            what: what.into(),
        })
    }
}

fn check_grads(g: &WeightSet, step: u64, what: &str) -> Result<()> {
    if g.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            what: format!("{what} gradient"),
        })
    }
}

/// One critic update minimizing `D(x,y) − D(G(y,z),y) + penalty`.
pub fn discriminator_step(
    net: &NetworkConfig,
    cfg: &TrainingConfig,
    state: &mut GanState,
    batch: &Batch,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    let n = batch.samples;
    let z = noise_for(net, &batch.lr, rng);
    let (x_gen, _) = crate::nets::generate(net, &state.g, &batch.lr, z.as_ref(), n, None)?;
    let (binder, sn_next) = Binder::spectral(&state.d, &state.sn, true);
    let d = Discriminator::new(net, &binder);
    let y = Var::constant(batch.lr.clone());
    let real = d.scores(&Var::constant(batch.hr.clone()), &y, n)?.mean_all();
    let fake = d.scores(&Var::constant(x_gen.clone()), &y, n)?.mean_all();
    let mut loss = real.sub(&fake);
    let mut pen_value = 0.0;
    if cfg.gamma > 0.0 {
        let (pen, _) = gradient_penalty(&d, &batch.hr, &batch.lr, &x_gen, n, cfg.gamma, rng)?;
        pen_value = finite(pen.item() as f64, state.d_steps, "gradient penalty")?;
        loss = loss.add(&pen);
    }
    let l_d = finite(loss.item() as f64, state.d_steps, "discriminator loss")?;
    let grads = binder.gradients(&loss);
    check_grads(&grads, state.d_steps, "discriminator")?;
    let phase = cfg.phase_at(state.g_sequences(cfg));
    state.opt_d.step(cfg, phase, &mut state.d, &grads);
    state.sn = sn_next;
    state.d_steps += 1;
    Ok(LossReport {
        l_d: Some(l_d),
        penalty: Some(pen_value),
        score_real: Some(real.item() as f64),
        score_gen: Some(fake.item() as f64),
        l_g: None,
    })
}

/// One generator update minimizing `D(G(y,z),y) + λ·Σw²`.
pub fn generator_step(
    net: &NetworkConfig,
    cfg: &TrainingConfig,
    state: &mut GanState,
    batch: &Batch,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    let n = batch.samples;
    let z = noise_for(net, &batch.lr, rng).map(Var::constant);
    let gb = Binder::new(&state.g, true);
    let g = Generator::new(net, &gb);
    let y = Var::constant(batch.lr.clone());
    let (x_gen, _) = g.forward(&y, z.as_ref(), n, None)?;
    let (db, _) = Binder::spectral(&state.d, &state.sn, false);
    let d = Discriminator::new(net, &db);
    let score = d.scores(&x_gen, &y, n)?.mean_all();
    let mut loss = score.clone();
    if cfg.l2_weight > 0.0 {
        if let Some(sq) = gb.kernel_square_sum() {
            loss = loss.add(&sq.scale(cfg.l2_weight));
        }
    }
    let l_g = finite(loss.item() as f64, state.g_steps, "generator loss")?;
    let grads = gb.gradients(&loss);
    check_grads(&grads, state.g_steps, "generator")?;
    let phase = cfg.phase_at(state.g_sequences(cfg));
    state.opt_g.step(cfg, phase, &mut state.g, &grads);
    state.g_steps += 1;
    Ok(LossReport {
        l_g: Some(l_g),
        score_gen: Some(score.item() as f64),
        ..Default::default()
    })
}

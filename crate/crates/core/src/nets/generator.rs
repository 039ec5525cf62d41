//! Recurrent generator: per-frame encoder with noise, ConvGRU over time,
//! residual/bilinear decoder and a sigmoid output.

use downscale_autograd::{Shape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{NetworkConfig, Padding};
use super::layers::{layout_convgru, layout_residual, Ctx};
use super::weights::{Binder, Layout};
use crate::error::{Error, Result};

pub fn layout_generator(cfg: &NetworkConfig) -> Layout {
    let mut l = Layout::default();
    let k = cfg.kernel_size;
    for enc in ["gen/enc", "gen/init"] {
        l.conv(&format!("{enc}/in"), cfg.vars, cfg.gen_width, k);
        let mut cin = cfg.gen_width + cfg.noise_channels;
        for j in 0..cfg.gen_encoder_blocks {
            layout_residual(&mut l, &format!("{enc}/rb{j}"), cin, cfg.gen_width, k, false);
            cin = cfg.gen_width;
        }
    }
    layout_convgru(&mut l, "gen/gru", cfg.gen_width, cfg.gen_width, k);
    let mut cin = cfg.gen_width;
    for (i, &w) in cfg.gen_decoder_widths.iter().enumerate() {
        layout_residual(&mut l, &format!("gen/dec{i}"), cin, w, k, false);
        cin = w;
    }
    l.conv("gen/out", cin, cfg.vars, k);
    l
}

/// Per-time-step noise on the low-resolution grid, time-major like the input.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBlock {
    pub values: Tensor,
    pub amplitude: f32,
}

impl NoiseBlock {
    /// Independent unit Gaussian draws for every grid cell and time step.
    pub fn sample(
        rng: &mut impl Rng,
        cfg: &NetworkConfig,
        items: usize,
        h: usize,
        w: usize,
        amplitude: f32,
    ) -> NoiseBlock {
        let shape = Shape::new(items, cfg.noise_channels, h, w);
        let data = (0..shape.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        NoiseBlock {
            values: Tensor::from_vec(shape, data),
            amplitude,
        }
    }

    pub fn zeros(cfg: &NetworkConfig, items: usize, h: usize, w: usize) -> NoiseBlock {
        NoiseBlock {
            values: Tensor::zeros(Shape::new(items, cfg.noise_channels, h, w)),
            amplitude: 1.0,
        }
    }

    /// The scaled noise fed to the network.
    pub fn scaled(&self) -> Tensor {
        let a = self.amplitude;
        self.values.map(|v| v * a)
    }
}

pub struct Generator<'a> {
    pub cfg: &'a NetworkConfig,
    ctx: Ctx<'a>,
}

impl<'a> Generator<'a> {
    pub fn new(cfg: &'a NetworkConfig, binder: &'a Binder) -> Self {
        Self {
            cfg,
            ctx: Ctx {
                binder,
                pad: cfg.padding.mode(),
                slope: cfg.leaky_slope,
            },
        }
    }

    fn check(&self, lr: &Var, noise: Option<&Var>) -> Result<()> {
        let s = lr.shape();
        if s.c != self.cfg.vars {
            return Err(Error::Shape(format!(
                "input has {} variables, network expects {}",
                s.c, self.cfg.vars
            )));
        }
        match (noise, self.cfg.noise_channels) {
            (None, 0) => Ok(()),
            (None, _) => Err(Error::Shape("generator needs a noise input".into())),
            (Some(z), c) => {
                let expected = Shape::new(s.n, c, s.h, s.w);
                if z.shape() != expected {
                    return Err(Error::Shape(format!(
                        "noise shape {}, expected {expected}",
                        z.shape()
                    )));
                }
                Ok(())
            }
        }
    }

    fn encode(&self, name: &str, lr: &Var, noise: Option<&Var>) -> Var {
        let mut x = self.ctx.conv(&format!("{name}/in"), lr, 1);
        if let (Some(z), true) = (noise, self.cfg.noise_channels > 0) {
            x = Var::cat_channels(&[x, z.clone()]);
        }
        for j in 0..self.cfg.gen_encoder_blocks {
            x = self.ctx.residual_block(&format!("{name}/rb{j}"), &x, false, false);
        }
        x
    }

    /// Recurrent state from the first frame, using the separate
    /// initialization encoder; squashed to the state's tanh range.
    pub fn initial_state(&self, lr0: &Var, noise0: Option<&Var>) -> Result<Var> {
        self.check(lr0, noise0)?;
        Ok(self.encode("gen/init", lr0, noise0).tanh())
    }

    pub fn decode(&self, states: &Var) -> Var {
        let wrap = self.cfg.padding == Padding::Circular;
        let mut x = states.clone();
        let last = self.cfg.upsampling_stages;
        for i in 0..=last {
            x = self.ctx.residual_block(&format!("gen/dec{i}"), &x, false, true);
            if i < last {
                x = x.upsample2(wrap);
            }
        }
        let x = x.leaky_relu(self.cfg.leaky_slope);
        self.ctx.conv("gen/out", &x, 1).sigmoid()
    }

    /// Maps a time-major low-resolution batch `[N_t·N, N_v, h, w]` to
    /// `[N_t·N, N_v, K·h, K·w]`. Returns the output and the final state.
    pub fn forward(
        &self,
        lr: &Var,
        noise: Option<&Var>,
        samples: usize,
        init: Option<&Var>,
    ) -> Result<(Var, Var)> {
        self.check(lr, noise)?;
        let s = lr.shape();
        if samples == 0 || s.n % samples != 0 {
            return Err(Error::Shape(format!("{} items for {samples} samples", s.n)));
        }
        let steps = s.n / samples;
        let mut h = match init {
            Some(h) => {
                let expected = Shape::new(samples, self.cfg.gen_width, s.h, s.w);
                if h.shape() != expected {
                    return Err(Error::Shape(format!(
                        "state shape {}, expected {expected}",
                        h.shape()
                    )));
                }
                h.clone()
            }
            None => self.initial_state(
                &lr.slice_batch(0, samples),
                noise.map(|z| z.slice_batch(0, samples)).as_ref(),
            )?,
        };
        let x = self.encode("gen/enc", lr, noise);
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            h = self
                .ctx
                .convgru_step("gen/gru", &h, &x.slice_batch(t * samples, samples));
            states.push(h.clone());
        }
        Ok((self.decode(&Var::cat_batch(&states)), h))
    }
}

/// Evaluates the generator on plain tensors with frozen weights.
pub fn generate(
    cfg: &NetworkConfig,
    weights: &super::weights::WeightSet,
    lr: &Tensor,
    noise: Option<&Tensor>,
    samples: usize,
    init: Option<&Tensor>,
) -> Result<(Tensor, Tensor)> {
    let b = Binder::new(weights, false);
    let g = Generator::new(cfg, &b);
    let z = noise.map(|z| Var::constant(z.clone()));
    let h0 = init.map(|h| Var::constant(h.clone()));
    let (y, h) = g.forward(&Var::constant(lr.clone()), z.as_ref(), samples, h0.as_ref())?;
    Ok((y.value().clone(), h.value().clone()))
}

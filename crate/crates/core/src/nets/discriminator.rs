//! Conditional sequence critic: strided high-res and plain low-res encoders,
//! a joint branch and a high-res-only branch, each with a ConvGRU and global
//! pooling, then a per-time-step fully connected head.

use downscale_autograd::{Shape, Tensor, Var};

use super::config::NetworkConfig;
use super::layers::{layout_convgru, layout_residual, Ctx};
use super::weights::{Binder, Layout};
use crate::error::{Error, Result};

pub fn layout_discriminator(cfg: &NetworkConfig) -> Layout {
    let mut l = Layout::default();
    let k = cfg.kernel_size;
    for (enc, strided) in [("disc/hr", true), ("disc/lr", false)] {
        let mut cin = cfg.vars;
        for (i, &w) in cfg.disc_encoder_widths.iter().enumerate() {
            layout_residual(&mut l, &format!("{enc}/rb{i}"), cin, w, k, strided);
            cin = w;
        }
    }
    let enc_out = *cfg.disc_encoder_widths.last().expect("validated config");
    for (branch, cin0) in [("disc/joint", 2 * enc_out), ("disc/hronly", enc_out)] {
        let mut cin = cin0;
        for j in 0..cfg.disc_joint_blocks {
            layout_residual(&mut l, &format!("{branch}/rb{j}"), cin, cfg.disc_width, k, false);
            cin = cfg.disc_width;
        }
        layout_convgru(&mut l, &format!("{branch}/gru"), cin, cfg.disc_width, k);
    }
    l.conv("disc/fc1", 2 * cfg.disc_width, cfg.disc_fc_width, 1);
    l.conv("disc/fc2", cfg.disc_fc_width, 1, 1);
    l
}

pub struct Discriminator<'a> {
    pub cfg: &'a NetworkConfig,
    ctx: Ctx<'a>,
}

impl<'a> Discriminator<'a> {
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

    fn encode(&self, name: &str, x: &Var, strided: bool) -> Var {
        let mut x = x.clone();
        for i in 0..self.cfg.disc_encoder_widths.len() {
            x = self.ctx.residual_block(&format!("{name}/rb{i}"), &x, strided, true);
        }
        x
    }

    /// Residual blocks, a zero-initialized ConvGRU over time and global
    /// average pooling: `[N_t·N, C, 1, 1]`.
    fn branch(&self, name: &str, x: &Var, samples: usize) -> Var {
        let mut x = x.clone();
        for j in 0..self.cfg.disc_joint_blocks {
            x = self.ctx.residual_block(&format!("{name}/rb{j}"), &x, false, true);
        }
        let s = x.shape();
        let steps = s.n / samples;
        let mut h = Var::constant(Tensor::zeros(Shape::new(samples, self.cfg.disc_width, s.h, s.w)));
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            h = self
                .ctx
                .convgru_step(&format!("{name}/gru"), &h, &x.slice_batch(t * samples, samples));
            states.push(h.clone());
        }
        Var::cat_batch(&states).spatial_mean()
    }

    /// Per-time-step scores `[N_t·N, 1, 1, 1]` of a time-major pair batch.
    pub fn forward(&self, hr: &Var, lr: &Var, samples: usize) -> Result<Var> {
        let (hs, ls) = (hr.shape(), lr.shape());
        let k = self.cfg.factor();
        if hs.n != ls.n || hs.c != ls.c || hs.h != k * ls.h || hs.w != k * ls.w {
            return Err(Error::Shape(format!(
                "high-res {hs} is not {k}x low-res {ls}"
            )));
        }
        if hs.c != self.cfg.vars || samples == 0 || hs.n % samples != 0 {
            return Err(Error::Shape(format!("bad discriminator batch {hs} for {samples} samples")));
        }
        let eh = self.encode("disc/hr", hr, true);
        let el = self.encode("disc/lr", lr, false);
        if eh.shape() != el.shape() {
            return Err(Error::Shape(format!(
                "encoded shapes differ: {} vs {}",
                eh.shape(),
                el.shape()
            )));
        }
        let joint = self.branch("disc/joint", &Var::cat_channels(&[eh.clone(), el]), samples);
        let hr_only = self.branch("disc/hronly", &eh, samples);
        let f = self.ctx.conv("disc/fc1", &Var::cat_channels(&[joint, hr_only]), 1);
        Ok(self.ctx.conv("disc/fc2", &f.leaky_relu(self.cfg.leaky_slope), 1))
    }
}

/// Time mean of per-step scores, one value per sample: `[N, 1, 1, 1]`.
pub fn per_sample_score(scores: &Var, samples: usize) -> Var {
    let steps = scores.shape().n / samples;
    scores.sum_per_sample(samples).scale(1.0 / steps as f32)
}

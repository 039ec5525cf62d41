use downscale_autograd::Tensor;

use super::config::{OptimizerKind, Phase, TrainingConfig};
use crate::nets::WeightSet;

/// Adam moments for one network; SGD phases leave them untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: WeightSet,
    pub v: WeightSet,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(like: &WeightSet) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    /// One update of `weights` from `grads` under `phase`.
    pub fn step(&mut self, cfg: &TrainingConfig, phase: Phase, weights: &mut WeightSet, grads: &WeightSet) {
        let lr = phase.lr;
        match phase.optimizer {
            OptimizerKind::Sgd => {
                for (name, w) in weights.tensors.iter_mut() {
                    let g = &grads.tensors[name];
                    *w = w.zip_map(g, |a, b| a - lr * b);
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
                let bc1 = 1.0 - (b1 as f64).powi(self.t as i32);
                let bc2 = 1.0 - (b2 as f64).powi(self.t as i32);
                let step = (lr as f64 * bc2.sqrt() / bc1) as f32;
                for (name, w) in weights.tensors.iter_mut() {
                    let g = grads.tensors[name].data();
                    let m = self.m.tensors.get_mut(name).expect("moment for every weight");
                    let v = self.v.tensors.get_mut(name).expect("moment for every weight");
                    let (md, vd, wd) = (m.data_mut(), v.data_mut(), w.data_mut());
                    for i in 0..g.len() {
                        md[i] = b1 * md[i] + (1.0 - b1) * g[i];
                        vd[i] = b2 * vd[i] + (1.0 - b2) * g[i] * g[i];
                        wd[i] -= step * md[i] / (vd[i].sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Global L2 norm of a gradient set.
pub fn grad_norm(g: &WeightSet) -> f64 {
    g.iter().map(|(_, t)| t.sum_sq()).sum::<f64>().sqrt()
}

pub fn all_finite(ts: &[&Tensor]) -> bool {
    ts.iter().all(|t| t.all_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use downscale_autograd::Shape;

    fn single(v: f32) -> WeightSet {
        let mut w = WeightSet::default();
        w.insert("x/w", Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![v]));
        w
    }

    #[test]
    fn zero_lr_leaves_weights() {
        let cfg = TrainingConfig::default();
        let mut w = single(1.5);
        let mut st = OptimizerState::new(&w);
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            st.step(&cfg, Phase { optimizer: kind, lr: 0.0, until: 1 }, &mut w, &single(3.0));
        }
        assert_eq!(w, single(1.5));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainingConfig::default();
        let mut w = single(1.0);
        let mut st = OptimizerState::new(&w);
        st.step(&cfg, Phase { optimizer: OptimizerKind::Adam, lr: 0.01, until: 1 }, &mut w, &single(4.0));
        assert!((w.tensors["x/w"].item() - 0.99).abs() < 1e-6);
    }

    #[test]
    fn sgd_step() {
        let cfg = TrainingConfig::default();
        let mut w = single(1.0);
        let mut st = OptimizerState::new(&w);
        st.step(&cfg, Phase { optimizer: OptimizerKind::Sgd, lr: 0.5, until: 1 }, &mut w, &single(2.0));
        assert_eq!(w.tensors["x/w"].item(), 0.0);
    }
}

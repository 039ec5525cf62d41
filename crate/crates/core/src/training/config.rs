use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// One optimizer phase, active while the generator has seen fewer than
/// `until` sequences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub optimizer: OptimizerKind,
    pub lr: f32,
    pub until: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub gamma: f32,
    pub d_steps_per_g: usize,
    pub batch_size: usize,
    pub phases: Vec<Phase>,
    /// Generator sequences between checkpoints.
    pub checkpoint_interval: u64,
    /// Weight of `Σ w²` over generator kernels in the generator loss.
    pub l2_weight: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub seed: u64,
    pub augment: bool,
    /// Gaussian smoothing applied to high-res training fields, pixels.
    pub hr_smoothing: f64,
    /// Also smooth the low-res condition.
    pub smooth_lr: bool,
    /// Train on square low-res crops of this size instead of whole frames.
    #[serde(default)]
    pub crop_lr: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            d_steps_per_g: 5,
            batch_size: 16,
            phases: vec![
                Phase {
                    optimizer: OptimizerKind::Adam,
                    lr: 1e-4,
                    until: 350_000,
                },
                Phase {
                    optimizer: OptimizerKind::Sgd,
                    lr: 1e-5,
                    until: 400_000,
                },
            ],
            checkpoint_interval: 3200,
            l2_weight: 1e-4,
            adam_beta1: 0.0,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
            augment: true,
            hr_smoothing: 0.75,
            smooth_lr: false,
            crop_lr: None,
        }
    }
}

impl TrainingConfig {
    /// Divides every sequence-count threshold by `divisor`.
    pub fn scaled(mut self, divisor: u64) -> Self {
        let d = divisor.max(1);
        for p in &mut self.phases {
            p.until = (p.until / d).max(1);
        }
        self.checkpoint_interval = (self.checkpoint_interval / d).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        if self.batch_size == 0 || self.d_steps_per_g == 0 {
            return Err(Error::Config("batch size and D steps must be positive".into()));
        }
        if self.phases.is_empty() {
            return Err(Error::Config("at least one optimizer phase required".into()));
        }
        if self.phases.windows(2).any(|w| w[1].until <= w[0].until) {
            return Err(Error::Config("schedule boundaries must increase".into()));
        }
        if self.phases.iter().any(|p| !(p.lr >= 0.0)) || self.checkpoint_interval == 0 {
            return Err(Error::Config("invalid learning rate or checkpoint interval".into()));
        }
        if !(self.hr_smoothing >= 0.0) {
            return Err(Error::Config("smoothing sigma must be non-negative".into()));
        }
        if self.crop_lr == Some(0) {
            return Err(Error::Config("crop size must be positive".into()));
        }
        Ok(())
    }

    /// Phase in force once `g_sequences` generator sequences have been used;
    /// the last phase persists after its end.
    pub fn phase_at(&self, g_sequences: u64) -> Phase {
        *self
            .phases
            .iter()
            .find(|p| g_sequences < p.until)
            .unwrap_or_else(|| self.phases.last().expect("validated"))
    }

    /// Total generator sequences of the full schedule.
    pub fn total_sequences(&self) -> u64 {
        self.phases.last().map_or(0, |p| p.until)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switch_happens_exactly_at_boundary() {
        let c = TrainingConfig::default();
        assert_eq!(c.phase_at(349_999).optimizer, OptimizerKind::Adam);
        assert_eq!(c.phase_at(350_000).optimizer, OptimizerKind::Sgd);
        assert_eq!(c.phase_at(350_000).lr, 1e-5);
        let s = c.scaled(1000);
        assert_eq!(s.phase_at(349).optimizer, OptimizerKind::Adam);
        assert_eq!(s.phase_at(350).optimizer, OptimizerKind::Sgd);
        assert_eq!(s.checkpoint_interval, 3);
    }

    #[test]
    fn validation() {
        let mut c = TrainingConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::default();
        c.phases[1].until = 100;
        assert!(c.validate().is_err());
        assert!(TrainingConfig::default().validate().is_ok());
    }
}

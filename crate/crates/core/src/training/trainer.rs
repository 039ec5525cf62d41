use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{OptimizerKind, TrainingConfig};
use super::losses::{discriminator_step, generator_step, GanState, LossReport};
use super::sampler::{stream_rng, SampleStream};
use crate::data::field::SequencePair;
use crate::error::{Error, Result};
use crate::nets::NetworkConfig;

const STREAM_D_DATA: u64 = 1;
const STREAM_G_DATA: u64 = 2;
const STREAM_D_NOISE: u64 = 3;
const STREAM_G_NOISE: u64 = 4;

/// One line of the training log: a generator step and the critic steps
/// preceding it (critic quantities averaged over those steps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub g_sequences: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub penalty: f64,
    pub score_real: f64,
    pub score_gen: f64,
    pub optimizer: OptimizerKind,
    pub wall_seconds: f64,
}

pub trait TrainObserver {
    fn on_step(&mut self, _rec: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called every checkpoint interval with the current state.
    fn on_checkpoint(&mut self, _state: &GanState, _rec: &StepRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Appends one JSON object per step to a file.
pub struct JsonLog {
    pub path: PathBuf,
}

impl TrainObserver for JsonLog {
    fn on_step(&mut self, rec: &StepRecord) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs `g_steps` more generator steps, each preceded by
/// `d_steps_per_g` critic steps. Every batch and noise draw is a function of
/// the seed and the step counters, so a resumed run continues exactly.
pub fn train(
    net: &NetworkConfig,
    cfg: &TrainingConfig,
    pairs: &[SequencePair],
    state: &mut GanState,
    g_steps: u64,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    net.validate()?;
    cfg.validate()?;
    let d_stream = SampleStream::new(pairs, cfg.seed, STREAM_D_DATA, cfg.augment)?.with_crop(cfg.crop_lr);
    let g_stream = SampleStream::new(pairs, cfg.seed, STREAM_G_DATA, cfg.augment)?.with_crop(cfg.crop_lr);
    let start = Instant::now();
    let bsz = cfg.batch_size;
    for _ in 0..g_steps {
        let mut acc = [0.0f64; 4];
        for _ in 0..cfg.d_steps_per_g {
            let batch = d_stream.batch(state.d_steps, bsz)?;
            let mut rng = stream_rng(cfg.seed, STREAM_D_NOISE, state.d_steps);
            let r = discriminator_step(net, cfg, state, &batch, &mut rng)?;
            for (a, v) in acc.iter_mut().zip([r.l_d, r.penalty, r.score_real, r.score_gen]) {
                *a += v.unwrap_or(0.0) / cfg.d_steps_per_g as f64;
            }
        }
        let phase = cfg.phase_at(state.g_sequences(cfg));
        let batch = g_stream.batch(state.g_steps, bsz)?;
        let mut rng = stream_rng(cfg.seed, STREAM_G_NOISE, state.g_steps);
        let before = state.g_sequences(cfg);
        let LossReport { l_g, .. } = generator_step(net, cfg, state, &batch, &mut rng)?;
        let rec = StepRecord {
            step: state.g_steps,
            g_sequences: state.g_sequences(cfg),
            l_d: acc[0],
            l_g: l_g.unwrap_or(f64::NAN),
            penalty: acc[1],
            score_real: acc[2],
            score_gen: acc[3],
            optimizer: phase.optimizer,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!("{rec:?}");
        observer.on_step(&rec)?;
        if before / cfg.checkpoint_interval != rec.g_sequences / cfg.checkpoint_interval {
            observer.on_checkpoint(state, &rec)?;
        }
    }
    Ok(())
}

//! Synthetic rain-like sequences: an advected Gaussian random field with
//! exponential space-time correlation, exponentiated and thresholded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{Dims, FieldSequence};
use super::transform::TransformSpec;
use crate::error::{Error, Result};
use crate::fft::{fft2, signed_freq};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub seed: u64,
    /// e-folding length of the spatial correlation, pixels.
    pub correlation_length: f64,
    /// e-folding time of the temporal correlation, frames. May be infinite.
    pub temporal_correlation: f64,
    /// `(vy, vx)` pixels per frame.
    pub advection: [f64; 2],
    /// Mean and standard deviation of `ln R` on wet pixels.
    pub log_mean: f64,
    pub log_std: f64,
    /// Fraction of non-empty pixels.
    pub occupancy: f64,
    pub dt_minutes: i64,
    pub pixel_size_km: f64,
    pub transform: TransformSpec,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 0,
            correlation_length: 8.0,
            temporal_correlation: 6.0,
            advection: [0.5, 1.0],
            log_mean: 0.5,
            log_std: 1.2,
            occupancy: 0.5,
            dt_minutes: 10,
            pixel_size_km: 1.0,
            transform: TransformSpec::default(),
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.correlation_length > 0.0) || !(self.temporal_correlation > 0.0) {
            return Err(Error::Config("correlation lengths must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.occupancy) {
            return Err(Error::Config(format!(
                "occupancy {} outside [0, 1]",
                self.occupancy
            )));
        }
        if !(self.log_std >= 0.0) || !self.log_mean.is_finite() {
            return Err(Error::Config("invalid lognormal parameters".into()));
        }
        if self.dt_minutes <= 0 {
            return Err(Error::Config("time step must be positive".into()));
        }
        self.transform.validate()
    }
}

fn white_spectrum(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..h * w)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    fft2(&mut buf, h, w, false);
    buf
}

/// Unit-variance correlated Gaussian fields, one per frame.
fn gaussian_frames(p: &SyntheticParams, steps: usize, h: usize, w: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let l = p.correlation_length;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut spectrum = Vec::with_capacity(h * w);
    let mut freqs = Vec::with_capacity(h * w);
    for ky in 0..h {
        for kx in 0..w {
            let fy = signed_freq(ky, h) / h as f64;
            let fx = signed_freq(kx, w) / w as f64;
            let k2 = fy * fy + fx * fx;
            // 2-D spectrum of an exponential covariance exp(-r/L)
            spectrum.push((1.0 + two_pi * two_pi * l * l * k2).powf(-1.5));
            freqs.push((fy, fx));
        }
    }
    let mean_s = spectrum.iter().sum::<f64>() / (h * w) as f64;
    let amp: Vec<f64> = spectrum.iter().map(|s| (s / mean_s).sqrt()).collect();
    let rho = if p.temporal_correlation.is_infinite() {
        1.0
    } else {
        (-1.0 / p.temporal_correlation).exp()
    };
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let norm = 1.0 / (h * w) as f64;
    let mut state = white_spectrum(&mut rng, h, w);
    let mut frames = Vec::with_capacity(steps);
    for t in 0..steps {
        if t > 0 && innov > 0.0 {
            let fresh = white_spectrum(&mut rng, h, w);
            for (s, f) in state.iter_mut().zip(fresh) {
                *s = *s * rho + f * innov;
            }
        }
        let shift = [p.advection[0] * t as f64, p.advection[1] * t as f64];
        let mut buf: Vec<Complex64> = state
            .iter()
            .zip(&amp)
            .zip(&freqs)
            .map(|((s, a), (fy, fx))| {
                let phase = -two_pi * (fy * shift[0] + fx * shift[1]);
                s * *a * Complex64::from_polar(1.0, phase)
            })
            .collect();
        fft2(&mut buf, h, w, true);
        frames.push(buf.iter().map(|c| c.re * norm).collect());
    }
    frames
}

/// One synthetic sequence of `steps` frames of `height × width`, single variable.
pub fn synth_sequence(
    params: &SyntheticParams,
    steps: usize,
    height: usize,
    width: usize,
    start_minutes: i64,
) -> Result<FieldSequence> {
    params.validate()?;
    if steps == 0 || height == 0 || width == 0 {
        return Err(Error::Shape("synthetic sequence needs non-empty dims".into()));
    }
    let frames = gaussian_frames(params, steps, height, width);
    let all: Vec<f64> = frames.iter().flatten().copied().collect();
    let wet = (params.occupancy * all.len() as f64).round() as usize;
    let threshold = if wet == 0 {
        f64::INFINITY
    } else {
        let mut sorted = all.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[wet - 1]
    };
    let spec = params.transform;
    let mut values = Vec::with_capacity(all.len());
    for g in all {
        let r = if g >= threshold {
            (params.log_mean + params.log_std * g).exp()
        } else {
            0.0
        };
        values.push(spec.forward_value(r)? as f32);
    }
    FieldSequence::new(
        Dims::new(steps, height, width, 1),
        values,
        FieldSequence::regular_times(start_minutes, params.dt_minutes, steps),
        params.pixel_size_km,
        spec,
    )
}

/// Seed of sequence `index` in a synthetic collection.
pub fn sequence_seed(base: u64, index: u64) -> u64 {
    // splitmix64 step
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A collection of independent sequences with consecutive, non-overlapping
/// time windows.
pub fn synth_collection(
    params: &SyntheticParams,
    count: usize,
    dims: Dims,
    start_minutes: i64,
) -> Result<Vec<FieldSequence>> {
    let span = params.dt_minutes * (dims.steps as i64 + 1);
    (0..count)
        .map(|i| {
            let p = SyntheticParams {
                seed: sequence_seed(params.seed, i as u64),
                ..params.clone()
            };
            synth_sequence(&p, dims.steps, dims.height, dims.width, start_minutes + i as i64 * span)
        })
        .collect()
}

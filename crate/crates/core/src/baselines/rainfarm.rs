//! Spectral stochastic downscaling: a power-law Gaussian field is
//! exponentiated and rescaled so every coarse tile keeps its mean.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::field::{Dims, FieldSequence};
use crate::error::{Error, Result};
use crate::fft::{fft2, periodogram, signed_freq, RadialBins};

pub const ALPHA_RANGE: (f64, f64) = (1.0, 4.0);
/// Used when the coarse field has too few spectral bins to fit.
pub const ALPHA_FALLBACK: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainFarmParams {
    /// Fixed spectral slope; fitted from the coarse field when `None`.
    pub alpha: Option<f64>,
    pub factor: usize,
    pub seed: u64,
    pub conserve: bool,
}

impl RainFarmParams {
    pub fn new(factor: usize, seed: u64) -> Self {
        Self {
            alpha: None,
            factor,
            seed,
            conserve: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.factor.is_power_of_two() {
            return Err(Error::Config(format!("factor {} is not a power of two", self.factor)));
        }
        if let Some(a) = self.alpha {
            if !a.is_finite() {
                return Err(Error::Config("spectral slope must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Least-squares slope of log radial power against log frequency, negated,
/// over all frames. `None` with fewer than two usable bins.
pub fn fit_spectral_slope(frames: &[Vec<f64>], h: usize, w: usize) -> Option<f64> {
    let bins = RadialBins::new(h, w, (h.min(w) / 2).max(1));
    let mut power = vec![0.0; bins.count];
    for f in frames {
        for (acc, b) in power.iter_mut().zip(bins.average(&periodogram(f, h, w))) {
            *acc += b.unwrap_or(0.0);
        }
    }
    let pts: Vec<(f64, f64)> = bins
        .centres()
        .into_iter()
        .zip(&power)
        .zip(&bins.members)
        .filter(|((_, &p), &m)| m > 0 && p > 0.0)
        .map(|((f, &p), _)| (f.ln(), p.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Zero-mean, unit-variance Gaussian field with power ∝ |k|^(−α).
pub fn power_law_field(alpha: f64, h: usize, w: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..h * w)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    fft2(&mut buf, h, w, false);
    for ky in 0..h {
        for kx in 0..w {
            let fy = signed_freq(ky, h) / h as f64;
            let fx = signed_freq(kx, w) / w as f64;
            let k = (fy * fy + fx * fx).sqrt();
            let a = if k == 0.0 { 0.0 } else { k.powf(-alpha / 2.0) };
            buf[ky * w + kx] *= a;
        }
    }
    fft2(&mut buf, h, w, true);
    let g: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let sd = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / g.len() as f64).sqrt();
    g.into_iter().map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }).collect()
}

/// Downscales linear coarse frames `(N_t, h, w)` by `params.factor`.
/// Returns the fine linear field and the slope used.
pub fn rainfarm_linear(
    coarse: &[f64],
    dims: Dims,
    params: &RainFarmParams,
    rng: &mut impl Rng,
) -> Result<(Dims, Vec<f64>, f64)> {
    params.validate()?;
    if dims.vars != 1 {
        return Err(Error::Shape("RainFARM handles one variable".into()));
    }
    if coarse.len() != dims.len() {
        return Err(Error::Shape(format!("{} values for {dims:?}", coarse.len())));
    }
    if coarse.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Domain("negative or NaN coarse value".into()));
    }
    let k = params.factor;
    let od = dims.scaled(k);
    if coarse.iter().all(|&v| v == 0.0) {
        return Ok((od, vec![0.0; od.len()], params.alpha.unwrap_or(ALPHA_FALLBACK)));
    }
    let (h, w) = (dims.height, dims.width);
    let frames: Vec<Vec<f64>> = coarse.chunks(h * w).map(|c| c.to_vec()).collect();
    let alpha = match params.alpha {
        Some(a) => a,
        None => fit_spectral_slope(&frames, h, w)
            .unwrap_or(ALPHA_FALLBACK)
            .clamp(ALPHA_RANGE.0, ALPHA_RANGE.1),
    };
    let (fh, fw) = (od.height, od.width);
    let mut out = vec![0.0; od.len()];
    for (t, frame) in frames.iter().enumerate() {
        let g = power_law_field(alpha, fh, fw, rng);
        let e: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let global = e.iter().sum::<f64>() / e.len() as f64;
        let dst = &mut out[t * fh * fw..(t + 1) * fh * fw];
        for ty in 0..h {
            for tx in 0..w {
                let c = frame[ty * w + tx];
                let mut s = 0.0;
                for y in ty * k..(ty + 1) * k {
                    for x in tx * k..(tx + 1) * k {
                        s += e[y * fw + x];
                    }
                }
                let scale = if params.conserve { c / (s / (k * k) as f64) } else { c / global };
                for y in ty * k..(ty + 1) * k {
                    for x in tx * k..(tx + 1) * k {
                        dst[y * fw + x] = e[y * fw + x] * scale;
                    }
                }
            }
        }
    }
    Ok((od, out, alpha))
}

/// RainFARM on a unit-interval condition; the result is mapped back to the
/// unit interval with values below the detectable minimum set empty.
pub fn rainfarm(lr: &FieldSequence, params: &RainFarmParams, rng: &mut impl Rng) -> Result<FieldSequence> {
    let linear: Vec<f64> = lr.to_linear()?.into_iter().map(f64::from).collect();
    let (od, fine, _) = rainfarm_linear(&linear, lr.dims, params, rng)?;
    let spec = lr.transform;
    let floor = spec.min_detectable();
    let unit = fine
        .into_iter()
        .map(|r| if r < floor { Ok(0.0) } else { spec.forward_value(r).map(|u| u as f32) })
        .collect::<Result<Vec<_>>>()?;
    let mut out = lr.with_values(od, unit);
    out.pixel_size_km = lr.pixel_size_km / params.factor as f64;
    Ok(out)
}

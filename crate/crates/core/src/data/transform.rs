use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reversible mapping between linear physical values (rain rate, optical
/// thickness) and the unit interval the networks operate on.
///
/// Empty pixels map to 0 and the detectable log-range `[x_min, x_max]` maps
/// affinely onto `[theta, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub theta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub log_base: f64,
    pub empty_value: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            theta: 0.17,
            x_min: 0.1f64.ln(),
            x_max: 100.0f64.ln(),
            log_base: std::f64::consts::E,
            empty_value: 0.0,
        }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta {} outside (0, 1)", self.theta)));
        }
        if !(self.x_min < self.x_max) {
            return Err(Error::Config(format!(
                "x_min {} must be below x_max {}",
                self.x_min, self.x_max
            )));
        }
        if !(self.log_base > 0.0 && self.log_base != 1.0) {
            return Err(Error::Config(format!("invalid log base {}", self.log_base)));
        }
        Ok(())
    }

    fn log(&self, r: f64) -> f64 {
        r.ln() / self.log_base.ln()
    }

    /// Affine image of a non-empty linear value, without clamping.
    pub fn affine(&self, r: f64) -> f64 {
        let x = self.log(r);
        self.theta + (1.0 - self.theta) * (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn forward_value(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::Domain(format!("negative or NaN linear value {r}")));
        }
        if r <= self.empty_value {
            return Ok(0.0);
        }
        Ok(self.affine(r).clamp(self.theta, 1.0))
    }

    pub fn inverse_value(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("unit value {u} outside [0, 1]")));
        }
        if u < self.theta {
            return Ok(self.empty_value);
        }
        let x = self.x_min + (u - self.theta) / (1.0 - self.theta) * (self.x_max - self.x_min);
        Ok(self.log_base.powf(x))
    }

    pub fn forward(&self, linear: &[f32]) -> Result<Vec<f32>> {
        linear
            .iter()
            .map(|&r| self.forward_value(r as f64).map(|u| u as f32))
            .collect()
    }

    pub fn inverse(&self, unit: &[f32]) -> Result<Vec<f32>> {
        unit.iter()
            .map(|&u| self.inverse_value(u as f64).map(|r| r as f32))
            .collect()
    }

    /// Linear value at the lower end of the detectable range.
    pub fn min_detectable(&self) -> f64 {
        self.log_base.powf(self.x_min)
    }

    /// Sets sub-threshold unit values to exactly 0 (they read back as empty).
    pub fn quantize_empty(&self, unit: &mut [f32]) {
        let theta = self.theta as f32;
        for v in unit.iter_mut() {
            if *v < theta {
                *v = 0.0;
            }
        }
    }
}

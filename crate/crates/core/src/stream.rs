//! Frame-by-frame generation over long, possibly gappy series, carrying the
//! recurrent state between frames.

use downscale_autograd::{Shape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::field::{Dims, FieldSequence};
use crate::data::ops::downsample_coarse;
use crate::error::{Error, Result};
use crate::nets::{Binder, Generator, NetworkConfig, NoiseBlock, WeightSet};
use crate::training::stream_rng;

const STREAM_NOISE: u64 = 40;
/// Unit values at or above this count as saturated.
pub const SATURATION_LEVEL: f32 = 0.999;

/// Offsets of a center crop, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Center-crops every frame to the largest multiple of `k` and empties
/// masked pixels. The mask is cropped along.
pub fn prepare_frame(frame: &FieldSequence, k: usize) -> Result<(FieldSequence, Crop)> {
    let d = frame.dims;
    let (h, w) = (d.height / k * k, d.width / k * k);
    if k == 0 || h == 0 || w == 0 {
        return Err(Error::Divisibility {
            h: d.height,
            w: d.width,
            factor: k,
        });
    }
    let crop = Crop {
        top: (d.height - h) / 2,
        left: (d.width - w) / 2,
        height: h,
        width: w,
    };
    let nd = Dims::new(d.steps, h, w, d.vars);
    let mut values = Vec::with_capacity(nd.len());
    for t in 0..d.steps {
        for y in crop.top..crop.top + h {
            let a = d.index(t, y, crop.left, 0);
            values.extend_from_slice(&frame.values[a..a + w * d.vars]);
        }
    }
    let mask = frame.mask.as_ref().map(|m| {
        (crop.top..crop.top + h)
            .flat_map(|y| m[y * d.width + crop.left..y * d.width + crop.left + w].iter().copied())
            .collect::<Vec<bool>>()
    });
    if let Some(m) = &mask {
        for t in 0..nd.steps {
            for (p, &ok) in m.iter().enumerate() {
                if !ok {
                    for v in 0..nd.vars {
                        values[(t * h * w + p) * nd.vars + v] = 0.0;
                    }
                }
            }
        }
    }
    let mut out = frame.with_values(nd, values);
    out.pixel_size_km = frame.pixel_size_km;
    out.mask = mask;
    Ok((out, crop))
}

/// `h ← h_null + (1 − λ)(h − h_null)`; a no-op for `λ = 0`.
pub fn stabilize(h: &Tensor, h_null: &Tensor, lambda_r: f32) -> Result<Tensor> {
    if !(0.0..1.0).contains(&lambda_r) {
        return Err(Error::Config(format!("relaxation {lambda_r} outside [0, 1)")));
    }
    if h.shape() != h_null.shape() {
        return Err(Error::Shape(format!("state {} vs null state {}", h.shape(), h_null.shape())));
    }
    if lambda_r == 0.0 {
        return Ok(h.clone());
    }
    let keep = 1.0 - lambda_r;
    Ok(h.zip_map(h_null, |a, n| n + keep * (a - n)))
}

/// Recurrent state the initialization encoder yields for an all-empty
/// low-res frame of `h × w` with zero noise.
pub fn compute_h_null(net: &NetworkConfig, weights: &WeightSet, h: usize, w: usize) -> Result<Tensor> {
    null_state(net, &Binder::new(weights, false), h, w)
}

fn null_state(net: &NetworkConfig, b: &Binder, h: usize, w: usize) -> Result<Tensor> {
    let g = Generator::new(net, b);
    let lr = Var::constant(Tensor::zeros(Shape::new(1, net.vars, h, w)));
    let z = (net.noise_channels > 0).then(|| Var::constant(NoiseBlock::zeros(net, 1, h, w).values));
    Ok(g.initial_state(&lr, z.as_ref())?.value().clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Nominal frame spacing; longer gaps restart the recurrent state.
    pub dt_minutes: i64,
    pub lambda_r: f32,
    pub amplitude: f32,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            dt_minutes: 10,
            lambda_r: 0.0,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinitEvent {
    pub frame: u64,
    pub timestamp: i64,
    /// Minutes since the previous frame; `None` for the first frame.
    pub gap_minutes: Option<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamFrame {
    pub timestamp: i64,
    /// Generated high-res frame on the unit interval.
    pub unit: FieldSequence,
    /// The same frame in linear units.
    pub linear: Vec<f32>,
    pub crop: Crop,
    pub reinitialized: bool,
    /// Share of pixels at the top of the output range.
    pub saturated_fraction: f64,
}

pub struct Streamer<'a> {
    net: &'a NetworkConfig,
    binder: Binder,
    cfg: StreamConfig,
    state: Option<Tensor>,
    h_null: Option<Tensor>,
    last: Option<i64>,
    frames: u64,
    pub events: Vec<ReinitEvent>,
}

impl<'a> Streamer<'a> {
    pub fn new(net: &'a NetworkConfig, weights: &WeightSet, cfg: StreamConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.lambda_r) {
            return Err(Error::Config(format!("relaxation {} outside [0, 1)", cfg.lambda_r)));
        }
        if cfg.dt_minutes <= 0 {
            return Err(Error::Config("frame spacing must be positive".into()));
        }
        Ok(Self {
            net,
            binder: Binder::new(weights, false),
            cfg,
            state: None,
            h_null: None,
            last: None,
            frames: 0,
            events: Vec::new(),
        })
    }

    /// Noise for the `index`-th frame of the stream.
    pub fn frame_noise(net: &NetworkConfig, seed: u64, index: u64, h: usize, w: usize, amplitude: f32) -> Option<Tensor> {
        (net.noise_channels > 0)
            .then(|| NoiseBlock::sample(&mut stream_rng(seed, STREAM_NOISE, index), net, 1, h, w, amplitude).scaled())
    }

    /// Processes one high-res observation (a single-frame sequence).
    pub fn push(&mut self, frame: &FieldSequence) -> Result<StreamFrame> {
        if frame.dims.steps != 1 {
            return Err(Error::Shape("stream frames must hold one time step".into()));
        }
        let ts = frame.timestamps[0];
        let gap = self.last.map(|l| ts - l);
        if let Some(g) = gap {
            if g <= 0 {
                return Err(Error::Order(format!("frame at {ts} does not follow {}", ts - g)));
            }
        }
        let k = self.net.factor();
        let (frame, crop) = prepare_frame(frame, k)?;
        let (ld, lv) = downsample_coarse(&frame.to_linear()?, frame.dims, k, &frame.transform)?;
        let lr = frame.with_values(ld, lv).to_tensor();
        let geometry_changed = self
            .state
            .as_ref()
            .is_some_and(|s| s.shape().h != ld.height || s.shape().w != ld.width);
        let restart = self.state.is_none() || geometry_changed || gap.is_some_and(|g| g > self.cfg.dt_minutes);
        if restart {
            log::info!("reinitializing recurrent state at frame {} (t = {ts}, gap {gap:?})", self.frames);
            self.events.push(ReinitEvent {
                frame: self.frames,
                timestamp: ts,
                gap_minutes: gap,
            });
        }
        let g = Generator::new(self.net, &self.binder);
        let z = Self::frame_noise(self.net, self.cfg.seed, self.frames, ld.height, ld.width, self.cfg.amplitude)
            .map(Var::constant);
        let init = if restart { None } else { self.state.clone().map(Var::constant) };
        let (y, h) = g.forward(&Var::constant(lr), z.as_ref(), 1, init.as_ref())?;
        let mut h = h.value().clone();
        if self.cfg.lambda_r > 0.0 {
            if self.h_null.as_ref().map(|n| n.shape()) != Some(h.shape()) {
                self.h_null = Some(null_state(self.net, &self.binder, ld.height, ld.width)?);
            }
            h = stabilize(&h, self.h_null.as_ref().expect("null state set above"), self.cfg.lambda_r)?;
        }
        self.state = Some(h);
        self.last = Some(ts);
        self.frames += 1;

        let y = y.value();
        let d = frame.dims;
        let mut unit = vec![0.0f32; d.len()];
        for yy in 0..d.height {
            for x in 0..d.width {
                for v in 0..d.vars {
                    unit[d.index(0, yy, x, v)] = y.at(0, v, yy, x);
                }
            }
        }
        let saturated = unit.iter().filter(|&&u| u >= SATURATION_LEVEL).count() as f64 / unit.len() as f64;
        frame.transform.quantize_empty(&mut unit);
        if let Some(m) = &frame.mask {
            for (p, &ok) in m.iter().enumerate() {
                if !ok {
                    for v in 0..d.vars {
                        unit[p * d.vars + v] = 0.0;
                    }
                }
            }
        }
        let mut out = frame.with_values(d, unit);
        out.mask = frame.mask.clone();
        let linear = out.to_linear()?;
        Ok(StreamFrame {
            timestamp: ts,
            unit: out,
            linear,
            crop,
            reinitialized: restart,
            saturated_fraction: saturated,
        })
    }

    pub fn state(&self) -> Option<&Tensor> {
        self.state.as_ref()
    }
}

/// Runs a whole series through a fresh streamer.
pub fn stream(
    net: &NetworkConfig,
    weights: &WeightSet,
    frames: &[FieldSequence],
    cfg: StreamConfig,
) -> Result<(Vec<StreamFrame>, Vec<ReinitEvent>)> {
    let mut s = Streamer::new(net, weights, cfg)?;
    let out = frames.iter().map(|f| s.push(f)).collect::<Result<Vec<_>>>()?;
    Ok((out, s.events))
}

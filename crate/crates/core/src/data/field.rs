use downscale_autograd::{Shape, Tensor};

use super::transform::TransformSpec;
use crate::error::{Error, Result};

/// Sizes of a `(N_t, h, w, N_v)` field sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    pub vars: usize,
}

impl Dims {
    pub const fn new(steps: usize, height: usize, width: usize, vars: usize) -> Self {
        Self {
            steps,
            height,
            width,
            vars,
        }
    }

    pub const fn len(&self) -> usize {
        self.steps * self.height * self.width * self.vars
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn frame_len(&self) -> usize {
        self.height * self.width * self.vars
    }

    pub const fn index(&self, t: usize, y: usize, x: usize, v: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.vars + v
    }

    pub const fn scaled(&self, k: usize) -> Self {
        Self::new(self.steps, self.height * k, self.width * k, self.vars)
    }
}

/// A time series of 2-D fields on the unit interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSequence {
    pub dims: Dims,
    /// Row-major `(N_t, h, w, N_v)`.
    pub values: Vec<f32>,
    /// Minutes since an arbitrary epoch, strictly increasing.
    pub timestamps: Vec<i64>,
    pub pixel_size_km: f64,
    pub transform: TransformSpec,
    /// Valid pixels (`h × w`, row-major), when some are unavailable.
    pub mask: Option<Vec<bool>>,
}

impl FieldSequence {
    pub fn new(
        dims: Dims,
        values: Vec<f32>,
        timestamps: Vec<i64>,
        pixel_size_km: f64,
        transform: TransformSpec,
    ) -> Result<Self> {
        let seq = Self {
            dims,
            values,
            timestamps,
            pixel_size_km,
            transform,
            mask: None,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Regularly spaced timestamps starting at `start`.
    pub fn regular_times(start: i64, dt_minutes: i64, steps: usize) -> Vec<i64> {
        (0..steps as i64).map(|i| start + i * dt_minutes).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.steps == 0 || d.height == 0 || d.width == 0 || d.vars == 0 {
            return Err(Error::Shape(format!("empty dimension in {d:?}")));
        }
        if self.values.len() != d.len() {
            return Err(Error::Shape(format!(
                "{} values for dims {:?}",
                self.values.len(),
                d
            )));
        }
        if self.timestamps.len() != d.steps {
            return Err(Error::Shape(format!(
                "{} timestamps for {} steps",
                self.timestamps.len(),
                d.steps
            )));
        }
        if self.timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Order("timestamps must be strictly increasing".into()));
        }
        if let Some(bad) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("value {bad} outside [0, 1]")));
        }
        if let Some(m) = &self.mask {
            if m.len() != d.height * d.width {
                return Err(Error::Shape("mask size differs from frame size".into()));
            }
        }
        Ok(())
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.frame_len();
        &self.values[t * n..(t + 1) * n]
    }

    /// Linear physical values.
    pub fn to_linear(&self) -> Result<Vec<f32>> {
        self.transform.inverse(&self.values)
    }

    /// Sequence with the same metadata and new values/dims.
    pub fn with_values(&self, dims: Dims, values: Vec<f32>) -> FieldSequence {
        FieldSequence {
            dims,
            values,
            timestamps: self.timestamps.clone(),
            pixel_size_km: self.pixel_size_km,
            transform: self.transform,
            mask: None,
        }
    }

    /// Time-major NCHW tensor with a single sample: `[N_t, N_v, h, w]`.
    pub fn to_tensor(&self) -> Tensor {
        stack_tensor(&[self])
    }
}

/// Packs samples into a time-major batch `[N_t · N, N_v, h, w]`; item
/// `t · N + n` is frame `t` of sample `n`.
pub fn stack_tensor(samples: &[&FieldSequence]) -> Tensor {
    let d = samples[0].dims;
    let n = samples.len();
    let shape = Shape::new(d.steps * n, d.vars, d.height, d.width);
    let mut out = vec![0.0f32; shape.len()];
    for (si, s) in samples.iter().enumerate() {
        assert_eq!(s.dims, d, "samples in a batch must share dimensions");
        for t in 0..d.steps {
            let item = t * n + si;
            for y in 0..d.height {
                for x in 0..d.width {
                    for v in 0..d.vars {
                        out[((item * d.vars + v) * d.height + y) * d.width + x] =
                            s.values[d.index(t, y, x, v)];
                    }
                }
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Inverse of [`stack_tensor`]: values of sample `sample` in `(N_t, h, w, N_v)` order.
pub fn unstack_tensor(t: &Tensor, samples: usize, sample: usize) -> (Dims, Vec<f32>) {
    let s = t.shape();
    let steps = s.n / samples;
    let d = Dims::new(steps, s.h, s.w, s.c);
    let mut out = vec![0.0f32; d.len()];
    for ti in 0..steps {
        let item = ti * samples + sample;
        for v in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    out[d.index(ti, y, x, v)] = t.at(item, v, y, x);
                }
            }
        }
    }
    (d, out)
}

/// High-resolution truth paired with its low-resolution condition.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePair {
    pub hr: FieldSequence,
    pub lr: FieldSequence,
    pub factor: usize,
}

impl SequencePair {
    pub fn new(hr: FieldSequence, lr: FieldSequence, factor: usize) -> Result<Self> {
        let p = Self { hr, lr, factor };
        p.validate()?;
        Ok(p)
    }

    /// Derives the condition by tile-averaging the linear values of `hr`.
    pub fn from_high_res(hr: FieldSequence, factor: usize) -> Result<Self> {
        let linear = hr.to_linear()?;
        let (ld, lv) = super::ops::downsample_coarse(&linear, hr.dims, factor, &hr.transform)?;
        let mut lr = hr.with_values(ld, lv);
        lr.pixel_size_km = hr.pixel_size_km * factor as f64;
        Self::new(hr, lr, factor)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, l, k) = (self.hr.dims, self.lr.dims, self.factor);
        if k == 0 || h != l.scaled(k) {
            return Err(Error::Shape(format!(
                "high-res {h:?} is not {k}x low-res {l:?}"
            )));
        }
        if self.hr.timestamps != self.lr.timestamps {
            return Err(Error::Metadata("pair timestamps differ".into()));
        }
        Ok(())
    }
}

use crate::data::field::{Dims, FieldSequence};
use crate::error::{Error, Result};

const LOBES: f64 = 3.0;

pub fn lanczos_kernel(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.abs() < LOBES {
        let px = std::f64::consts::PI * x;
        LOBES * px.sin() * (px / LOBES).sin() / (px * px)
    } else {
        0.0
    }
}

/// Source indices and normalized weights for each of the `k·n` outputs
/// along one axis. Output pixel `i` sits at `(i + ½)/k − ½` in source
/// coordinates; indices beyond the edge are clamped.
fn axis_weights(n: usize, k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..n * k)
        .map(|i| {
            let x = (i as f64 + 0.5) / k as f64 - 0.5;
            let base = x.floor() as i64;
            let taps: Vec<(usize, f64)> = (base - 2..=base + 3)
                .map(|j| {
                    let w = lanczos_kernel(x - j as f64);
                    (j.clamp(0, n as i64 - 1) as usize, w)
                })
                .filter(|(_, w)| *w != 0.0)
                .collect();
            let s: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(j, w)| (j, w / s)).collect()
        })
        .collect()
}

/// Separable Lanczos-3 resampling of every frame by `k`, without clamping.
pub fn lanczos_upsample_raw(values: &[f32], dims: Dims, k: usize) -> Result<(Dims, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Config("upsampling factor must be positive".into()));
    }
    if values.len() != dims.len() {
        return Err(Error::Shape(format!("{} values for {dims:?}", values.len())));
    }
    let od = dims.scaled(k);
    let wy = axis_weights(dims.height, k);
    let wx = axis_weights(dims.width, k);
    let mut out = vec![0.0; od.len()];
    let mut tmp = vec![0.0; dims.height * od.width];
    for t in 0..dims.steps {
        for v in 0..dims.vars {
            for y in 0..dims.height {
                for (x, taps) in wx.iter().enumerate() {
                    tmp[y * od.width + x] = taps.iter().map(|&(j, w)| w * values[dims.index(t, y, j, v)] as f64).sum();
                }
            }
            for (y, taps) in wy.iter().enumerate() {
                for x in 0..od.width {
                    out[od.index(t, y, x, v)] = taps.iter().map(|&(j, w)| w * tmp[j * od.width + x]).sum();
                }
            }
        }
    }
    Ok((od, out))
}

/// Lanczos-3 upsampling of a unit-interval sequence, clamped to `[0, 1]`.
pub fn lanczos_upsample(lr: &FieldSequence, k: usize) -> Result<FieldSequence> {
    let (od, raw) = lanczos_upsample_raw(&lr.values, lr.dims, k)?;
    let mut out = lr.with_values(od, raw.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect());
    out.pixel_size_km = lr.pixel_size_km / k as f64;
    Ok(out)
}

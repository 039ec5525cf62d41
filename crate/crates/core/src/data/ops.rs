use super::field::{Dims, SequencePair};
use super::transform::TransformSpec;
use crate::error::{Error, Result};

/// Tile-averages linear values over non-overlapping `k × k` tiles and maps
/// the means to the unit interval. Means whose image falls below `theta`
/// are truncated to 0.
pub fn downsample_coarse(
    hr_linear: &[f32],
    dims: Dims,
    k: usize,
    spec: &TransformSpec,
) -> Result<(Dims, Vec<f32>)> {
    if k == 0 || dims.height % k != 0 || dims.width % k != 0 {
        return Err(Error::Divisibility {
            h: dims.height,
            w: dims.width,
            factor: k,
        });
    }
    if hr_linear.len() != dims.len() {
        return Err(Error::Shape(format!(
            "{} values for dims {dims:?}",
            hr_linear.len()
        )));
    }
    let ld = Dims::new(dims.steps, dims.height / k, dims.width / k, dims.vars);
    let mut out = vec![0.0f32; ld.len()];
    let inv = 1.0 / (k * k) as f64;
    for t in 0..ld.steps {
        for ty in 0..ld.height {
            for tx in 0..ld.width {
                for v in 0..ld.vars {
                    let mut acc = 0.0f64;
                    for y in ty * k..(ty + 1) * k {
                        for x in tx * k..(tx + 1) * k {
                            let r = hr_linear[dims.index(t, y, x, v)] as f64;
                            if r.is_nan() || r < 0.0 {
                                return Err(Error::Domain(format!("negative linear value {r}")));
                            }
                            acc += r;
                        }
                    }
                    out[ld.index(t, ty, tx, v)] = tile_value(acc * inv, spec) as f32;
                }
            }
        }
    }
    Ok((ld, out))
}

fn tile_value(mean: f64, spec: &TransformSpec) -> f64 {
    if mean <= spec.empty_value {
        return 0.0;
    }
    let u = spec.affine(mean);
    // A mean at the detectable minimum may land an ulp under theta.
    if u < spec.theta - 1e-9 {
        0.0
    } else {
        u.clamp(spec.theta, 1.0)
    }
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(4σ)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as i64 {
        j = period - j;
    }
    j as usize
}

/// Separable Gaussian filter applied per frame and variable with reflect
/// boundaries. `sigma = 0` returns the input unchanged.
///
/// Reflection does not conserve the frame total exactly; mass within `4σ` of
/// an edge can shift by up to a few percent of that edge band.
pub fn gaussian_smooth(values: &[f32], dims: Dims, sigma: f64) -> Result<Vec<f32>> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("negative smoothing sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as i64;
    let (h, w) = (dims.height, dims.width);
    let mut out = vec![0.0f32; values.len()];
    let mut tmp = vec![0.0f64; h * w];
    for t in 0..dims.steps {
        for v in 0..dims.vars {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (j, tap) in taps.iter().enumerate() {
                        let sx = reflect(x as i64 + j as i64 - r, w);
                        acc += tap * values[dims.index(t, y, sx, v)] as f64;
                    }
                    tmp[y * w + x] = acc;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (j, tap) in taps.iter().enumerate() {
                        let sy = reflect(y as i64 + j as i64 - r, h);
                        acc += tap * tmp[sy * w + x];
                    }
                    out[dims.index(t, y, x, v)] = acc as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Rotates every frame by `quarter_turns × 90°` counter-clockwise, then
/// mirrors left-right when `mirror` is set.
pub fn rotate_mirror(values: &[f32], dims: Dims, quarter_turns: u8, mirror: bool) -> (Dims, Vec<f32>) {
    let q = quarter_turns % 4;
    let (h, w) = (dims.height, dims.width);
    let nd = if q % 2 == 1 {
        Dims::new(dims.steps, w, h, dims.vars)
    } else {
        dims
    };
    let mut out = vec![0.0f32; values.len()];
    for t in 0..dims.steps {
        for y in 0..nd.height {
            for x in 0..nd.width {
                let xm = if mirror { nd.width - 1 - x } else { x };
                let (sy, sx) = match q {
                    0 => (y, xm),
                    1 => (xm, w - 1 - y),
                    2 => (h - 1 - y, w - 1 - xm),
                    _ => (h - 1 - xm, y),
                };
                for v in 0..dims.vars {
                    out[nd.index(t, y, x, v)] = values[dims.index(t, sy, sx, v)];
                }
            }
        }
    }
    (nd, out)
}

fn rotate_mask(mask: &[bool], h: usize, w: usize, q: u8, mirror: bool) -> Vec<bool> {
    let as_f: Vec<f32> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let (_, r) = rotate_mirror(&as_f, Dims::new(1, h, w, 1), q, mirror);
    r.into_iter().map(|v| v > 0.5).collect()
}

/// Applies one rotation/mirror to every frame of both members of a pair.
pub fn augment(pair: &SequencePair, quarter_turns: u8, mirror: bool) -> Result<SequencePair> {
    if quarter_turns > 3 {
        return Err(Error::Domain(format!("rotation {quarter_turns} not in 0..=3")));
    }
    let hd = pair.hr.dims;
    if quarter_turns % 2 == 1 && hd.height != hd.width {
        return Err(Error::Shape(format!(
            "quarter-turn rotation needs square frames, got {}x{}",
            hd.height, hd.width
        )));
    }
    let apply = |s: &super::field::FieldSequence| {
        let (d, v) = rotate_mirror(&s.values, s.dims, quarter_turns, mirror);
        let mut out = s.with_values(d, v);
        out.pixel_size_km = s.pixel_size_km;
        out.mask = s
            .mask
            .as_ref()
            .map(|m| rotate_mask(m, s.dims.height, s.dims.width, quarter_turns, mirror));
        out
    };
    SequencePair::new(apply(&pair.hr), apply(&pair.lr), pair.factor)
}

/// Cuts the low-res window `(y, x, h, w)` and the matching high-res window
/// out of every frame of a pair.
pub fn crop_pair(pair: &SequencePair, y: usize, x: usize, h: usize, w: usize) -> Result<SequencePair> {
    let ld = pair.lr.dims;
    if h == 0 || w == 0 || y + h > ld.height || x + w > ld.width {
        return Err(Error::Shape(format!(
            "crop {h}x{w} at ({y}, {x}) outside {}x{}",
            ld.height, ld.width
        )));
    }
    let cut = |s: &super::field::FieldSequence, k: usize| {
        let d = s.dims;
        let nd = Dims::new(d.steps, h * k, w * k, d.vars);
        let mut v = Vec::with_capacity(nd.len());
        for t in 0..d.steps {
            for r in y * k..(y + h) * k {
                let a = d.index(t, r, x * k, 0);
                v.extend_from_slice(&s.values[a..a + w * k * d.vars]);
            }
        }
        let mut out = s.with_values(nd, v);
        out.pixel_size_km = s.pixel_size_km;
        out.mask = s.mask.as_ref().map(|m| {
            (y * k..(y + h) * k)
                .flat_map(|r| m[r * d.width + x * k..r * d.width + (x + w) * k].iter().copied())
                .collect()
        });
        out
    };
    SequencePair::new(cut(&pair.hr, pair.factor), cut(&pair.lr, 1), pair.factor)
}

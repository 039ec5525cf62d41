//! 2-D FFT helpers and radially averaged power spectra.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D DFT of a row-major `h × w` array (unnormalized both ways).
pub fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    assert_eq!(data.len(), h * w);
    let mut planner = FftPlanner::<f64>::new();
    let row = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for r in data.chunks_mut(w) {
        row.process(r);
    }
    let col = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            buf[y] = data[y * w + x];
        }
        col.process(&mut buf);
        for y in 0..h {
            data[y * w + x] = buf[y];
        }
    }
}

/// Signed frequency index of DFT bin `k` out of `n`.
pub fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Radius of bin `(ky, kx)` in cycles per pixel.
pub fn radial_frequency(ky: usize, kx: usize, h: usize, w: usize) -> f64 {
    let fy = signed_freq(ky, h) / h as f64;
    let fx = signed_freq(kx, w) / w as f64;
    (fy * fy + fx * fx).sqrt()
}

/// Equal-width radial bins over `(0, 0.5]` cycles per pixel. The DC term and
/// the corners beyond 0.5 are left out.
#[derive(Clone, Debug)]
pub struct RadialBins {
    pub count: usize,
    /// Bin index per DFT bin, `None` when excluded.
    assignment: Vec<Option<usize>>,
    pub members: Vec<usize>,
}

impl RadialBins {
    pub fn new(h: usize, w: usize, count: usize) -> Self {
        let count = count.max(1);
        let mut members = vec![0; count];
        let mut assignment = Vec::with_capacity(h * w);
        for ky in 0..h {
            for kx in 0..w {
                let r = radial_frequency(ky, kx, h, w);
                let b = if r == 0.0 || r > 0.5 {
                    None
                } else {
                    Some(((r / 0.5 * count as f64).ceil() as usize).clamp(1, count) - 1)
                };
                if let Some(b) = b {
                    members[b] += 1;
                }
                assignment.push(b);
            }
        }
        Self {
            count,
            assignment,
            members,
        }
    }

    /// Centre frequency of each bin in cycles per pixel.
    pub fn centres(&self) -> Vec<f64> {
        (0..self.count)
            .map(|b| (b as f64 + 0.5) * 0.5 / self.count as f64)
            .collect()
    }

    /// Mean power per bin; empty bins are `None`.
    pub fn average(&self, power: &[f64]) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; self.count];
        for (p, b) in power.iter().zip(&self.assignment) {
            if let Some(b) = b {
                sums[*b] += p;
            }
        }
        sums.iter()
            .zip(&self.members)
            .map(|(s, &m)| (m > 0).then(|| s / m as f64))
            .collect()
    }
}

/// Periodogram `|F|² / (h·w)` of a real frame.
pub fn periodogram(frame: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, h, w, false);
    let n = (h * w) as f64;
    buf.iter().map(|c| c.norm_sqr() / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let (h, w) = (6, 5);
        let orig: Vec<Complex64> = (0..h * w).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let mut d = orig.clone();
        fft2(&mut d, h, w, false);
        fft2(&mut d, h, w, true);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a / (h * w) as f64 - b).norm() < 1e-9);
        }
    }

    #[test]
    fn bins_cover_nonzero_frequencies_inside_nyquist_circle() {
        let b = RadialBins::new(16, 16, 8);
        assert!(b.members.iter().all(|&m| m > 0));
        let total: usize = b.members.iter().sum();
        let expected = (0..16)
            .flat_map(|y| (0..16).map(move |x| (y, x)))
            .filter(|&(y, x)| {
                let r = radial_frequency(y, x, 16, 16);
                r > 0.0 && r <= 0.5
            })
            .count();
        assert_eq!(total, expected);
    }
}

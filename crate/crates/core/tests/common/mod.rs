//! Slow, direct reference implementations shared by the integration tests
//! and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `∫ (F_ens(x) − 1{x ≥ obs})² dx`, summed exactly over the intervals
/// between sorted breakpoints, where the integrand is constant.
pub fn crps_integral(members: &[f64], obs: f64) -> f64 {
    let mut pts: Vec<f64> = members.to_vec();
    pts.push(obs);
    pts.sort_by(|a, b| a.total_cmp(b));
    let m = members.len() as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        let f = members.iter().filter(|&&x| x <= mid).count() as f64 / m;
        let step = if mid >= obs { 1.0 } else { 0.0 };
        total += (f - step).powi(2) * (b - a);
    }
    total
}

/// Midpoint-rule quadrature of the same integral on a fine grid.
pub fn crps_quadrature(members: &[f64], obs: f64, cells: usize) -> f64 {
    let lo = members.iter().copied().fold(obs, f64::min) - 1.0;
    let hi = members.iter().copied().fold(obs, f64::max) + 1.0;
    let dx = (hi - lo) / cells as f64;
    let m = members.len() as f64;
    (0..cells)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * dx;
            let f = members.iter().filter(|&&v| v <= x).count() as f64 / m;
            let step = if x >= obs { 1.0 } else { 0.0 };
            (f - step).powi(2) * dx
        })
        .sum()
}

/// Kolmogorov-Smirnov distance between the rank counts' CDF and the
/// discrete uniform CDF over `0..=n_p`, evaluated at every support point.
pub fn ks_direct(ranks: &[usize], n_p: usize) -> f64 {
    let m = ranks.len() as f64;
    (0..=n_p)
        .map(|k| {
            let emp = ranks.iter().filter(|&&r| r <= k).count() as f64 / m;
            (emp - (k + 1) as f64 / (n_p + 1) as f64).abs()
        })
        .fold(0.0, f64::max)
}

/// `D_KL(U ‖ Q)` with `Q` the rank histogram plus one count per bin.
pub fn kl_direct(ranks: &[usize], n_p: usize) -> f64 {
    let bins = n_p + 1;
    let m = ranks.len() as f64;
    (0..bins)
        .map(|k| {
            let q = (ranks.iter().filter(|&&r| r == k).count() as f64 + 1.0) / (m + bins as f64);
            let p = 1.0 / bins as f64;
            p * (p / q).ln()
        })
        .sum()
}

pub fn outliers_direct(ranks: &[usize], n_p: usize) -> f64 {
    ranks.iter().filter(|&&r| r == 0 || r == n_p).count() as f64 / ranks.len() as f64
}

/// `|DFT|² / (h·w)` by the defining double sum.
pub fn periodogram_direct(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ph = -2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                    re += img[y * w + x] * ph.cos();
                    im += img[y * w + x] * ph.sin();
                }
            }
            out[ky * w + kx] = (re * re + im * im) / (h * w) as f64;
        }
    }
    out
}

fn wrapped(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Frame-averaged radial spectrum over `min(h, w)/2` bins of equal width on
/// `(0, 0.5]` cycles per pixel; DC and corners beyond 0.5 excluded.
/// Bins holding no DFT frequency are `None`.
pub fn radial_spectrum_direct(frames: &[Vec<f64>], h: usize, w: usize) -> Vec<Option<f64>> {
    let nb = (h.min(w) / 2).max(1);
    let mut acc = vec![None; nb];
    for f in frames {
        let p = periodogram_direct(f, h, w);
        let mut sums = vec![0.0; nb];
        let mut counts = vec![0usize; nb];
        for ky in 0..h {
            for kx in 0..w {
                let fy = wrapped(ky, h) / h as f64;
                let fx = wrapped(kx, w) / w as f64;
                let r = (fy * fy + fx * fx).sqrt();
                if r == 0.0 || r > 0.5 {
                    continue;
                }
                let mut b = 0;
                while r > (b + 1) as f64 * 0.5 / nb as f64 {
                    b += 1;
                }
                sums[b] += p[ky * w + kx];
                counts[b] += 1;
            }
        }
        for b in 0..nb {
            if counts[b] > 0 {
                *acc[b].get_or_insert(0.0) += sums[b] / counts[b] as f64 / frames.len() as f64;
            }
        }
    }
    acc
}

pub fn lsd_direct(real: &[Vec<f64>], gen: &[Vec<f64>], h: usize, w: usize) -> f64 {
    let a = radial_spectrum_direct(real, h, w);
    let b = radial_spectrum_direct(gen, h, w);
    let terms: Vec<f64> = a
        .iter()
        .zip(&b)
        .filter_map(|(p, q)| Some((10.0 * (p.as_ref()?.max(1e-12) / q.as_ref()?.max(1e-12)).log10()).powi(2)))
        .collect();
    (terms.iter().sum::<f64>() / terms.len() as f64).sqrt()
}

/// Single-scale SSIM terms with the 11-tap, σ = 1.5 Gaussian window applied
/// as a full 2-D kernel at every valid position.
fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64) {
    let n = 11;
    let g: Vec<f64> = (0..n).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (mut ssim, mut cs, mut count) = (0.0, 0.0, 0.0);
    for y in 0..=h - n {
        for x in 0..=w - n {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let k = g[i] * g[j];
                    ma += k * a[(y + i) * w + x + j];
                    mb += k * b[(y + i) * w + x + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let k = g[i] * g[j];
                    let da = a[(y + i) * w + x + j] - ma;
                    let db = b[(y + i) * w + x + j] - mb;
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            let c = (2.0 * cov + c2) / (va + vb + c2);
            ssim += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * c;
            cs += c;
            count += 1.0;
        }
    }
    (ssim / count, cs / count)
}

/// MS-SSIM over `scales` levels of 2×2 averaging, weights renormalized.
pub fn ms_ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize, scales: usize) -> f64 {
    let weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let total: f64 = weights[..scales].iter().sum();
    let (mut a, mut b, mut h, mut w) = (a.to_vec(), b.to_vec(), h, w);
    let mut out = 1.0f64;
    for (j, wt) in weights[..scales].iter().enumerate() {
        let (s, c) = ssim_direct(&a, &b, h, w);
        let term = if j + 1 == scales { s } else { c };
        out *= term.max(0.0).powf(wt / total);
        let shrink = |img: &[f64]| -> Vec<f64> {
            let mut o = Vec::new();
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    o.push(
                        (img[2 * y * w + 2 * x]
                            + img[2 * y * w + 2 * x + 1]
                            + img[(2 * y + 1) * w + 2 * x]
                            + img[(2 * y + 1) * w + 2 * x + 1])
                            / 4.0,
                    );
                }
            }
            o
        };
        let (na, nb) = (shrink(&a), shrink(&b));
        a = na;
        b = nb;
        h /= 2;
        w /= 2;
    }
    out.min(1.0)
}

//! Image and ensemble verification metrics. Inputs are unit-interval fields.

use rand::Rng;

use crate::data::field::Dims;
use crate::error::{Error, Result};
use crate::fft::{periodogram, RadialBins};

/// Frame `t`, variable `v` as a row-major `h × w` plane.
pub fn plane(values: &[f32], dims: Dims, t: usize, v: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims.height * dims.width);
    for y in 0..dims.height {
        for x in 0..dims.width {
            out.push(values[dims.index(t, y, x, v)] as f64);
        }
    }
    out
}

fn same_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("cannot compare {} and {} values", a.len(), b.len())));
    }
    Ok(())
}

pub fn rmse(truth: &[f32], member: &[f32]) -> Result<f64> {
    same_len(truth, member)?;
    let s: f64 = truth
        .iter()
        .zip(member)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok((s / truth.len() as f64).sqrt())
}

pub fn mae(truth: &[f32], member: &[f32]) -> Result<f64> {
    same_len(truth, member)?;
    let s: f64 = truth.iter().zip(member).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
    Ok(s / truth.len() as f64)
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Scales usable on an `h × w` image: the coarsest level must still hold
/// one full window. At most five.
pub fn ms_ssim_scales(h: usize, w: usize) -> usize {
    let mut m = 0;
    let mut d = h.min(w);
    while m < MS_SSIM_WEIGHTS.len() && d >= SSIM_WINDOW {
        m += 1;
        d /= 2;
    }
    m
}

fn window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering with the SSIM window.
fn filter_valid(img: &[f64], h: usize, w: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = win.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|k| win[k] * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| win[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean luminance-contrast-structure product and mean contrast-structure term.
fn ssim_terms(a: &[f64], b: &[f64], h: usize, w: usize, win: &[f64]) -> (f64, f64) {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let (mu_a, _, _) = filter_valid(a, h, w, win);
    let (mu_b, _, _) = filter_valid(b, h, w, win);
    let (aa, _, _) = filter_valid(&prod(&|x, _| x * x), h, w, win);
    let (bb, _, _) = filter_valid(&prod(&|_, y| y * y), h, w, win);
    let (ab, _, _) = filter_valid(&prod(&|x, y| x * y), h, w, win);
    let n = mu_a.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let c = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

fn halve(img: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let s = img[2 * y * w + 2 * x]
                + img[2 * y * w + 2 * x + 1]
                + img[(2 * y + 1) * w + 2 * x]
                + img[(2 * y + 1) * w + 2 * x + 1];
            out.push(s / 4.0);
        }
    }
    (out, oh, ow)
}

/// MS-SSIM of two `h × w` planes over `scales` levels. The leading weights
/// are renormalized when fewer than five scales are used; negative
/// contrast terms count as zero.
pub fn ms_ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, scales: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::Shape("plane size differs from h x w".into()));
    }
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() || ms_ssim_scales(h, w) < scales {
        return Err(Error::Shape(format!(
            "{h}x{w} image too small for {scales} MS-SSIM scales; use at most {}",
            ms_ssim_scales(h, w)
        )));
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let win = window();
    let (mut a, mut b, mut h, mut w) = (a.to_vec(), b.to_vec(), h, w);
    let mut out = 1.0;
    for (j, wt) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b, h, w, &win);
        let term = if j + 1 == scales { ssim } else { cs };
        out *= term.max(0.0).powf(wt / total);
        if j + 1 < scales {
            let (na, nh, nw) = halve(&a, h, w);
            let (nb, _, _) = halve(&b, h, w);
            (a, b, h, w) = (na, nb, nh, nw);
        }
    }
    Ok(out.clamp(0.0, 1.0))
}

/// MS-SSIM averaged over frames and variables, with as many scales as the
/// frame size allows.
pub fn ms_ssim(truth: &[f32], member: &[f32], dims: Dims) -> Result<f64> {
    same_len(truth, member)?;
    let scales = ms_ssim_scales(dims.height, dims.width);
    if scales == 0 {
        return Err(Error::Shape(format!(
            "{}x{} image smaller than the {SSIM_WINDOW}-pixel MS-SSIM window",
            dims.height, dims.width
        )));
    }
    let mut acc = 0.0;
    for t in 0..dims.steps {
        for v in 0..dims.vars {
            let a = plane(truth, dims, t, v);
            let b = plane(member, dims, t, v);
            acc += ms_ssim_plane(&a, &b, dims.height, dims.width, scales)?;
        }
    }
    Ok(acc / (dims.steps * dims.vars) as f64)
}

/// Radially binned power spectrum averaged over the frames of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEstimate {
    /// Bin centres, cycles per pixel.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
}

pub const POWER_FLOOR: f64 = 1e-12;

pub fn mean_spectrum(values: &[f32], dims: Dims) -> Result<SpectrumEstimate> {
    if values.len() != dims.len() || dims.is_empty() {
        return Err(Error::Shape("spectrum input does not match dims".into()));
    }
    let bins = RadialBins::new(dims.height, dims.width, (dims.height.min(dims.width) / 2).max(1));
    let mut power = vec![0.0; bins.count];
    let frames = (dims.steps * dims.vars) as f64;
    for t in 0..dims.steps {
        for v in 0..dims.vars {
            let p = periodogram(&plane(values, dims, t, v), dims.height, dims.width);
            for (acc, b) in power.iter_mut().zip(bins.average(&p)) {
                *acc += b.unwrap_or(0.0) / frames;
            }
        }
    }
    let keep: Vec<bool> = bins.members.iter().map(|&m| m > 0).collect();
    let frequencies = bins
        .centres()
        .into_iter()
        .zip(&keep)
        .filter_map(|(f, &k)| k.then_some(f))
        .collect();
    let power = power
        .into_iter()
        .zip(&keep)
        .filter_map(|(p, &k)| k.then_some(p.max(POWER_FLOOR)))
        .collect();
    Ok(SpectrumEstimate { frequencies, power })
}

/// Log spectral distance in dB between two spectra.
pub fn lsd_spectra(real: &SpectrumEstimate, gen: &SpectrumEstimate) -> Result<f64> {
    if real.power.len() != gen.power.len() || real.power.is_empty() {
        return Err(Error::Shape("spectra have different bins".into()));
    }
    let s: f64 = real
        .power
        .iter()
        .zip(&gen.power)
        .map(|(r, g)| (10.0 * (r / g).log10()).powi(2))
        .sum();
    Ok((s / real.power.len() as f64).sqrt())
}

pub fn lsd(truth: &[f32], member: &[f32], dims: Dims) -> Result<f64> {
    same_len(truth, member)?;
    lsd_spectra(&mean_spectrum(truth, dims)?, &mean_spectrum(member, dims)?)
}

/// Ensemble CRPS at one point, `mean|x - o| - Σ|x_j - x_k| / (2m²)`.
/// `members` is sorted in place.
pub fn crps(members: &mut [f64], obs: f64) -> f64 {
    let m = members.len();
    assert!(m > 0, "CRPS needs at least one member");
    members.sort_by(|a, b| a.total_cmp(b));
    let spread_to_obs: f64 = members.iter().map(|x| (x - obs).abs()).sum::<f64>() / m as f64;
    // Σ_{j,k} |x_j - x_k| = 2 Σ_i (2i - m + 1) x_(i) for sorted x
    let pair_sum: f64 = members
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - m as f64 + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    spread_to_obs - pair_sum / (2.0 * (m * m) as f64)
}

/// Mean CRPS over the pixels of an image; `members[j]` is member j.
pub fn crps_image(members: &[&[f32]], truth: &[f32]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Shape("empty ensemble".into()));
    }
    for m in members {
        same_len(truth, m)?;
    }
    let mut buf = vec![0.0; members.len()];
    let mut acc = 0.0;
    for (i, &o) in truth.iter().enumerate() {
        for (b, m) in buf.iter_mut().zip(members) {
            *b = m[i] as f64;
        }
        acc += crps(&mut buf, o as f64);
    }
    Ok(acc / truth.len() as f64)
}

/// Number of members below `truth`, with ties broken by a uniform draw over
/// the tied span. Divide by the ensemble size for the normalized rank.
pub fn rank_count(members: &[f64], truth: f64, rng: &mut impl Rng) -> usize {
    let below = members.iter().filter(|&&x| x < truth).count();
    let tied = members.iter().filter(|&&x| x == truth).count();
    if tied == 0 {
        below
    } else {
        below + rng.gen_range(0..=tied)
    }
}

pub fn normalized_rank(members: &[f64], truth: f64, rng: &mut impl Rng) -> f64 {
    rank_count(members, truth, rng) as f64 / members.len() as f64
}

/// Histogram of rank counts `0..=N_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankTally {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl RankTally {
    pub fn new(ensemble_size: usize) -> Self {
        assert!(ensemble_size > 0);
        Self {
            counts: vec![0; ensemble_size + 1],
            total: 0,
        }
    }

    pub fn ensemble_size(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn add(&mut self, rank_count: usize) {
        self.counts[rank_count] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &RankTally) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    fn check(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::Domain("empty rank tally".into()));
        }
        Ok(())
    }

    /// Largest gap between the empirical rank CDF and the discrete uniform CDF.
    pub fn ks(&self) -> Result<f64> {
        self.check()?;
        let bins = self.counts.len() as f64;
        let mut cum = 0u64;
        let mut sup = 0.0f64;
        for (k, &c) in self.counts.iter().enumerate() {
            cum += c;
            let gap = (cum as f64 / self.total as f64 - (k + 1) as f64 / bins).abs();
            sup = sup.max(gap);
        }
        Ok(sup)
    }

    /// `Σ P log(P/Q)` with P uniform and Q the observed frequencies after one
    /// pseudo-count per bin.
    pub fn kl(&self) -> Result<f64> {
        self.check()?;
        let bins = self.counts.len() as f64;
        let p = 1.0 / bins;
        let denom = self.total as f64 + bins;
        Ok(self
            .counts
            .iter()
            .map(|&c| p * (p / ((c as f64 + 1.0) / denom)).ln())
            .sum::<f64>()
            .max(0.0))
    }

    /// Share of truths outside the ensemble envelope (rank 0 or 1).
    pub fn outlier_fraction(&self) -> Result<f64> {
        self.check()?;
        Ok((self.counts[0] + self.counts[self.counts.len() - 1]) as f64 / self.total as f64)
    }

    pub fn mean_rank(&self) -> Result<f64> {
        self.check()?;
        let n = self.ensemble_size() as f64;
        Ok(self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 / n * c as f64)
            .sum::<f64>()
            / self.total as f64)
    }
}

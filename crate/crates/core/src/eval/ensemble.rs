use std::fmt;
use std::str::FromStr;

use downscale_autograd::{Shape, Tensor};
use rand_distr::{Distribution, StandardNormal};

use super::metrics::{crps_image, lsd, ms_ssim, ms_ssim_scales, rank_count, RankTally};
use crate::data::field::{stack_tensor, unstack_tensor, Dims, FieldSequence, SequencePair};
use crate::error::{Error, Result};
use crate::nets::{generate, NetworkConfig, WeightSet};
use crate::training::{derive_seed, stream_rng};

const NOISE_STREAM: u64 = 10;
const RANK_STREAM: u64 = 11;
const MEMBER_CHUNK: usize = 8;

/// `N_p` predictions sharing one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleBlock {
    pub members: Vec<FieldSequence>,
    pub condition: FieldSequence,
    pub truth: Option<FieldSequence>,
}

/// Noise for member `j` is drawn from its own seeded stream, so the members
/// do not depend on how they are batched.
fn member_noise(net: &NetworkConfig, d: Dims, seed: u64, j: usize) -> Vec<f32> {
    let mut rng = stream_rng(seed, NOISE_STREAM, j as u64);
    (0..d.steps * net.noise_channels * d.height * d.width)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Runs the generator `n_p` times on `condition` with different noise;
/// `amplitude` scales the noise.
pub fn generate_ensemble(
    net: &NetworkConfig,
    weights: &WeightSet,
    condition: &FieldSequence,
    n_p: usize,
    amplitude: f32,
    seed: u64,
) -> Result<EnsembleBlock> {
    if n_p == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    let d = condition.dims;
    let k = net.factor();
    let mut members = Vec::with_capacity(n_p);
    let plane = net.noise_channels * d.height * d.width;
    for start in (0..n_p).step_by(MEMBER_CHUNK) {
        let count = MEMBER_CHUNK.min(n_p - start);
        let lr = stack_tensor(&vec![condition; count]);
        let noise = (net.noise_channels > 0).then(|| {
            let per: Vec<Vec<f32>> = (start..start + count).map(|j| member_noise(net, d, seed, j)).collect();
            let mut z = Vec::with_capacity(d.steps * count * plane);
            for t in 0..d.steps {
                for p in &per {
                    z.extend_from_slice(&p[t * plane..(t + 1) * plane]);
                }
            }
            Tensor::from_vec(Shape::new(d.steps * count, net.noise_channels, d.height, d.width), z)
                .map(|v| v * amplitude)
        });
        let (y, _) = generate(net, weights, &lr, noise.as_ref(), count, None)?;
        for n in 0..count {
            let (md, values) = unstack_tensor(&y, count, n);
            let mut m = condition.with_values(md, values);
            m.pixel_size_km = condition.pixel_size_km / k as f64;
            members.push(m);
        }
    }
    Ok(EnsembleBlock {
        members,
        condition: condition.clone(),
        truth: None,
    })
}

/// Aggregated verification scores; `None` where a metric does not apply.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rmse: Option<f64>,
    pub ms_ssim: Option<f64>,
    pub lsd_db: Option<f64>,
    pub crps: Option<f64>,
    pub ks: Option<f64>,
    pub d_kl: Option<f64>,
    pub of: Option<f64>,
    pub mean_rank: Option<f64>,
    pub n_p: usize,
    pub samples: usize,
}

impl MetricReport {
    pub const KEYS: [&'static str; 10] = [
        "rmse", "ms_ssim", "lsd_db", "crps", "ks", "d_kl", "of", "mean_rank", "n_p", "samples",
    ];

    pub fn metrics(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("rmse", self.rmse),
            ("ms_ssim", self.ms_ssim),
            ("lsd_db", self.lsd_db),
            ("crps", self.crps),
            ("ks", self.ks),
            ("d_kl", self.d_kl),
            ("of", self.of),
            ("mean_rank", self.mean_rank),
        ]
    }

    /// Drops the metrics that need a real ensemble.
    pub fn deterministic(mut self) -> Self {
        self.crps = None;
        self.ks = None;
        self.d_kl = None;
        self.of = None;
        self.mean_rank = None;
        self
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.metrics() {
            writeln!(f, "{k}={}", fmt_opt(v))?;
        }
        writeln!(f, "n_p={}", self.n_p)?;
        writeln!(f, "samples={}", self.samples)
    }
}

impl FromStr for MetricReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut r = MetricReport::default();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            let num = |v: &str| -> Result<Option<f64>> {
                if v == "NA" {
                    return Ok(None);
                }
                v.parse().map(Some).map_err(|_| Error::Config(format!("bad number {v:?} for {k}")))
            };
            let count = |v: &str| v.parse::<usize>().map_err(|_| Error::Config(format!("bad count {v:?}")));
            match k.trim() {
                "rmse" => r.rmse = num(v)?,
                "ms_ssim" => r.ms_ssim = num(v)?,
                "lsd_db" => r.lsd_db = num(v)?,
                "crps" => r.crps = num(v)?,
                "ks" => r.ks = num(v)?,
                "d_kl" => r.d_kl = num(v)?,
                "of" => r.of = num(v)?,
                "mean_rank" => r.mean_rank = num(v)?,
                "n_p" => r.n_p = count(v)?,
                "samples" => r.samples = count(v)?,
                other => return Err(Error::Config(format!("unknown report key {other}"))),
            }
        }
        Ok(r)
    }
}

/// Accumulates scores sample by sample. Single-image scores use member 0;
/// CRPS and ranks use every member, with ranks pooled over all pixels and
/// frames.
pub struct Evaluator {
    n_p: usize,
    seed: u64,
    ranks: bool,
    sq_err: f64,
    pixels: usize,
    ms_ssim: Option<(f64, usize)>,
    lsd: f64,
    crps: f64,
    tally: RankTally,
    samples: usize,
}

impl Evaluator {
    pub fn new(n_p: usize, seed: u64) -> Self {
        Self {
            n_p,
            seed,
            ranks: true,
            sq_err: 0.0,
            pixels: 0,
            ms_ssim: Some((0.0, 0)),
            lsd: 0.0,
            crps: 0.0,
            tally: RankTally::new(n_p.max(1)),
            samples: 0,
        }
    }

    /// For single-prediction methods: no rank statistics.
    pub fn deterministic(seed: u64) -> Self {
        Self {
            ranks: false,
            ..Self::new(1, seed)
        }
    }

    /// Adds sample `index`; members and truth must share dims.
    pub fn add(&mut self, index: usize, truth: &FieldSequence, members: &[FieldSequence]) -> Result<()> {
        if members.len() != self.n_p {
            return Err(Error::Shape(format!("{} members, expected {}", members.len(), self.n_p)));
        }
        if let Some(m) = members.iter().find(|m| m.dims != truth.dims) {
            return Err(Error::Shape(format!("member {:?} vs truth {:?}", m.dims, truth.dims)));
        }
        let d = truth.dims;
        let first = &members[0].values;
        self.sq_err += truth
            .values
            .iter()
            .zip(first)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>();
        self.pixels += d.len();
        if ms_ssim_scales(d.height, d.width) == 0 {
            self.ms_ssim = None;
        }
        if let Some((acc, n)) = self.ms_ssim.as_mut() {
            *acc += ms_ssim(&truth.values, first, d)?;
            *n += 1;
        }
        self.lsd += lsd(&truth.values, first, d)?;
        let refs: Vec<&[f32]> = members.iter().map(|m| m.values.as_slice()).collect();
        self.crps += crps_image(&refs, &truth.values)? * d.len() as f64;
        if self.ranks {
            let mut rng = stream_rng(self.seed, RANK_STREAM, index as u64);
            let mut buf = vec![0.0; members.len()];
            for (i, &o) in truth.values.iter().enumerate() {
                for (b, m) in buf.iter_mut().zip(&refs) {
                    *b = m[i] as f64;
                }
                self.tally.add(rank_count(&buf, o as f64, &mut rng));
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn tally(&self) -> &RankTally {
        &self.tally
    }

    pub fn finish(&self) -> Result<MetricReport> {
        if self.samples == 0 {
            return Err(Error::Metadata("no samples evaluated".into()));
        }
        let ranked = self.ranks && self.tally.total > 0;
        Ok(MetricReport {
            rmse: Some((self.sq_err / self.pixels as f64).sqrt()),
            ms_ssim: self.ms_ssim.map(|(a, n)| a / n as f64),
            lsd_db: Some(self.lsd / self.samples as f64),
            crps: Some(self.crps / self.pixels as f64),
            ks: ranked.then(|| self.tally.ks()).transpose()?,
            d_kl: ranked.then(|| self.tally.kl()).transpose()?,
            of: ranked.then(|| self.tally.outlier_fraction()).transpose()?,
            mean_rank: ranked.then(|| self.tally.mean_rank()).transpose()?,
            n_p: self.n_p,
            samples: self.samples,
        })
    }
}

/// Sets generated values below the detection threshold to exactly 0, as in
/// the truth.
pub fn quantize_members(members: &mut [FieldSequence]) {
    for m in members {
        let spec = m.transform;
        spec.quantize_empty(&mut m.values);
    }
}

/// Generates `n_p` members for every pair and scores them against the
/// high-res truth.
pub fn evaluate_suite(
    net: &NetworkConfig,
    weights: &WeightSet,
    pairs: &[SequencePair],
    n_p: usize,
    amplitude: f32,
    seed: u64,
) -> Result<MetricReport> {
    evaluate_pairs(net, weights, pairs, n_p, amplitude, seed)?.finish()
}

/// Like [`evaluate_suite`] but hands back the evaluator, rank tally included.
pub fn evaluate_pairs(
    net: &NetworkConfig,
    weights: &WeightSet,
    pairs: &[SequencePair],
    n_p: usize,
    amplitude: f32,
    seed: u64,
) -> Result<Evaluator> {
    let mut ev = Evaluator::new(n_p, seed);
    for (i, pair) in pairs.iter().enumerate() {
        let mut block = generate_ensemble(net, weights, &pair.lr, n_p, amplitude, derive_seed(seed, NOISE_STREAM, i as u64))?;
        quantize_members(&mut block.members);
        ev.add(i, &pair.hr, &block.members)?;
    }
    Ok(ev)
}

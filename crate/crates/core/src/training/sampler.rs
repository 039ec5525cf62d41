//! Deterministic sample streams. Every drawn sample depends only on
//! `(seed, stream, position)`, so workers can produce any slice of a stream
//! independently and the result matches a serial run.

use downscale_autograd::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::archive::{DatasetManifest, Split};
use crate::data::field::{stack_tensor, SequencePair};
use crate::data::ops::{augment, crop_pair, gaussian_smooth};
use crate::data::synth::sequence_seed;
use crate::error::{Error, Result};

/// Seed for item `index` of sub-stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    sequence_seed(sequence_seed(seed, stream), index)
}

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

/// Loads a split as training pairs: the condition is tile-averaged from the
/// raw high-res field, then the high-res field (and optionally the
/// condition) is smoothed.
pub fn prepare_pairs(
    manifest: &DatasetManifest,
    split: Split,
    factor: usize,
    hr_sigma: f64,
    smooth_lr: bool,
) -> Result<Vec<SequencePair>> {
    manifest
        .indices(split)
        .into_iter()
        .map(|i| {
            let hr = manifest.load(i)?;
            let mut pair = SequencePair::from_high_res(hr, factor)?;
            if hr_sigma > 0.0 {
                pair.hr.values = gaussian_smooth(&pair.hr.values, pair.hr.dims, hr_sigma)?;
                if smooth_lr {
                    pair.lr.values = gaussian_smooth(&pair.lr.values, pair.lr.dims, hr_sigma)?;
                }
            }
            Ok(pair)
        })
        .collect()
}

/// A time-major batch of pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub hr: Tensor,
    pub lr: Tensor,
    pub samples: usize,
}

impl Batch {
    pub fn from_pairs(pairs: &[SequencePair]) -> Batch {
        let hr: Vec<_> = pairs.iter().map(|p| &p.hr).collect();
        let lr: Vec<_> = pairs.iter().map(|p| &p.lr).collect();
        Batch {
            hr: stack_tensor(&hr),
            lr: stack_tensor(&lr),
            samples: pairs.len(),
        }
    }
}

pub struct SampleStream<'a> {
    pub pairs: &'a [SequencePair],
    pub seed: u64,
    pub stream: u64,
    pub augment: bool,
    /// Square low-res crop drawn at a random aligned offset.
    pub crop_lr: Option<usize>,
}

impl<'a> SampleStream<'a> {
    pub fn new(pairs: &'a [SequencePair], seed: u64, stream: u64, augment: bool) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Metadata("no training sequences".into()));
        }
        Ok(Self {
            pairs,
            seed,
            stream,
            augment,
            crop_lr: None,
        })
    }

    pub fn with_crop(mut self, crop_lr: Option<usize>) -> Self {
        self.crop_lr = crop_lr;
        self
    }

    /// Sample at `position`: epochs are independent shuffles of the pairs.
    pub fn sample(&self, position: u64) -> Result<SequencePair> {
        let n = self.pairs.len() as u64;
        let (epoch, offset) = (position / n, position % n);
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut stream_rng(self.seed, self.stream, epoch));
        let mut pair = &self.pairs[order[offset as usize]];
        let mut rng = stream_rng(self.seed, self.stream ^ 0xA5A5, position);
        let cropped;
        if let Some(c) = self.crop_lr {
            let d = pair.lr.dims;
            if c < d.height || c < d.width {
                let (ch, cw) = (c.min(d.height), c.min(d.width));
                let y = rng.gen_range(0..=d.height - ch);
                let x = rng.gen_range(0..=d.width - cw);
                cropped = crop_pair(pair, y, x, ch, cw)?;
                pair = &cropped;
            }
        }
        if !self.augment {
            return Ok(pair.clone());
        }
        let square = pair.hr.dims.height == pair.hr.dims.width;
        let q = if square { rng.gen_range(0..4u8) } else { 2 * rng.gen_range(0..2u8) };
        augment(pair, q, rng.gen())
    }

    /// Batch `index` of `size` consecutive samples.
    pub fn batch(&self, index: u64, size: usize) -> Result<Batch> {
        let pairs = (0..size as u64)
            .map(|j| self.sample(index * size as u64 + j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch::from_pairs(&pairs))
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::archive::{DatasetManifest, Split};
use crate::error::{Error, Result};

pub const MIN_POOL: usize = 10;

/// Randomly relabels the non-test pool into train and valid, with
/// `round(valid_fraction · pool)` validation sequences. Test records are
/// left as they are.
pub fn split_dataset(manifest: &DatasetManifest, valid_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if manifest.sequences.is_empty() {
        return Err(Error::Metadata("empty manifest".into()));
    }
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(Error::Config(format!("valid fraction {valid_fraction} outside [0, 1)")));
    }
    let mut pool: Vec<usize> = (0..manifest.sequences.len())
        .filter(|&i| manifest.sequences[i].split != Split::Test)
        .collect();
    if pool.len() < MIN_POOL {
        return Err(Error::Metadata(format!(
            "need at least {MIN_POOL} train/valid sequences, found {}",
            pool.len()
        )));
    }
    let n_valid = (valid_fraction * pool.len() as f64).round() as usize;
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    for (j, &i) in pool.iter().enumerate() {
        out.sequences[i].split = if j < n_valid { Split::Valid } else { Split::Train };
    }
    Ok(out)
}

//! Dataset container: a directory with `manifest.json` and raw little-endian
//! f32 shards of shape `(N_seq, N_t, h, w, N_v)`.

use std::fs;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::field::{Dims, FieldSequence};
use super::transform::TransformSpec;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub dt_minutes: i64,
    pub pixel_size_km: f64,
    /// `[N_seq, N_t, h, w, N_v]`
    pub shape: [usize; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub file: String,
    pub byte_offset: u64,
    /// `[N_t, h, w, N_v]`
    pub shape: [usize; 4],
    pub start_minutes: i64,
    pub split: Split,
}

impl SequenceRecord {
    pub fn dims(&self) -> Dims {
        let [t, h, w, v] = self.shape;
        Dims::new(t, h, w, v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub dt_minutes: i64,
    pub pixel_size_km: f64,
    pub transform: TransformSpec,
    pub shards: Vec<ShardInfo>,
    pub sequences: Vec<SequenceRecord>,
    /// Directory the manifest was read from.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.sequences.len())
            .filter(|&i| self.sequences[i].split == split)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.sequences.iter().filter(|s| s.split == split).count()
    }

    /// Reads sequence `index` from its shard.
    pub fn load(&self, index: usize) -> Result<FieldSequence> {
        let rec = self
            .sequences
            .get(index)
            .ok_or_else(|| Error::Metadata(format!("no sequence {index} in manifest")))?;
        let path = self.root.join(&rec.file);
        let dims = rec.dims();
        let mut f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        f.seek(SeekFrom::Start(rec.byte_offset))
            .map_err(|e| Error::io(&path, e))?;
        let mut bytes = vec![0u8; dims.len() * 4];
        f.read_exact(&mut bytes).map_err(|e| Error::io(&path, e))?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        FieldSequence::new(
            dims,
            values,
            FieldSequence::regular_times(rec.start_minutes, self.dt_minutes, dims.steps),
            self.pixel_size_km,
            self.transform,
        )
    }

    pub fn write_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Writes `sequences` (all with equal dims, Δt, pixel size and transform) into
/// `dir`, `shard_size` sequences per shard file.
pub fn write_archive(
    dir: &Path,
    sequences: &[FieldSequence],
    splits: &[Split],
    shard_size: usize,
) -> Result<DatasetManifest> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::Metadata("cannot write an empty dataset".into()))?;
    if splits.len() != sequences.len() {
        return Err(Error::Metadata("one split label per sequence required".into()));
    }
    let dt = if first.timestamps.len() > 1 {
        first.timestamps[1] - first.timestamps[0]
    } else {
        return Err(Error::Metadata("sequences need at least two frames to fix Δt".into()));
    };
    for s in sequences {
        s.validate()?;
        if s.dims != first.dims || s.pixel_size_km != first.pixel_size_km || s.transform != first.transform {
            return Err(Error::Metadata("sequences in one archive must share dims and metadata".into()));
        }
        if s.timestamps.windows(2).any(|w| w[1] - w[0] != dt) {
            return Err(Error::Metadata("irregular time spacing inside a sequence".into()));
        }
    }
    write_records(dir, sequences, splits, shard_size, dt)
}

/// Like [`write_archive`] but for single-frame sequences with arbitrary
/// timestamps (a possibly gappy frame stream). `dt_minutes` is the nominal
/// spacing.
pub fn write_frame_stream(dir: &Path, frames: &[FieldSequence], dt_minutes: i64) -> Result<DatasetManifest> {
    if frames.iter().any(|f| f.dims.steps != 1) {
        return Err(Error::Shape("frame streams hold single-frame records".into()));
    }
    let splits = vec![Split::Test; frames.len()];
    write_records(dir, frames, &splits, frames.len().max(1), dt_minutes)
}

fn write_records(
    dir: &Path,
    sequences: &[FieldSequence],
    splits: &[Split],
    shard_size: usize,
    dt: i64,
) -> Result<DatasetManifest> {
    let first = &sequences[0];
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shard_size = shard_size.max(1);
    let d = first.dims;
    let mut shards = Vec::new();
    let mut records = Vec::new();
    for (si, chunk) in sequences.chunks(shard_size).enumerate() {
        let file = format!("shard_{si:05}.f32");
        let path = dir.join(&file);
        let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        for (j, s) in chunk.iter().enumerate() {
            for v in &s.values {
                out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
            }
            records.push(SequenceRecord {
                file: file.clone(),
                byte_offset: (j * d.len() * 4) as u64,
                shape: [d.steps, d.height, d.width, d.vars],
                start_minutes: s.timestamps[0],
                split: splits[si * shard_size + j],
            });
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        shards.push(ShardInfo {
            file,
            dt_minutes: dt,
            pixel_size_km: first.pixel_size_km,
            shape: [chunk.len(), d.steps, d.height, d.width, d.vars],
        });
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        dt_minutes: dt,
        pixel_size_km: first.pixel_size_km,
        transform: first.transform,
        shards,
        sequences: records,
        root: dir.to_path_buf(),
    };
    manifest.write_manifest()?;
    Ok(manifest)
}

/// Reads and validates the manifest of the container at `dir`.
pub fn read_archive(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let version = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::MalformedHeader {
            path: path.clone(),
            reason: "missing schema_version".into(),
        })?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            path,
            found: version as u32,
            expected: SCHEMA_VERSION,
        });
    }
    let mut m: DatasetManifest = serde_json::from_value(raw).map_err(|e| Error::MalformedHeader {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    m.root = dir.to_path_buf();
    m.transform.validate()?;
    if m.dt_minutes <= 0 {
        return Err(Error::Metadata(format!("non-positive Δt {}", m.dt_minutes)));
    }
    for s in &m.shards {
        if s.dt_minutes != m.dt_minutes {
            return Err(Error::Metadata(format!(
                "shard {} has Δt {} min, manifest has {} min",
                s.file, s.dt_minutes, m.dt_minutes
            )));
        }
        if s.pixel_size_km != m.pixel_size_km {
            return Err(Error::Metadata(format!("shard {} has a different pixel size", s.file)));
        }
        let p = dir.join(&s.file);
        let need = s.shape.iter().product::<usize>() as u64 * 4;
        let have = fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len();
        if have < need {
            return Err(Error::Truncated {
                path: p,
                expected: need,
                found: have,
            });
        }
    }
    for r in &m.sequences {
        let shard = m
            .shards
            .iter()
            .find(|s| s.file == r.file)
            .ok_or_else(|| Error::Metadata(format!("record refers to unknown shard {}", r.file)))?;
        if shard.shape[1..] != r.shape {
            return Err(Error::Shape(format!(
                "record shape {:?} differs from shard {} shape {:?}",
                r.shape, shard.file, &shard.shape[1..]
            )));
        }
        let len = r.shape.iter().product::<usize>() as u64 * 4;
        let end = shard.shape.iter().product::<usize>() as u64 * 4;
        if r.byte_offset % len != 0 || r.byte_offset + len > end {
            return Err(Error::Shape(format!(
                "record at byte {} does not fit shard {}",
                r.byte_offset, r.file
            )));
        }
    }
    Ok(m)
}

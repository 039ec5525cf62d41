//! Named-array container: `DSWT`, u32 version, u64 header length, JSON
//! header, then little-endian f32 data in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use downscale_autograd::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::weights::WeightSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DSWT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    dtype: String,
    shape: [usize; 4],
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    entries: Vec<EntryHeader>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub fingerprint: String,
    pub arrays: WeightSet,
    pub meta: serde_json::Value,
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let header = Header {
        fingerprint: c.fingerprint.clone(),
        entries: c
            .arrays
            .iter()
            .map(|(n, t)| EntryHeader {
                name: n.clone(),
                dtype: "f32".into(),
                shape: t.shape().dims(),
            })
            .collect(),
        meta: c.meta.clone(),
    };
    let hjson = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(16 + hjson.len() + 4 * c.arrays.iter().map(|(_, t)| t.len()).sum::<usize>());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
    buf.extend_from_slice(&hjson);
    for (_, t) in c.arrays.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 16 {
        return Err(truncated(16));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(truncated(16 + hlen));
    }
    let header: Header =
        serde_json::from_slice(&bytes[16..16 + hlen]).map_err(|e| malformed(&e.to_string()))?;
    let total: usize = header
        .entries
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    let need = 16 + hlen + 4 * total;
    if bytes.len() < need {
        return Err(truncated(need));
    }
    let mut arrays = WeightSet::default();
    let mut off = 16 + hlen;
    for e in header.entries {
        if e.dtype != "f32" {
            return Err(malformed(&format!("unsupported dtype {}", e.dtype)));
        }
        let shape = Shape::new(e.shape[0], e.shape[1], e.shape[2], e.shape[3]);
        let data = bytes[off..off + 4 * shape.len()]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        off += 4 * shape.len();
        arrays.insert(e.name, Tensor::from_vec(shape, data));
    }
    Ok(Container {
        fingerprint: header.fingerprint,
        arrays,
        meta: header.meta,
    })
}

pub fn check_fingerprint(c: &Container, cfg: &NetworkConfig) -> Result<()> {
    let expected = cfg.fingerprint();
    if c.fingerprint != expected {
        return Err(Error::Fingerprint {
            expected,
            found: c.fingerprint.clone(),
        });
    }
    Ok(())
}

/// Saves one network's weights with the configuration in the metadata.
pub fn save_weights(path: &Path, cfg: &NetworkConfig, ws: &WeightSet) -> Result<()> {
    write_container(
        path,
        &Container {
            fingerprint: cfg.fingerprint(),
            arrays: ws.clone(),
            meta: serde_json::json!({ "network": cfg }),
        },
    )
}

pub fn load_weights(path: &Path, cfg: &NetworkConfig) -> Result<WeightSet> {
    let c = read_container(path)?;
    check_fingerprint(&c, cfg)?;
    Ok(c.arrays)
}

//! Checkpoints reuse the weight container: arrays are prefixed by role and
//! counters live in the metadata.

use std::path::Path;

use downscale_autograd::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use super::config::TrainingConfig;
use super::losses::GanState;
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::nets::io::{check_fingerprint, read_container, write_container, Container};
use crate::nets::{layout_discriminator, layout_generator, NetworkConfig, SpectralState, WeightSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    network: NetworkConfig,
    training: TrainingConfig,
    g_steps: u64,
    d_steps: u64,
    opt_g_t: u64,
    opt_d_t: u64,
}

fn put(out: &mut WeightSet, prefix: &str, ws: &WeightSet) {
    for (k, t) in ws.iter() {
        out.insert(format!("{prefix}/{k}"), t.clone());
    }
}

fn take(all: &WeightSet, prefix: &str) -> WeightSet {
    let p = format!("{prefix}/");
    WeightSet {
        tensors: all
            .iter()
            .filter_map(|(k, t)| k.strip_prefix(&p).map(|r| (r.to_string(), t.clone())))
            .collect(),
    }
}

pub fn save_checkpoint(path: &Path, net: &NetworkConfig, cfg: &TrainingConfig, s: &GanState) -> Result<()> {
    let mut arrays = WeightSet::default();
    put(&mut arrays, "g", &s.g);
    put(&mut arrays, "d", &s.d);
    put(&mut arrays, "opt_g/m", &s.opt_g.m);
    put(&mut arrays, "opt_g/v", &s.opt_g.v);
    put(&mut arrays, "opt_d/m", &s.opt_d.m);
    put(&mut arrays, "opt_d/v", &s.opt_d.v);
    for (k, u) in &s.sn.u {
        arrays.insert(format!("sn/{k}"), Tensor::from_vec(Shape::new(u.len(), 1, 1, 1), u.clone()));
    }
    let meta = Meta {
        network: net.clone(),
        training: cfg.clone(),
        g_steps: s.g_steps,
        d_steps: s.d_steps,
        opt_g_t: s.opt_g.t,
        opt_d_t: s.opt_d.t,
    };
    write_container(
        path,
        &Container {
            fingerprint: net.fingerprint(),
            arrays,
            meta: serde_json::to_value(meta).expect("meta serializes"),
        },
    )
}

fn meta_of(c: &Container, path: &Path) -> Result<Meta> {
    serde_json::from_value(c.meta.clone()).map_err(|e| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: format!("checkpoint metadata: {e}"),
    })
}

/// Restores a full training state. The stored network configuration must
/// match `net`.
pub fn load_checkpoint(path: &Path, net: &NetworkConfig) -> Result<(TrainingConfig, GanState)> {
    let c = read_container(path)?;
    check_fingerprint(&c, net)?;
    let meta = meta_of(&c, path)?;
    let g = take(&c.arrays, "g");
    let d = take(&c.arrays, "d");
    let bad = |e: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: e,
    };
    layout_generator(net).matches(&g).map_err(bad)?;
    layout_discriminator(net).matches(&d).map_err(bad)?;
    let sn = SpectralState {
        u: take(&c.arrays, "sn")
            .tensors
            .into_iter()
            .map(|(k, t)| (k, t.into_vec()))
            .collect(),
    };
    let state = GanState {
        opt_g: OptimizerState {
            m: take(&c.arrays, "opt_g/m"),
            v: take(&c.arrays, "opt_g/v"),
            t: meta.opt_g_t,
        },
        opt_d: OptimizerState {
            m: take(&c.arrays, "opt_d/m"),
            v: take(&c.arrays, "opt_d/v"),
            t: meta.opt_d_t,
        },
        g,
        d,
        sn,
        g_steps: meta.g_steps,
        d_steps: meta.d_steps,
    };
    Ok((meta.training, state))
}

/// Network configuration and generator weights from a checkpoint (or from
/// a generator-only weight file carrying its configuration).
pub fn load_generator(path: &Path) -> Result<(NetworkConfig, WeightSet)> {
    let c = read_container(path)?;
    let net: NetworkConfig = c
        .meta
        .get("network")
        .cloned()
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "no network configuration in metadata".into(),
        })
        .and_then(|v| {
            serde_json::from_value(v).map_err(|e| Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })?;
    check_fingerprint(&c, &net)?;
    let g = if c.arrays.iter().any(|(k, _)| k.starts_with("g/")) {
        take(&c.arrays, "g")
    } else {
        c.arrays
    };
    layout_generator(&net)
        .matches(&g)
        .map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e,
        })?;
    Ok((net, g))
}

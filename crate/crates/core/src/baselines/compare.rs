use std::time::Instant;

use super::lanczos::lanczos_upsample;
use super::rainfarm::{rainfarm, RainFarmParams};
use super::rcnn::rcnn_predict;
use crate::data::field::{FieldSequence, SequencePair};
use crate::error::Result;
use crate::eval::{generate_ensemble, quantize_members, Evaluator, MetricReport};
use crate::nets::{NetworkConfig, WeightSet};
use crate::training::{derive_seed, stream_rng};

pub enum Method {
    Gan {
        net: NetworkConfig,
        weights: WeightSet,
        amplitude: f32,
    },
    Rcnn {
        net: NetworkConfig,
        weights: WeightSet,
    },
    Lanczos,
    RainFarm(RainFarmParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Gan { .. } => "gan",
            Method::Rcnn { .. } => "rcnn",
            Method::Lanczos => "lanczos",
            Method::RainFarm(_) => "rainfarm",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::Gan { .. } | Method::RainFarm(_))
    }

    /// Predictions for one condition: `n_p` members, or one for
    /// deterministic methods.
    pub fn predict(&self, lr: &FieldSequence, factor: usize, n_p: usize, seed: u64) -> Result<Vec<FieldSequence>> {
        let mut members = match self {
            Method::Gan { net, weights, amplitude } => {
                generate_ensemble(net, weights, lr, n_p, *amplitude, seed)?.members
            }
            Method::Rcnn { net, weights } => vec![rcnn_predict(net, weights, lr)?],
            Method::Lanczos => vec![lanczos_upsample(lr, factor)?],
            Method::RainFarm(p) => (0..n_p)
                .map(|j| rainfarm(lr, p, &mut stream_rng(seed ^ p.seed, 30, j as u64)))
                .collect::<Result<_>>()?,
        };
        quantize_members(&mut members);
        Ok(members)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub method: String,
    pub report: MetricReport,
    /// Mean wall time to produce the predictions for one sequence.
    pub seconds_per_sequence: f64,
}

/// Scores every method on the same pairs with the same evaluator.
/// Deterministic methods report no CRPS or rank statistics.
pub fn compare_methods(pairs: &[SequencePair], methods: &[Method], n_p: usize, seed: u64) -> Result<Vec<MethodResult>> {
    methods
        .iter()
        .map(|m| {
            let size = if m.is_stochastic() { n_p } else { 1 };
            let mut ev = if m.is_stochastic() {
                Evaluator::new(size, seed)
            } else {
                Evaluator::deterministic(seed)
            };
            let mut secs = 0.0;
            for (i, p) in pairs.iter().enumerate() {
                let t = Instant::now();
                let members = m.predict(&p.lr, p.factor, size, derive_seed(seed, 31, i as u64))?;
                secs += t.elapsed().as_secs_f64();
                ev.add(i, &p.hr, &members)?;
            }
            let mut report = ev.finish()?;
            if !m.is_stochastic() {
                report = report.deterministic();
            }
            Ok(MethodResult {
                method: m.name().into(),
                report,
                seconds_per_sequence: secs / pairs.len().max(1) as f64,
            })
        })
        .collect()
}

/// One `method metric value` line per metric, plus timing.
pub fn format_comparison(results: &[MethodResult]) -> String {
    let mut out = String::new();
    for r in results {
        for (k, v) in r.report.metrics() {
            let v = v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
            out.push_str(&format!("{}\t{k}\t{v}\n", r.method));
        }
        out.push_str(&format!("{}\tseconds_per_sequence\t{:.6}\n", r.method, r.seconds_per_sequence));
    }
    out
}

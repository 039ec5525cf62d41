//! Run configuration: a preset, then `key = value` lines from a config file,
//! then command-line flags, each overriding the one before.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use downscale_core::data::synth::SyntheticParams;
use downscale_core::nets::NetworkConfig;
use downscale_core::training::TrainingConfig;

use crate::error::{io_err, usage, CliResult};

pub const PRESETS: [&str; 3] = ["tiny", "desk", "full"];

#[derive(Clone, Debug, PartialEq)]
pub struct DataPlan {
    pub sequences: usize,
    pub steps: usize,
    pub height: usize,
    pub width: usize,
    /// Latest share of sequences held out as test data.
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub synth: SyntheticParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub network_name: String,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub g_steps: u64,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub ensemble_size: usize,
    /// Members per conditioning sample in the checkpoint validation rows.
    pub history_members: usize,
    pub noise_amplitude: f32,
    pub lambda_r: f32,
    pub data: DataPlan,
    pub eval_sequences: Option<usize>,
    pub methods: Vec<String>,
    pub rcnn_checkpoint: Option<PathBuf>,
    pub rcnn_steps: u64,
}

impl RunConfig {
    pub fn preset(name: &str) -> CliResult<Self> {
        let tiny = RunConfig {
            preset: "tiny".into(),
            network_name: "tiny".into(),
            network: NetworkConfig::tiny(),
            training: TrainingConfig {
                batch_size: 4,
                ..TrainingConfig::default()
            }
            .scaled(100),
            g_steps: 10,
            seed: 0,
            dataset: None,
            checkpoint: None,
            out: None,
            input: None,
            ensemble_size: 8,
            history_members: 4,
            noise_amplitude: 1.0,
            lambda_r: 0.0,
            data: DataPlan {
                sequences: 40,
                steps: 4,
                height: 32,
                width: 32,
                test_fraction: 0.1,
                valid_fraction: 0.1,
                synth: SyntheticParams::default(),
            },
            eval_sequences: Some(4),
            methods: vec!["gan".into(), "rcnn".into(), "lanczos".into(), "rainfarm".into()],
            rcnn_checkpoint: None,
            rcnn_steps: 4,
        };
        match name {
            "tiny" => Ok(tiny),
            // the acceptance-scale run: small networks, 64×64 data, trained
            // on 32×32 crops
            "desk" => Ok(RunConfig {
                preset: "desk".into(),
                training: TrainingConfig {
                    crop_lr: Some(2),
                    ..TrainingConfig::default()
                },
                g_steps: 2000,
                ensemble_size: 100,
                history_members: 10,
                data: DataPlan {
                    sequences: 2000,
                    height: 64,
                    width: 64,
                    ..tiny.data.clone()
                },
                eval_sequences: Some(40),
                rcnn_steps: 2000,
                ..tiny
            }),
            "full" => Ok(RunConfig {
                preset: "full".into(),
                network_name: "reference".into(),
                network: NetworkConfig::reference(),
                training: TrainingConfig::default(),
                g_steps: 25_000,
                ensemble_size: 100,
                history_members: 10,
                data: DataPlan {
                    sequences: 4000,
                    steps: 8,
                    height: 128,
                    width: 128,
                    ..tiny.data.clone()
                },
                eval_sequences: None,
                rcnn_steps: 25_000,
                ..tiny
            }),
            other => Err(usage(format!("unknown preset '{other}' (expected one of {})", PRESETS.join(", ")))),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        let bad = || usage(format!("invalid value '{v}' for '{key}'"));
        macro_rules! parse {
            () => {
                v.parse().map_err(|_| bad())?
            };
        }
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "seed" => self.seed = parse!(),
            "dataset" => self.dataset = path(),
            "checkpoint" => self.checkpoint = path(),
            "out" => self.out = path(),
            "input" => self.input = path(),
            "ensemble_size" => self.ensemble_size = parse!(),
            "history_members" => self.history_members = parse!(),
            "noise_amplitude" => self.noise_amplitude = parse!(),
            "lambda_r" => self.lambda_r = parse!(),
            "network" => {
                self.network = NetworkConfig::preset(v).ok_or_else(bad)?;
                self.network_name = v.into();
            }
            "padding" => {
                self.network.padding = match v {
                    "reflect" => downscale_core::nets::config::Padding::Reflect,
                    "circular" => downscale_core::nets::config::Padding::Circular,
                    "zero" => downscale_core::nets::config::Padding::Zero,
                    _ => return Err(bad()),
                }
            }
            "g_steps" => self.g_steps = parse!(),
            "batch_size" => self.training.batch_size = parse!(),
            "d_steps_per_g" => self.training.d_steps_per_g = parse!(),
            "gamma" => self.training.gamma = parse!(),
            "l2_weight" => self.training.l2_weight = parse!(),
            "lr" => self.training.phases[0].lr = parse!(),
            "checkpoint_interval" => self.training.checkpoint_interval = parse!(),
            "crop_lr" => self.training.crop_lr = if v == "none" { None } else { Some(parse!()) },
            "augment" => self.training.augment = parse!(),
            "hr_smoothing" => self.training.hr_smoothing = parse!(),
            "smooth_lr" => self.training.smooth_lr = parse!(),
            "sequences" => self.data.sequences = parse!(),
            "steps" => self.data.steps = parse!(),
            "height" => self.data.height = parse!(),
            "width" => self.data.width = parse!(),
            "occupancy" => self.data.synth.occupancy = parse!(),
            "correlation_length" => self.data.synth.correlation_length = parse!(),
            "test_fraction" => self.data.test_fraction = parse!(),
            "valid_fraction" => self.data.valid_fraction = parse!(),
            "eval_sequences" => self.eval_sequences = if v == "all" { None } else { Some(parse!()) },
            "methods" => self.methods = v.split(',').map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect(),
            "rcnn_checkpoint" => self.rcnn_checkpoint = path(),
            "rcnn_steps" => self.rcnn_steps = parse!(),
            _ => return Err(usage(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Settings that are not part of the preset choice itself, in file order.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        let mut seen = BTreeSet::new();
        for (n, line) in parse_lines(text, origin)? {
            if n == "preset" {
                continue;
            }
            if !seen.insert(n.clone()) {
                return Err(usage(format!("{origin}: key '{n}' given twice")));
            }
            self.set(&n, &line)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.network.validate()?;
        self.training.validate()?;
        self.data.synth.validate()?;
        if self.ensemble_size == 0 || self.history_members == 0 {
            return Err(usage("ensemble sizes must be positive"));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(usage("noise amplitude must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.lambda_r) {
            return Err(usage(format!("lambda_r {} outside [0, 1)", self.lambda_r)));
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) || !(0.0..1.0).contains(&self.data.valid_fraction) {
            return Err(usage("split fractions must lie in [0, 1)"));
        }
        Ok(())
    }

    /// The resolved settings as a config file that reproduces this run.
    pub fn to_text(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map_or(String::new(), |p| p.display().to_string());
        let t = &self.training;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("preset", self.preset.clone());
        kv("network", self.network_name.clone());
        kv("padding", format!("{:?}", self.network.padding).to_lowercase());
        kv("seed", self.seed.to_string());
        kv("dataset", p(&self.dataset));
        kv("checkpoint", p(&self.checkpoint));
        kv("out", p(&self.out));
        kv("ensemble_size", self.ensemble_size.to_string());
        kv("history_members", self.history_members.to_string());
        kv("noise_amplitude", self.noise_amplitude.to_string());
        kv("lambda_r", self.lambda_r.to_string());
        kv("g_steps", self.g_steps.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("d_steps_per_g", t.d_steps_per_g.to_string());
        kv("gamma", t.gamma.to_string());
        kv("l2_weight", t.l2_weight.to_string());
        kv("lr", t.phases[0].lr.to_string());
        kv("checkpoint_interval", t.checkpoint_interval.to_string());
        kv("crop_lr", t.crop_lr.map_or("none".into(), |c| c.to_string()));
        kv("augment", t.augment.to_string());
        kv("hr_smoothing", t.hr_smoothing.to_string());
        kv("smooth_lr", t.smooth_lr.to_string());
        kv("sequences", self.data.sequences.to_string());
        kv("steps", self.data.steps.to_string());
        kv("height", self.data.height.to_string());
        kv("width", self.data.width.to_string());
        kv("occupancy", self.data.synth.occupancy.to_string());
        kv("correlation_length", self.data.synth.correlation_length.to_string());
        kv("test_fraction", self.data.test_fraction.to_string());
        kv("valid_fraction", self.data.valid_fraction.to_string());
        kv("eval_sequences", self.eval_sequences.map_or("all".into(), |n| n.to_string()));
        kv("methods", self.methods.join(","));
        kv("rcnn_checkpoint", p(&self.rcnn_checkpoint));
        kv("rcnn_steps", self.rcnn_steps.to_string());
        s
    }
}

/// `(key, value)` pairs of a flat config text; `#` starts a comment.
pub fn parse_lines(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{origin}:{}: expected 'key = value'", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Preset named on the command line, else in the file, else `tiny`; then
/// the file; then the `flags`.
pub fn resolve(
    preset_flag: Option<&str>,
    file: Option<&Path>,
    flags: &[(&str, Option<String>)],
) -> CliResult<RunConfig> {
    let text = match file {
        Some(f) => Some(std::fs::read_to_string(f).map_err(|e| io_err(f, e))?),
        None => None,
    };
    let origin = file.map_or(String::new(), |f| f.display().to_string());
    let file_preset = match &text {
        Some(t) => parse_lines(t, &origin)?.into_iter().find(|(k, _)| k == "preset").map(|(_, v)| v),
        None => None,
    };
    let name = preset_flag.map(str::to_string).or(file_preset).unwrap_or_else(|| "tiny".into());
    let mut cfg = RunConfig::preset(&name)?;
    if let Some(t) = &text {
        cfg.apply_text(t, &origin)?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.training.seed = cfg.seed;
    cfg.data.synth.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

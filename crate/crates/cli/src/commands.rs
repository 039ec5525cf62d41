use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use downscale_core::baselines::{
    compare_methods, format_comparison, train_rcnn, Method, PixelLoss, RainFarmParams, RcnnState,
};
use downscale_core::data::archive::write_frame_stream;
use downscale_core::data::field::{Dims, FieldSequence, SequencePair};
use downscale_core::data::split::split_dataset;
use downscale_core::data::synth::synth_collection;
use downscale_core::data::{read_archive, write_archive, DatasetManifest, Split};
use downscale_core::eval::{evaluate_pairs, evaluate_suite, generate_ensemble, quantize_members, RankTally};
use downscale_core::nets::io::{load_weights, save_weights};
use downscale_core::nets::NetworkConfig;
use downscale_core::stream::{stream, StreamConfig};
use downscale_core::training::{
    load_checkpoint, load_generator, prepare_pairs, save_checkpoint, train, GanState, JsonLog, StepRecord,
    TrainObserver, TrainingConfig,
};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_err, usage, CliError, CliResult};

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("--{flag} is required for this command")))
}

fn make_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| io_err(p, e))
}

fn write_file(p: &Path, text: &str) -> CliResult<()> {
    fs::write(p, text).map_err(|e| io_err(p, e))
}

fn open_dataset(cfg: &RunConfig) -> CliResult<DatasetManifest> {
    let dir = need(&cfg.dataset, "dataset")?;
    if !dir.is_dir() {
        return Err(CliError::Data(format!("dataset {} does not exist", dir.display())));
    }
    Ok(read_archive(dir)?)
}

fn pairs(cfg: &RunConfig, m: &DatasetManifest, split: Split, limit: Option<usize>) -> CliResult<Vec<SequencePair>> {
    let t = &cfg.training;
    let mut p = prepare_pairs(m, split, cfg.network.factor(), t.hr_smoothing, t.smooth_lr)?;
    if let Some(n) = limit {
        p.truncate(n);
    }
    if p.is_empty() {
        return Err(CliError::Data(format!("no {split:?} sequences in the dataset")));
    }
    Ok(p)
}

/// SHA-256 over the manifest and shard files in name order.
pub fn container_checksum(dir: &Path) -> CliResult<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().to_string_lossy().as_bytes());
        h.update(fs::read(&p).map_err(|e| io_err(&p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn synth_data(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let d = &cfg.data;
    if d.sequences < 2 {
        return Err(usage("need at least two sequences"));
    }
    let seqs = synth_collection(&d.synth, d.sequences, Dims::new(d.steps, d.height, d.width, 1), 0)?;
    // the latest period is the test set
    let n_test = ((d.test_fraction * d.sequences as f64).round() as usize).clamp(1, d.sequences - 1);
    let splits: Vec<Split> = (0..d.sequences)
        .map(|i| if i + n_test >= d.sequences { Split::Test } else { Split::Train })
        .collect();
    make_dir(out)?;
    let m = write_archive(out, &seqs, &splits, 100)?;
    let m = split_dataset(&m, d.valid_fraction, cfg.seed)?;
    m.write_manifest()?;
    println!(
        "wrote {} sequences to {} (train {}, valid {}, test {})",
        m.sequences.len(),
        out.display(),
        m.count(Split::Train),
        m.count(Split::Valid),
        m.count(Split::Test)
    );
    println!("sha256 {}", container_checksum(out)?);
    Ok(())
}

pub const HISTORY_FILE: &str = "history.tsv";
pub const RANKS_FILE: &str = "ranks.tsv";
pub const REPORT_FILE: &str = "report.txt";

struct Trainer<'a> {
    cfg: &'a RunConfig,
    training: &'a TrainingConfig,
    valid: &'a [SequencePair],
    out: &'a Path,
    log: JsonLog,
    last_checkpoint: u64,
    last: Option<StepRecord>,
}

impl Trainer<'_> {
    fn checkpoint(&mut self, state: &GanState, rec: &StepRecord) -> downscale_core::Result<()> {
        let path = self.out.join(format!("checkpoint_{:09}.bin", rec.g_sequences));
        save_checkpoint(&path, &self.cfg.network, self.training, state)?;
        let r = evaluate_suite(
            &self.cfg.network,
            &state.g,
            self.valid,
            self.cfg.history_members,
            self.cfg.noise_amplitude,
            self.cfg.seed,
        )?;
        let hist = self.out.join(HISTORY_FILE);
        let fresh = !hist.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&hist)
            .map_err(|e| downscale_core::Error::io(&hist, e))?;
        let mut line = String::new();
        if fresh {
            line.push_str("g_sequences\tstep\tl_d\tl_g");
            for (k, _) in r.metrics() {
                line.push('\t');
                line.push_str(k);
            }
            line.push('\n');
        }
        line.push_str(&format!("{}\t{}\t{:.6}\t{:.6}", rec.g_sequences, rec.step, rec.l_d, rec.l_g));
        for (_, v) in r.metrics() {
            line.push_str(&v.map_or("\tNA".into(), |x| format!("\t{x:.6}")));
        }
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| downscale_core::Error::io(&hist, e))?;
        log::info!("checkpoint {} at {} sequences", path.display(), rec.g_sequences);
        self.last_checkpoint = rec.step;
        Ok(())
    }
}

impl TrainObserver for Trainer<'_> {
    fn on_step(&mut self, rec: &StepRecord) -> downscale_core::Result<()> {
        self.last = Some(rec.clone());
        self.log.on_step(rec)
    }

    fn on_checkpoint(&mut self, state: &GanState, rec: &StepRecord) -> downscale_core::Result<()> {
        self.checkpoint(state, rec)
    }
}

pub fn train_cmd(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let m = open_dataset(cfg)?;
    let train_pairs = pairs(cfg, &m, Split::Train, None)?;
    let valid = pairs(cfg, &m, Split::Valid, cfg.eval_sequences)?;
    let (training, mut state) = match &cfg.checkpoint {
        Some(p) => {
            let (t, s) = load_checkpoint(p, &cfg.network)?;
            if t != cfg.training {
                log::warn!("resuming with the training settings stored in {}", p.display());
            }
            (t, s)
        }
        None => (cfg.training.clone(), GanState::init(&cfg.network, cfg.seed)),
    };
    make_dir(out)?;
    write_file(&out.join("config.txt"), &cfg.to_text())?;
    let mut obs = Trainer {
        cfg,
        training: &training,
        valid: &valid,
        out,
        log: JsonLog {
            path: out.join("train_log.jsonl"),
        },
        last_checkpoint: state.g_steps,
        last: None,
    };
    train(&cfg.network, &training, &train_pairs, &mut state, cfg.g_steps, &mut obs)?;
    if let Some(rec) = obs.last.take() {
        if obs.last_checkpoint != rec.step {
            obs.checkpoint(&state, &rec)?;
        }
        println!(
            "trained to step {} ({} sequences): l_d {:.4} l_g {:.4}",
            rec.step, rec.g_sequences, rec.l_d, rec.l_g
        );
    }
    Ok(())
}

fn generator(cfg: &RunConfig) -> CliResult<(NetworkConfig, downscale_core::nets::WeightSet)> {
    let p = need(&cfg.checkpoint, "checkpoint")?;
    Ok(load_generator(p)?)
}

pub fn gen_cmd(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let (net, w) = generator(cfg)?;
    let cfg = RunConfig { network: net.clone(), ..cfg.clone() };
    let m = open_dataset(&cfg)?;
    let conditions = pairs(&cfg, &m, Split::Test, cfg.eval_sequences)?;
    let mut members = Vec::new();
    for (i, p) in conditions.iter().enumerate() {
        let seed = downscale_core::training::derive_seed(cfg.seed, 10, i as u64);
        let mut block = generate_ensemble(&net, &w, &p.lr, cfg.ensemble_size, cfg.noise_amplitude, seed)?;
        quantize_members(&mut block.members);
        members.extend(block.members);
    }
    make_dir(out)?;
    let splits = vec![Split::Test; members.len()];
    write_archive(out, &members, &splits, cfg.ensemble_size)?;
    write_file(
        &out.join("ensemble.txt"),
        &format!(
            "ensemble_size = {}\nconditions = {}\nnoise_amplitude = {}\nseed = {}\n",
            cfg.ensemble_size,
            conditions.len(),
            cfg.noise_amplitude,
            cfg.seed
        ),
    )?;
    println!("wrote {} members for {} conditions to {}", members.len(), conditions.len(), out.display());
    Ok(())
}

pub fn write_ranks(path: &Path, t: &RankTally) -> CliResult<()> {
    let mut s = String::from("rank\tcount\tfrequency\n");
    for (k, (c, f)) in t.counts.iter().zip(t.frequencies()).enumerate() {
        s.push_str(&format!("{k}\t{c}\t{f:.8}\n"));
    }
    write_file(path, &s)
}

pub fn eval_cmd(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let (net, w) = generator(cfg)?;
    let cfg = RunConfig { network: net.clone(), ..cfg.clone() };
    let m = open_dataset(&cfg)?;
    let test = pairs(&cfg, &m, Split::Test, cfg.eval_sequences)?;
    let ev = evaluate_pairs(&net, &w, &test, cfg.ensemble_size, cfg.noise_amplitude, cfg.seed)?;
    let report = ev.finish()?;
    make_dir(out)?;
    write_file(&out.join(REPORT_FILE), &report.to_string())?;
    write_ranks(&out.join(RANKS_FILE), ev.tally())?;
    print!("{report}");
    Ok(())
}

pub fn compare_cmd(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let m = open_dataset(cfg)?;
    make_dir(out)?;
    let mut methods = Vec::new();
    for name in &cfg.methods {
        let method = match name.as_str() {
            "gan" => {
                let (net, weights) = generator(cfg)?;
                Method::Gan {
                    net,
                    weights,
                    amplitude: cfg.noise_amplitude,
                }
            }
            "rcnn" => {
                let net = downscale_core::baselines::rcnn_config(&cfg.network);
                let weights = match &cfg.rcnn_checkpoint {
                    Some(p) => load_weights(p, &net)?,
                    None => {
                        let train_pairs = pairs(cfg, &m, Split::Train, None)?;
                        let mut st = RcnnState::init(&cfg.network, cfg.seed);
                        let trace = train_rcnn(&cfg.training, &train_pairs, &mut st, cfg.rcnn_steps, PixelLoss::Rmse)?;
                        log::info!("RCNN trained {} steps, last loss {:?}", cfg.rcnn_steps, trace.last());
                        save_weights(&out.join("rcnn.bin"), &st.net, &st.weights)?;
                        st.weights
                    }
                };
                Method::Rcnn { net, weights }
            }
            "lanczos" => Method::Lanczos,
            "rainfarm" => Method::RainFarm(RainFarmParams::new(cfg.network.factor(), cfg.seed)),
            other => return Err(usage(format!("unknown method '{other}'"))),
        };
        methods.push(method);
    }
    if methods.is_empty() {
        return Err(usage("no methods to compare"));
    }
    let test = pairs(cfg, &m, Split::Test, cfg.eval_sequences)?;
    let results = compare_methods(&test, &methods, cfg.ensemble_size, cfg.seed)?;
    let table = format_comparison(&results);
    write_file(&out.join("comparison.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

/// Every frame of the container, ordered by time.
fn frames_of(m: &DatasetManifest) -> CliResult<Vec<FieldSequence>> {
    let mut frames = Vec::new();
    for i in 0..m.sequences.len() {
        let s = m.load(i)?;
        let d = s.dims;
        for t in 0..d.steps {
            let mut f = s.with_values(Dims::new(1, d.height, d.width, d.vars), s.frame(t).to_vec());
            f.timestamps = vec![s.timestamps[t]];
            frames.push(f);
        }
    }
    frames.sort_by_key(|f| f.timestamps[0]);
    if frames.windows(2).any(|w| w[0].timestamps[0] == w[1].timestamps[0]) {
        return Err(CliError::Data("two frames share a timestamp".into()));
    }
    Ok(frames)
}

pub fn stream_cmd(cfg: &RunConfig) -> CliResult<()> {
    let out = need(&cfg.out, "out")?;
    let (net, w) = generator(cfg)?;
    let m = open_dataset(cfg)?;
    let frames = frames_of(&m)?;
    let sc = StreamConfig {
        dt_minutes: m.dt_minutes,
        lambda_r: cfg.lambda_r,
        amplitude: cfg.noise_amplitude,
        seed: cfg.seed,
    };
    let (outs, events) = stream(&net, &w, &frames, sc)?;
    make_dir(out)?;
    let units: Vec<FieldSequence> = outs.iter().map(|f| f.unit.clone()).collect();
    write_frame_stream(&out.join("frames"), &units, m.dt_minutes)?;
    let mut log = String::new();
    for e in &events {
        let gap = e.gap_minutes.map_or("none".into(), |g| g.to_string());
        log.push_str(&format!("frame={} timestamp={} gap_minutes={gap}\n", e.frame, e.timestamp));
    }
    write_file(&out.join("reinit.log"), &log)?;
    let mut sat = String::from("timestamp\tsaturated_fraction\treinitialized\n");
    for f in &outs {
        sat.push_str(&format!("{}\t{:.6}\t{}\n", f.timestamp, f.saturated_fraction, f.reinitialized));
    }
    write_file(&out.join("frames.tsv"), &sat)?;
    println!("streamed {} frames, {} reinitializations", outs.len(), events.len());
    Ok(())
}

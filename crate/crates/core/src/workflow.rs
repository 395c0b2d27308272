//! The command-line subcommands as library functions.
//!
//! Each function validates its inputs and records the files, configs and
//! seeds it used in a [`RunManifest`]. Callers decide
//! where data and manifests go; the `tapnet` binary writes the manifest to
//! `<output>.manifest.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_dataset, save_dataset, synthesize, synthesize_stream, Conditions, DatasetHeader,
    Direction, FingerPart, Sample, StreamEvent, SynthConfig, TapLabel,
};
use crate::features::{normalize_device, DeviceRegistry};
use crate::gating::{GateConfig, GateDecision};
use crate::model::{Capacity, ModelGraph, TapNetConfig, Task};
use crate::nn::checkpoint::Checkpoint;
use crate::pipeline::{DetectorConfig, TapDetector};
use crate::signal::{read_stream_csv, write_stream_csv, ImuFrame, DEFAULT_SAMPLE_RATE_HZ};
use crate::train::sweep::{sweep as run_sweep, write_rows_csv, write_summary_csv, SweepConfig};
use crate::train::{
    evaluate_paradigm, split_taps, train as run_train, MetricsReport, Paradigm, TrainPlan,
};
use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON encoding of an effective configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

/// Everything needed to rerun a subcommand. Contains no timestamps, so equal
/// runs write equal manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Config and data files read, with content hashes.
    pub inputs: Vec<FileRecord>,
    /// Effective configurations after defaults, by name.
    pub configs: BTreeMap<String, serde_json::Value>,
    pub config_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            inputs: Vec::new(),
            configs: BTreeMap::new(),
            config_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn config<T: Serialize>(&mut self, name: &str, config: &T) -> Result<()> {
        self.config_hashes.insert(name.into(), config_hash(config)?);
        self.configs
            .insert(name.into(), serde_json::to_value(config)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// The manifest path that goes with `output`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Reads a JSON config file; `None` gives the type's defaults.
pub fn load_config<T: DeserializeOwned + Default>(
    path: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            manifest.input(p)?;
            Ok(serde_json::from_slice(&fs::read(p)?)?)
        }
    }
}

/// Named model presets: `mimo-small`, `mimo-large`, `six-channel-small`,
/// `six-channel-large`, `tiny-cnn` and `siso-<task>-<capacity>`.
pub fn model_preset(name: &str) -> Result<TapNetConfig> {
    let capacity = |c: &str| match c {
        "small" => Ok(Capacity::Small),
        "large" => Ok(Capacity::Large),
        _ => Err(Error::Config(format!("unknown capacity `{c}`"))),
    };
    if name == "tiny-cnn" {
        return Ok(TapNetConfig::tiny_cnn());
    }
    if let Some(c) = name.strip_prefix("mimo-") {
        return Ok(TapNetConfig::mimo(capacity(c)?));
    }
    if let Some(c) = name.strip_prefix("six-channel-") {
        return Ok(TapNetConfig::six_channel(capacity(c)?));
    }
    if let Some(rest) = name.strip_prefix("siso-") {
        if let Some((task, c)) = rest.rsplit_once('-') {
            return Ok(TapNetConfig::siso(Task::parse(task)?, capacity(c)?));
        }
    }
    Err(Error::Config(format!("unknown model preset `{name}`")))
}

/// A preset name, or a path to a model config JSON file.
pub fn resolve_model(spec: &str, manifest: &mut RunManifest) -> Result<TapNetConfig> {
    let path = Path::new(spec);
    let config = if path.is_file() {
        manifest.input(path)?;
        serde_json::from_slice(&fs::read(path)?)?
    } else {
        model_preset(spec)?
    };
    config.validate()?;
    Ok(config)
}

pub fn read_stream(path: &Path, manifest: &mut RunManifest) -> Result<Vec<ImuFrame>> {
    manifest.input(path)?;
    read_stream_csv(File::open(path)?)
}

pub fn load_samples(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Sample>> {
    manifest.input(path)?;
    Ok(load_dataset(path)?.1)
}

pub fn load_checkpoint(path: &Path, manifest: &mut RunManifest) -> Result<(ModelGraph, u64)> {
    manifest.input(path)?;
    let ck = Checkpoint::load(path)?;
    Ok((ModelGraph::from_checkpoint(&ck)?, ck.seed))
}

/// Writes `n` synthetic samples to `out`.
pub fn synth(config: &SynthConfig, n: usize, out: &Path, manifest: &mut RunManifest) -> Result<()> {
    config.validate()?;
    manifest.seed = Some(config.seed);
    manifest.config("synth", config)?;
    let samples = synthesize(config, n)?;
    save_dataset(out, &DatasetHeader::new(Some(config.hash())), &samples)?;
    manifest.output(out);
    log::info!("wrote {n} samples to {}", out.display());
    Ok(())
}

/// Writes a replayable stream CSV to `out` and its ground-truth events, one
/// JSON object per line, to `labels`.
pub fn stream(
    config: &SynthConfig,
    events: usize,
    gap_s: f64,
    out: &Path,
    labels: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    if !(gap_s >= 0.0 && gap_s.is_finite()) {
        return Err(Error::Config(format!("gap {gap_s} s must be non-negative")));
    }
    manifest.seed = Some(config.seed);
    manifest.config("synth", config)?;
    let (frames, truth) = synthesize_stream(config, events, gap_s)?;
    write_stream_csv(BufWriter::new(File::create(out)?), &frames)?;
    let mut w = BufWriter::new(File::create(labels)?);
    for e in &truth {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    manifest.output(out);
    manifest.output(labels);
    Ok(())
}

fn detector(gate: &GateConfig, sample_rate_hz: f64) -> Result<TapDetector> {
    gate.validate()?;
    TapDetector::new(DetectorConfig {
        gate: gate.clone(),
        sample_rate_hz,
    })
}

/// One `t_us,pass|reject,anchor_index` line per frame; the anchor index
/// counts frames from the start of the stream and is empty on reject.
pub fn gate<W: Write>(
    frames: &[ImuFrame],
    config: &GateConfig,
    sample_rate_hz: f64,
    out: &mut W,
) -> Result<usize> {
    let mut det = detector(config, sample_rate_hz)?;
    writeln!(out, "t_us,decision,anchor_index")?;
    let mut passed = 0;
    for f in frames {
        let step = det.push(*f)?;
        match (&step.decision, step.anchor_stream_index) {
            (GateDecision::Pass { .. }, Some(i)) => {
                passed += 1;
                writeln!(out, "{},pass,{i}", step.timestamp_us)?;
            }
            _ => writeln!(out, "{},reject,", step.timestamp_us)?,
        }
    }
    Ok(passed)
}

/// Ground-truth anchors further than this from a detected anchor do not label it.
pub const LABEL_TOLERANCE_US: i64 = 10_000;

pub fn read_labels(path: &Path, manifest: &mut RunManifest) -> Result<Vec<StreamEvent>> {
    manifest.input(path)?;
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Corrupt {
                line: i + 1,
                offset: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Gates the stream, aligns each candidate and returns it as a sample.
/// With ground truth, a candidate takes the label of the nearest true anchor
/// within [`LABEL_TOLERANCE_US`]; every other candidate is a non-tap.
pub fn extract(
    frames: &[ImuFrame],
    gate: &GateConfig,
    sample_rate_hz: f64,
    registry: &DeviceRegistry,
    device_id: &str,
    truth: Option<&[StreamEvent]>,
) -> Result<Vec<Sample>> {
    let device = normalize_device(registry.get(device_id)?)?;
    let events = detect(frames, gate, sample_rate_hz)?;
    let mut samples = Vec::with_capacity(events.len());
    for e in events {
        let matched = truth.and_then(|t| {
            t.iter()
                .filter(|s| {
                    (s.anchor_timestamp_us - e.anchor_timestamp_us).abs() <= LABEL_TOLERANCE_US
                })
                .min_by_key(|s| (s.anchor_timestamp_us - e.anchor_timestamp_us).abs())
        });
        let label = match matched {
            Some(s) => TapLabel {
                device_id: device_id.to_string(),
                ..s.label.clone()
            },
            None => TapLabel {
                is_tap: false,
                tap: None,
                participant_id: 0,
                device_id: device_id.to_string(),
                conditions: Conditions::default(),
            },
        };
        let mut feature = e.feature;
        feature.quantize_f32();
        samples.push(Sample {
            feature,
            device,
            label,
        });
    }
    Ok(samples)
}

fn detect(
    frames: &[ImuFrame],
    gate: &GateConfig,
    sample_rate_hz: f64,
) -> Result<Vec<crate::pipeline::DetectedEvent>> {
    let mut det = detector(gate, sample_rate_hz)?;
    let mut events = Vec::new();
    for f in frames {
        events.extend(det.push(*f)?.event);
    }
    events.extend(det.finish()?);
    Ok(events)
}

/// Trains a fresh graph on every tap and non-tap of the dataset and returns
/// the checkpoint with optimizer state.
pub fn train(
    config: TapNetConfig,
    samples: &[Sample],
    plan: &TrainPlan,
) -> Result<(Checkpoint, crate::train::History)> {
    let (taps, nontaps) = split_taps(samples);
    let mut graph = ModelGraph::build(config, plan.seed)?;
    let outcome = run_train(&mut graph, &taps, &nontaps, plan)?;
    let ck = graph.to_checkpoint(Some(&outcome.optimizer), plan.seed)?;
    Ok((ck, outcome.history))
}

pub fn eval(
    graph: &ModelGraph,
    samples: &[Sample],
    paradigm: Paradigm,
    plan: &TrainPlan,
) -> Result<MetricsReport> {
    evaluate_paradigm(graph, samples, paradigm, plan)
}

/// Runs the sweep and writes per-run rows to `out` and mean/std rows to the
/// `summary` path. Infeasible points become manifest notes.
pub fn sweep(
    config: &SweepConfig,
    out: &Path,
    summary: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    manifest.config("sweep", config)?;
    let result = run_sweep(config)?;
    write_rows_csv(BufWriter::new(File::create(out)?), &result.rows)?;
    write_summary_csv(BufWriter::new(File::create(summary)?), &result.summary())?;
    manifest.output(out);
    manifest.output(summary);
    for i in &result.infeasible {
        manifest.notes.push(format!(
            "infeasible point {} seed {}: {}",
            i.point, i.seed, i.reason
        ));
    }
    Ok(())
}

/// One line of `infer` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub anchor_t_us: i64,
    pub anchor_index: usize,
    pub is_tap: Option<bool>,
    pub tap_probability: Option<f64>,
    pub direction: Option<Direction>,
    pub finger_part: Option<FingerPart>,
    pub loc_region: Option<usize>,
    pub loc_xy: Option<[f64; 2]>,
    /// Forward pass only.
    pub compute_ms: f64,
    /// Time from the anchor until the feature window was complete.
    pub window_wait_ms: f64,
}

/// Gate, align and classify every candidate in the stream. Timing fields
/// are wall-clock measurements; everything else is deterministic.
pub fn infer(
    graph: &ModelGraph,
    frames: &[ImuFrame],
    gate: &GateConfig,
    sample_rate_hz: f64,
    device: &[f64; crate::features::DEVICE_VECTOR_LEN],
) -> Result<Vec<InferenceRecord>> {
    let mut det = detector(gate, sample_rate_hz)?;
    let mut records = Vec::new();
    let mut handle = |e: crate::pipeline::DetectedEvent| -> Result<()> {
        let started = Instant::now();
        let out = graph.predict_one(e.feature.values(), device)?;
        let compute_ms = started.elapsed().as_secs_f64() * 1e3;
        records.push(InferenceRecord {
            anchor_t_us: e.anchor_timestamp_us,
            anchor_index: e.anchor_stream_index,
            is_tap: out.class(Task::Event).map(|c| c == 1),
            tap_probability: out.probabilities(Task::Event).map(|p| p[1]),
            direction: out.class(Task::Direction).and_then(Direction::from_index),
            finger_part: out.class(Task::Finger).and_then(FingerPart::from_index),
            loc_region: out.class(Task::LocationClass),
            loc_xy: out.location_xy,
            compute_ms,
            window_wait_ms: e.window_wait_us() as f64 / 1e3,
        });
        Ok(())
    };
    for f in frames {
        if let Some(e) = det.push(*f)?.event {
            handle(e)?;
        }
    }
    if let Some(e) = det.finish()? {
        handle(e)?;
    }
    Ok(records)
}

/// Sample rate used when a subcommand is not told otherwise.
pub const SAMPLE_RATE_HZ: f64 = DEFAULT_SAMPLE_RATE_HZ;

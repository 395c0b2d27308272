//! `tapnet`: synthesize data, gate and extract streams, train, evaluate,
//! sweep and run inference. Data goes to stdout or `--out`, logs to stderr.
//! Every run writes a manifest beside its output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tapnet::data::{save_dataset, DatasetHeader, SynthConfig};
use tapnet::features::{normalize_device, DeviceRegistry};
use tapnet::gating::GateConfig;
use tapnet::train::sweep::{Experiment, SweepConfig};
use tapnet::train::{Paradigm, TrainPlan};
use tapnet::workflow::{self, RunManifest};
use tapnet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tapnet",
    version,
    about = "Off-screen tap recognition from phone IMU streams"
)]
struct Cli {
    /// Seed for every random choice; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Manifest path; defaults to `<out>.manifest.json`, or
    /// `<subcommand>.manifest.json` when writing to stdout.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a replayable raw stream CSV with ground-truth events.
    Stream {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        events: usize,
        /// Seconds of sensor noise between events.
        #[arg(long, default_value_t = 0.5)]
        gap: f64,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth events, one JSON object per line.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Print one gating decision per frame: `t_us,decision,anchor_index`.
    Gate {
        #[arg(long)]
        stream: PathBuf,
        #[command(flatten)]
        gate: GateArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate and align a stream into a dataset file.
    Extract {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        device: String,
        #[command(flatten)]
        devices: RegistryArgs,
        /// Ground-truth events used to label the candidates.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        gate: GateArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Preset (`mimo-small`, `mimo-large`, `six-channel-small`,
        /// `siso-direction-small`, `tiny-cnn`, ...) or a model config JSON file.
        #[arg(long, default_value = "mimo-small")]
        model: String,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint and print a metrics report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ParadigmArg::OneToN)]
        paradigm: ParadigmArg,
        /// Fine-tuning schedule for leave-one-out.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment sweep; writes per-run rows and a summary CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the experiment named in the config.
        #[arg(long, value_enum)]
        experiment: Option<ExperimentArg>,
        /// Comma-separated training sizes; overrides the config grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.summary.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Gate, align and classify a stream; one JSON line per candidate.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        device: String,
        #[command(flatten)]
        devices: RegistryArgs,
        #[command(flatten)]
        gate: GateArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct GateArgs {
    /// Gate config JSON; defaults to the adaptive gate.
    #[arg(long)]
    gate_config: Option<PathBuf>,
    #[arg(long, default_value_t = workflow::SAMPLE_RATE_HZ)]
    sample_rate: f64,
}

#[derive(clap::Args)]
struct RegistryArgs {
    /// Device registry JSON; defaults to the built-in devices A and B.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParadigmArg {
    OneToN,
    LeaveOneOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    TrainingSize,
    CrossDevice,
    ChannelAblation,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::TrainingSize => Experiment::TrainingSize,
            ExperimentArg::CrossDevice => Experiment::CrossDevice,
            ExperimentArg::ChannelAblation => Experiment::ChannelAblation,
        }
    }
}

fn registry(args: &RegistryArgs, manifest: &mut RunManifest) -> Result<DeviceRegistry> {
    match &args.registry {
        Some(p) => {
            manifest.input(p)?;
            DeviceRegistry::load(p)
        }
        None => Ok(DeviceRegistry::builtin()),
    }
}

fn gate_config(args: &GateArgs, manifest: &mut RunManifest) -> Result<GateConfig> {
    if !(args.sample_rate > 0.0) {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    let gate: GateConfig = workflow::load_config(args.gate_config.as_deref(), manifest)?;
    gate.validate()?;
    manifest.config("gate", &gate)?;
    Ok(gate)
}

fn plan(path: Option<&Path>, seed: Option<u64>, manifest: &mut RunManifest) -> Result<TrainPlan> {
    let mut plan: TrainPlan = workflow::load_config(path, manifest)?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    plan.validate()?;
    manifest.seed = Some(plan.seed);
    manifest.config("plan", &plan)?;
    Ok(plan)
}

/// Opens `out`, or stdout when absent.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json_line<W: Write + ?Sized, T: serde::Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Synth { .. } => "synth",
        Command::Stream { .. } => "stream",
        Command::Gate { .. } => "gate",
        Command::Extract { .. } => "extract",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
        Command::Infer { .. } => "infer",
    };
    let mut manifest = RunManifest::new(name);
    let primary: Option<PathBuf> = match &cli.command {
        Command::Synth { config, n, out } => {
            let mut synth: SynthConfig = workflow::load_config(config.as_deref(), &mut manifest)?;
            if let Some(s) = cli.seed {
                synth.seed = s;
            }
            workflow::synth(&synth, *n, out, &mut manifest)?;
            Some(out.clone())
        }
        Command::Stream {
            config,
            events,
            gap,
            out,
            labels,
        } => {
            let mut synth: SynthConfig = workflow::load_config(config.as_deref(), &mut manifest)?;
            if let Some(s) = cli.seed {
                synth.seed = s;
            }
            workflow::stream(&synth, *events, *gap, out, labels, &mut manifest)?;
            Some(out.clone())
        }
        Command::Gate { stream, gate, out } => {
            let config = gate_config(gate, &mut manifest)?;
            let frames = workflow::read_stream(stream, &mut manifest)?;
            let mut w = sink(out.as_deref())?;
            let passed = workflow::gate(&frames, &config, gate.sample_rate, &mut w)?;
            w.flush()?;
            log::info!("{passed} of {} frames passed the gate", frames.len());
            out.clone()
        }
        Command::Extract {
            stream,
            device,
            devices,
            labels,
            gate,
            out,
        } => {
            let config = gate_config(gate, &mut manifest)?;
            let reg = registry(devices, &mut manifest)?;
            let frames = workflow::read_stream(stream, &mut manifest)?;
            let truth = labels
                .as_deref()
                .map(|p| workflow::read_labels(p, &mut manifest))
                .transpose()?;
            if truth.is_none() {
                log::warn!("no labels given: every candidate is written as a non-tap");
            }
            let samples = workflow::extract(
                &frames,
                &config,
                gate.sample_rate,
                &reg,
                device,
                truth.as_deref(),
            )?;
            save_dataset(out, &DatasetHeader::new(None), &samples)?;
            log::info!("extracted {} candidates", samples.len());
            manifest.output(out);
            Some(out.clone())
        }
        Command::Train {
            data,
            model,
            plan: plan_path,
            out,
        } => {
            let config = workflow::resolve_model(model, &mut manifest)?;
            manifest.config("model", &config)?;
            let plan = plan(plan_path.as_deref(), cli.seed, &mut manifest)?;
            let samples = workflow::load_samples(data, &mut manifest)?;
            let (checkpoint, history) = workflow::train(config, &samples, &plan)?;
            checkpoint.save(out)?;
            log::info!(
                "trained {} cycles, final validation loss {:?}",
                history.cycles,
                history.validation.last()
            );
            manifest.output(out);
            Some(out.clone())
        }
        Command::Eval {
            checkpoint,
            data,
            paradigm,
            plan: plan_path,
            out,
        } => {
            let (graph, _) = workflow::load_checkpoint(checkpoint, &mut manifest)?;
            let plan = plan(plan_path.as_deref(), cli.seed, &mut manifest)?;
            let samples = workflow::load_samples(data, &mut manifest)?;
            let paradigm = match paradigm {
                ParadigmArg::OneToN => Paradigm::OneToN,
                ParadigmArg::LeaveOneOut => Paradigm::LeaveOneOut,
            };
            manifest.config("paradigm", &paradigm)?;
            let report = workflow::eval(&graph, &samples, paradigm, &plan)?;
            let mut w = sink(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            w.write_all(b"\n")?;
            w.flush()?;
            out.clone()
        }
        Command::Sweep {
            config,
            experiment,
            grid,
            out,
            summary,
        } => {
            let mut sweep: SweepConfig = workflow::load_config(config.as_deref(), &mut manifest)?;
            if let Some(e) = experiment {
                sweep.experiment = (*e).into();
            }
            if let Some(g) = grid {
                sweep.grid = g.clone();
            }
            if let Some(s) = cli.seed {
                sweep.synth.seed = s;
                sweep.plan.seed = s;
            }
            manifest.seed = Some(sweep.synth.seed);
            let summary = summary
                .clone()
                .unwrap_or_else(|| out.with_extension("summary.csv"));
            workflow::sweep(&sweep, out, &summary, &mut manifest)?;
            Some(out.clone())
        }
        Command::Infer {
            checkpoint,
            stream,
            device,
            devices,
            gate,
            out,
        } => {
            let config = gate_config(gate, &mut manifest)?;
            let reg = registry(devices, &mut manifest)?;
            let vector = normalize_device(reg.get(device)?)?;
            let (graph, _) = workflow::load_checkpoint(checkpoint, &mut manifest)?;
            let frames = workflow::read_stream(stream, &mut manifest)?;
            let records = workflow::infer(&graph, &frames, &config, gate.sample_rate, &vector)?;
            let mut w = sink(out.as_deref())?;
            for r in &records {
                write_json_line(&mut w, r)?;
            }
            w.flush()?;
            manifest
                .notes
                .push("compute_ms and window_wait_ms are wall-clock measurements".into());
            out.clone()
        }
    };
    if let Some(p) = &primary {
        if !manifest.outputs.iter().any(|o| Path::new(o) == p) {
            manifest.output(p);
        }
    }
    let path = cli.manifest.clone().unwrap_or_else(|| match &primary {
        Some(p) => RunManifest::path_for(p),
        None => PathBuf::from(format!("{name}.manifest.json")),
    });
    manifest.save(&path)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let report = serde_json::json!({ "error": e.to_string(), "exit_code": code });
            eprintln!("{report}");
            ExitCode::from(code as u8)
        }
    }
}

//! Incremental-sample experiments on synthetic data.
//!
//! Every grid point is a count of training taps (per device for the
//! cross-device experiment). Sample `i` of a synthetic draw does not depend
//! on the draw size, so smaller grid points train on prefixes of larger ones.
//! All models of one experiment are scored on the same held-out test set.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{evaluate, fine_tune, train, MetricsReport, TrainPlan};
use crate::data::{synthesize, Sample, SynthConfig};
use crate::model::{Capacity, ModelGraph, TapNetConfig, Task};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// MIMO against single-task networks as the training set grows.
    TrainingSize,
    /// Joint two-device training against pre-train/fine-tune and single-device.
    CrossDevice,
    /// One-channel against six-channel convolutions on direction.
    ChannelAblation,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::TrainingSize => "training-size",
            Experiment::CrossDevice => "cross-device",
            Experiment::ChannelAblation => "channel-ablation",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Self::TrainingSize, Self::CrossDevice, Self::ChannelAblation]
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub experiment: Experiment,
    /// Training tap counts.
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Non-tap training samples per training tap.
    pub nontap_ratio: f64,
    /// Test taps per device; non-taps are added at `nontap_ratio`.
    pub test_samples: usize,
    /// Capacities compared by the channel ablation; the first one sizes the
    /// other experiments.
    pub capacities: Vec<Capacity>,
    /// Single-task baselines of the training-size experiment.
    pub siso_tasks: Vec<Task>,
    /// The two devices of the cross-device experiment; the first one is used
    /// alone elsewhere.
    pub devices: [String; 2],
    pub synth: SynthConfig,
    pub plan: TrainPlan,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::TrainingSize,
            grid: vec![1000, 2000, 4000, 8000, 15000],
            seeds: vec![0, 1, 2],
            nontap_ratio: 0.2,
            test_samples: 1000,
            capacities: vec![Capacity::Small, Capacity::Large],
            siso_tasks: vec![Task::Direction],
            devices: ["A".into(), "B".into()],
            synth: SynthConfig::default(),
            plan: TrainPlan::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("the sweep grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("the sweep needs at least one seed".into()));
        }
        if self.capacities.is_empty() {
            return Err(Error::Config(
                "the sweep needs at least one capacity".into(),
            ));
        }
        if !(self.nontap_ratio >= 0.0 && self.nontap_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "non-tap ratio {} is negative",
                self.nontap_ratio
            )));
        }
        if self.test_samples == 0 {
            return Err(Error::Config("the test set is empty".into()));
        }
        if self.siso_tasks.contains(&Task::Event) {
            return Err(Error::Config(
                "single-task baselines cover property tasks only".into(),
            ));
        }
        self.synth.validate()?;
        for d in &self.devices {
            self.synth.registry.get(d)?;
        }
        self.plan.validate()
    }

    fn capacity(&self) -> Capacity {
        self.capacities[0]
    }
}

/// One CSV row: `experiment,point,seed,task,metric,value`. The metric names
/// the model or condition and the quantity, for example `mimo.f1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: String,
    pub point: usize,
    pub seed: u64,
    pub task: String,
    pub metric: String,
    pub value: f64,
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub point: usize,
    pub task: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// A grid point that could not be trained; the sweep carries on without it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Infeasible {
    pub point: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub infeasible: Vec<Infeasible>,
}

impl SweepResult {
    pub fn summary(&self) -> Vec<SummaryRow> {
        summarize(&self.rows)
    }

    /// Mean over seeds of `metric` on `task`, ordered by grid point.
    pub fn curve(&self, task: &str, metric: &str) -> Vec<(usize, f64)> {
        self.summary()
            .into_iter()
            .filter(|r| r.task == task && r.metric == metric)
            .map(|r| (r.point, r.mean))
            .collect()
    }

    /// Values of `metric` on `task` at one point, in seed order.
    pub fn values(&self, point: usize, task: &str, metric: &str) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.point == point && r.task == task && r.metric == metric)
            .map(|r| (r.seed, r.value))
            .collect()
    }
}

/// Disjoint per-role draws of the synthetic generator.
fn derived_seed(base: u64, seed: u64, role: u64) -> u64 {
    base ^ seed.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ role.wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

const TEST_ROLE: u64 = 0xffff;

fn draw(
    config: &SweepConfig,
    device: &str,
    seed: u64,
    role: u64,
    taps: usize,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let base = SynthConfig {
        devices: vec![device.to_string()],
        ..config.synth.clone()
    };
    let tap_cfg = SynthConfig {
        tap_fraction: 1.0,
        seed: derived_seed(base.seed, seed, 2 * role),
        ..base.clone()
    };
    let non_cfg = SynthConfig {
        tap_fraction: 0.0,
        seed: derived_seed(base.seed, seed, 2 * role + 1),
        ..base
    };
    let nontaps = (taps as f64 * config.nontap_ratio).round() as usize;
    Ok((synthesize(&tap_cfg, taps)?, synthesize(&non_cfg, nontaps)?))
}

fn test_set(config: &SweepConfig, device: &str) -> Result<Vec<Sample>> {
    let (mut taps, nontaps) = draw(config, device, TEST_ROLE, TEST_ROLE, config.test_samples)?;
    taps.extend(nontaps);
    Ok(taps)
}

fn fit(
    config: TapNetConfig,
    seed: u64,
    taps: &[Sample],
    nontaps: &[Sample],
    plan: &TrainPlan,
) -> Result<ModelGraph> {
    let mut graph = ModelGraph::build(config, seed)?;
    let plan = TrainPlan {
        seed,
        ..plan.clone()
    };
    train(&mut graph, taps, nontaps, &plan)?;
    Ok(graph)
}

fn single_task(config: TapNetConfig, task: Task) -> TapNetConfig {
    TapNetConfig {
        heads: vec![task],
        ..config
    }
}

/// Accumulates rows for one grid point and seed.
struct Emit<'a> {
    experiment: &'a str,
    point: usize,
    seed: u64,
    rows: Vec<SweepRow>,
}

impl Emit<'_> {
    fn push(&mut self, task: &str, metric: String, value: f64) {
        self.rows.push(SweepRow {
            experiment: self.experiment.to_string(),
            point: self.point,
            seed: self.seed,
            task: task.to_string(),
            metric,
            value,
        });
    }

    /// Every score in `report`, prefixed with the model or condition name.
    fn report(&mut self, prefix: &str, report: &MetricsReport) {
        for (task, m) in &report.classification {
            self.push(task, format!("{prefix}.f1"), m.weighted_f1);
        }
        if let Some(loc) = &report.location {
            self.push(Task::LocationXy.name(), format!("{prefix}.mae"), loc.mae);
            self.push(Task::LocationXy.name(), format!("{prefix}.r2"), loc.r2);
        }
    }
}

fn training_size(
    config: &SweepConfig,
    n: usize,
    seed: u64,
    test: &[Sample],
    out: &mut Emit<'_>,
) -> Result<()> {
    let (taps, nontaps) = draw(config, &config.devices[0], seed, 0, n)?;
    let mimo = fit(
        TapNetConfig::mimo(config.capacity()),
        seed,
        &taps,
        &nontaps,
        &config.plan,
    )?;
    out.report("mimo", &evaluate(&mimo, test)?);
    for &task in &config.siso_tasks {
        let siso = fit(
            TapNetConfig::siso(task, config.capacity()),
            seed,
            &taps,
            &[],
            &config.plan,
        )?;
        let report = evaluate(&siso, test)?;
        // Only the trained task is meaningful for a single-branch model.
        let mut own = MetricsReport {
            samples: report.samples,
            taps: report.taps,
            ..Default::default()
        };
        if let Some(m) = report.classification.get(task.name()) {
            own.classification
                .insert(task.name().to_string(), m.clone());
        }
        own.location = report.location.filter(|_| task == Task::LocationXy);
        out.report("siso", &own);
    }
    Ok(())
}

fn cross_device(
    config: &SweepConfig,
    n: usize,
    seed: u64,
    tests: &[Vec<Sample>; 2],
    out: &mut Emit<'_>,
) -> Result<()> {
    let [a, b] = &config.devices;
    let (a_taps, a_non) = draw(config, a, seed, 0, n)?;
    let (b_taps, b_non) = draw(config, b, seed, 1, n)?;
    let model = TapNetConfig::mimo(config.capacity());

    let a_only = fit(model.clone(), seed, &a_taps, &a_non, &config.plan)?;
    let b_only = fit(model.clone(), seed, &b_taps, &b_non, &config.plan)?;
    let joint_taps: Vec<Sample> = a_taps.iter().chain(&b_taps).cloned().collect();
    let joint_non: Vec<Sample> = a_non.iter().chain(&b_non).cloned().collect();
    let joint = fit(model, seed, &joint_taps, &joint_non, &config.plan)?;
    let plan = TrainPlan {
        seed,
        ..config.plan.clone()
    };
    let mut a_to_b = a_only.clone();
    fine_tune(&mut a_to_b, &b_taps, &b_non, &plan)?;
    let mut b_to_a = b_only.clone();
    fine_tune(&mut b_to_a, &a_taps, &a_non, &plan)?;

    let [test_a, test_b] = tests;
    out.report(&format!("{a}+{b}@{a}"), &evaluate(&joint, test_a)?);
    out.report(&format!("{a}+{b}@{b}"), &evaluate(&joint, test_b)?);
    out.report(&format!("{b}->{a}@{a}"), &evaluate(&b_to_a, test_a)?);
    out.report(&format!("{a}->{b}@{b}"), &evaluate(&a_to_b, test_b)?);
    out.report(&format!("{a}@{a}"), &evaluate(&a_only, test_a)?);
    out.report(&format!("{b}@{b}"), &evaluate(&b_only, test_b)?);
    Ok(())
}

fn capacity_name(c: Capacity) -> &'static str {
    match c {
        Capacity::Small => "small",
        Capacity::Large => "large",
    }
}

fn channel_ablation(
    config: &SweepConfig,
    n: usize,
    seed: u64,
    test: &[Sample],
    out: &mut Emit<'_>,
) -> Result<()> {
    let (taps, _) = draw(config, &config.devices[0], seed, 0, n)?;
    let task = Task::Direction;
    for &capacity in &config.capacities {
        for (name, model) in [
            ("one_channel", TapNetConfig::one_channel(capacity)),
            ("six_channel", TapNetConfig::six_channel(capacity)),
        ] {
            let prefix = format!("{name}.{}", capacity_name(capacity));
            let graph = fit(single_task(model, task), seed, &taps, &[], &config.plan)?;
            let report = evaluate(&graph, test)?;
            let f1 = report
                .f1(task.name())
                .ok_or_else(|| Error::Empty("no direction predictions".into()))?;
            out.push(task.name(), format!("{prefix}.f1"), f1);
            out.push(
                task.name(),
                format!("{prefix}.params"),
                graph.count_params() as f64,
            );
        }
    }
    Ok(())
}

/// Runs every grid point for every seed. Points that cannot be trained, such
/// as one too small for a validation split, are listed in
/// [`SweepResult::infeasible`]; numeric faults abort the sweep.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let experiment = config.experiment.name();
    let tests = [
        test_set(config, &config.devices[0])?,
        test_set(config, &config.devices[1])?,
    ];
    let mut result = SweepResult::default();
    for &point in &config.grid {
        for &seed in &config.seeds {
            log::info!("{experiment}: point {point}, seed {seed}");
            let mut out = Emit {
                experiment,
                point,
                seed,
                rows: Vec::new(),
            };
            let outcome = match config.experiment {
                Experiment::TrainingSize => training_size(config, point, seed, &tests[0], &mut out),
                Experiment::CrossDevice => cross_device(config, point, seed, &tests, &mut out),
                Experiment::ChannelAblation => {
                    channel_ablation(config, point, seed, &tests[0], &mut out)
                }
            };
            match outcome {
                Ok(()) => result.rows.extend(out.rows),
                Err(e @ (Error::TrainingFault(_) | Error::Io(_))) => return Err(e),
                Err(e) => {
                    log::warn!("{experiment}: point {point}, seed {seed} is infeasible: {e}");
                    result.infeasible.push(Infeasible {
                        point,
                        seed,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(result)
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, usize, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.experiment, r.point, &r.task, &r.metric))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((experiment, point, task, metric), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                experiment: experiment.to_string(),
                point,
                task: task.to_string(),
                metric: metric.to_string(),
                mean,
                std,
                runs: values.len(),
            }
        })
        .collect()
}

/// The first grid point whose value comes within `tolerance` of the best
/// value on the curve. `curve` must be ordered by point.
pub fn plateau_point(curve: &[(usize, f64)], tolerance: f64) -> Option<usize> {
    let best = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    curve.iter().find(|c| c.1 >= best - tolerance).map(|c| c.0)
}

/// The first grid point at which `curve` reaches `target`.
pub fn budget_to_reach(curve: &[(usize, f64)], target: f64) -> Option<usize> {
    curve.iter().find(|c| c.1 >= target).map(|c| c.0)
}

pub fn write_rows_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

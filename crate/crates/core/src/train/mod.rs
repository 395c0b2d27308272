//! Alternating multi-task training, metrics, evaluation paradigms and
//! experiment sweeps.
//!
//! A training cycle runs the property epochs (direction, finger and both
//! location heads, tap samples only) followed by the event epochs (tap and
//! non-tap samples). The trunk is updated in both phases; a head is updated
//! only in its own phase.

mod evaluate;
mod metrics;
pub mod sweep;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use evaluate::{evaluate, evaluate_paradigm, leave_one_out, one_to_n, Paradigm};
pub use metrics::{
    location_error, location_mae, r2, weighted_f1, ClassMetrics, ConfusionMatrix, LocationMetrics,
    MetricsReport,
};

use crate::data::{augment_scale, augment_shift, Sample};
use crate::model::{HeadTarget, ModelGraph, ModelInput, Target, Task};
use crate::nn::{AdamConfig, Mode, OptimizerState, Tensor};
use crate::{Error, Result};

/// Per-head loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub event: f64,
    pub direction: f64,
    pub finger: f64,
    pub loc_class: f64,
    pub loc_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            event: 1.0,
            direction: 1.0,
            finger: 1.0,
            loc_class: 1.0,
            loc_reg: 1.0,
        }
    }
}

impl LossWeights {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Event => self.event,
            Task::Direction => self.direction,
            Task::Finger => self.finger,
            Task::LocationClass => self.loc_class,
            Task::LocationXy => self.loc_reg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub property_epochs: usize,
    pub event_epochs: usize,
    pub batch_size: usize,
    pub max_cycles: usize,
    /// Cycles without a validation improvement of `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,
    pub loss_weights: LossWeights,
    pub optimizer: AdamConfig,
    /// Largest random temporal shift applied to training samples; 0 disables.
    pub max_shift: usize,
    /// Random amplitude scaling by `1 ± scale_delta`; off unless set.
    pub scale_delta: Option<f64>,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            property_epochs: 10,
            event_epochs: 1,
            batch_size: 64,
            max_cycles: 10,
            patience: 3,
            min_delta: 1e-4,
            validation_fraction: 0.05,
            loss_weights: LossWeights::default(),
            optimizer: AdamConfig::default(),
            max_shift: 5,
            scale_delta: None,
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction {} must be in (0, 1)",
                self.validation_fraction
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        let w = &self.loss_weights;
        if [w.event, w.direction, w.finger, w.loc_class, w.loc_reg]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.max_shift >= crate::features::SEGMENT_LEN {
            return Err(Error::Config(
                "max shift must be below the segment length".into(),
            ));
        }
        self.optimizer.validate()
    }

    /// The schedule used for fine-tuning: a tenth of the learning rate.
    pub fn fine_tuning(&self) -> Self {
        let mut plan = self.clone();
        plan.optimizer.learning_rate /= 10.0;
        plan
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Property,
    Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub cycle: usize,
    pub phase: Phase,
    pub epoch: usize,
    /// Mean weighted training loss over batches.
    pub loss: f64,
    pub task_losses: Vec<(Task, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub validation: Vec<f64>,
    pub cycles: usize,
    pub stopped_early: bool,
}

pub struct TrainOutcome {
    pub history: History,
    pub optimizer: OptimizerState,
}

/// Splits samples into taps and non-taps.
pub fn split_taps(samples: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    samples.iter().cloned().partition(Sample::is_tap)
}

/// Seeded hold-out: returns `(train, validation)` index lists over `n`.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_val = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Consecutive batches; a trailing batch of one sample joins the previous
/// batch because batch normalization needs two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map_or(false, |b| b.len() == 1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

fn class_of(sample: &Sample, task: Task) -> usize {
    match task {
        Task::Event => sample.is_tap() as usize,
        Task::Direction => sample.tap().expect("tap sample").direction.index(),
        Task::Finger => sample.tap().expect("tap sample").finger_part.index(),
        Task::LocationClass => sample.tap().expect("tap sample").loc_region,
        Task::LocationXy => unreachable!("regression task"),
    }
}

/// Targets for `tasks` over a batch of samples.
pub fn targets(
    samples: &[&Sample],
    tasks: &[Task],
    weights: &LossWeights,
) -> Result<Vec<HeadTarget>> {
    tasks
        .iter()
        .map(|&task| {
            let target = if task.is_classification() {
                if task != Task::Event && samples.iter().any(|s| !s.is_tap()) {
                    return Err(Error::Config(format!("{task} targets need tap samples")));
                }
                Target::Classes(samples.iter().map(|s| class_of(s, task)).collect())
            } else {
                let mut v = Vec::with_capacity(samples.len() * 2);
                for s in samples {
                    let tap = s
                        .tap()
                        .ok_or_else(|| Error::Config("location targets need tap samples".into()))?;
                    v.extend_from_slice(&tap.loc_xy);
                }
                Target::Values(Tensor::new(vec![samples.len(), 2], v)?)
            };
            Ok(HeadTarget {
                task,
                target,
                weight: weights.get(task),
            })
        })
        .collect()
}

pub fn prepare(graph: &ModelGraph, samples: &[&Sample]) -> Result<ModelInput> {
    let feats: Vec<&[f64]> = samples.iter().map(|s| s.feature.values()).collect();
    let devs: Vec<[f64; 7]> = samples.iter().map(|s| s.device).collect();
    graph.prepare(&feats, &devs)
}

/// Mean weighted loss over `samples` in inference mode.
fn dataset_loss(
    graph: &ModelGraph,
    samples: &[&Sample],
    tasks: &[Task],
    plan: &TrainPlan,
) -> Result<f64> {
    if samples.is_empty() || tasks.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(256) {
        let input = prepare(graph, chunk)?;
        let t = targets(chunk, tasks, &plan.loss_weights)?;
        total += graph.loss(&input, &t, Mode::Infer)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Hook invoked after every epoch; used to inspect parameters mid-training.
pub type EpochObserver<'a> = dyn FnMut(&EpochRecord, &ModelGraph) + 'a;

struct PhaseData<'a> {
    tasks: Vec<Task>,
    train: Vec<&'a Sample>,
    val: Vec<&'a Sample>,
}

/// Trains `graph` in place with the alternating schedule.
pub fn train(
    graph: &mut ModelGraph,
    taps: &[Sample],
    nontaps: &[Sample],
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    train_observed(graph, taps, nontaps, plan, &mut |_, _| {})
}

pub fn train_observed(
    graph: &mut ModelGraph,
    taps: &[Sample],
    nontaps: &[Sample],
    plan: &TrainPlan,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainOutcome> {
    let optimizer = OptimizerState::new(plan.optimizer, graph.store());
    run(graph, taps, nontaps, plan, optimizer, observer)
}

/// Continues training a pre-trained graph at a tenth of the plan's learning
/// rate with fresh optimizer state. Every layer stays trainable.
pub fn fine_tune(
    graph: &mut ModelGraph,
    taps: &[Sample],
    nontaps: &[Sample],
    plan: &TrainPlan,
) -> Result<TrainOutcome> {
    let plan = plan.fine_tuning();
    let optimizer = OptimizerState::new(plan.optimizer, graph.store());
    run(graph, taps, nontaps, &plan, optimizer, &mut |_, _| {})
}

fn run(
    graph: &mut ModelGraph,
    taps: &[Sample],
    nontaps: &[Sample],
    plan: &TrainPlan,
    mut optimizer: OptimizerState,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    if let Some(s) = taps.iter().find(|s| !s.is_tap()) {
        return Err(Error::Config(format!(
            "tap data contains a non-tap sample from participant {}",
            s.label.participant_id
        )));
    }
    if nontaps.iter().any(Sample::is_tap) {
        return Err(Error::Config("non-tap data contains a tap sample".into()));
    }
    let property_tasks: Vec<Task> = Task::PROPERTIES
        .into_iter()
        .filter(|t| graph.has_head(*t))
        .collect();
    let has_event = graph.has_head(Task::Event);

    let (tap_train, tap_val) = validation_split(taps.len(), plan.validation_fraction, plan.seed);
    let (non_train, non_val) =
        validation_split(nontaps.len(), plan.validation_fraction, plan.seed ^ 0x9e37);
    let tap_train: Vec<&Sample> = tap_train.iter().map(|&i| &taps[i]).collect();
    let tap_val: Vec<&Sample> = tap_val.iter().map(|&i| &taps[i]).collect();
    let mut event_train = tap_train.clone();
    event_train.extend(non_train.iter().map(|&i| &nontaps[i]));
    let mut event_val = tap_val.clone();
    event_val.extend(non_val.iter().map(|&i| &nontaps[i]));

    let mut phases = Vec::new();
    if !property_tasks.is_empty() && plan.property_epochs > 0 {
        if tap_train.is_empty() {
            return Err(Error::Empty(
                "no tap samples to train the property heads".into(),
            ));
        }
        phases.push((
            Phase::Property,
            plan.property_epochs,
            PhaseData {
                tasks: property_tasks,
                train: tap_train,
                val: tap_val,
            },
        ));
    }
    if has_event && plan.event_epochs > 0 {
        if event_train.is_empty() {
            return Err(Error::Empty("no samples to train the event head".into()));
        }
        phases.push((
            Phase::Event,
            plan.event_epochs,
            PhaseData {
                tasks: vec![Task::Event],
                train: event_train,
                val: event_val,
            },
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut history = History::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    if phases.is_empty() {
        return Ok(TrainOutcome { history, optimizer });
    }
    for cycle in 0..plan.max_cycles {
        for (phase, epochs, data) in &phases {
            for epoch in 0..*epochs {
                let record = run_epoch(
                    graph,
                    &mut optimizer,
                    data,
                    plan,
                    &mut rng,
                    cycle,
                    *phase,
                    epoch,
                )?;
                observer(&record, graph);
                history.epochs.push(record);
            }
        }
        let mut val = 0.0;
        for (_, _, data) in &phases {
            val += dataset_loss(graph, &data.val, &data.tasks, plan)?;
        }
        if !val.is_finite() {
            return Err(Error::TrainingFault(format!(
                "validation loss is {val} in cycle {cycle}"
            )));
        }
        history.validation.push(val);
        history.cycles = cycle + 1;
        log::info!("cycle {cycle}: validation loss {val:.5}");
        if val < best - plan.min_delta {
            best = val;
            stale = 0;
        } else {
            stale += 1;
            if stale >= plan.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { history, optimizer })
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    graph: &mut ModelGraph,
    optimizer: &mut OptimizerState,
    data: &PhaseData<'_>,
    plan: &TrainPlan,
    rng: &mut ChaCha8Rng,
    cycle: usize,
    phase: Phase,
    epoch: usize,
) -> Result<EpochRecord> {
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(rng);
    let batches = batches(&order, plan.batch_size);
    if batches.iter().any(|b| b.len() < 2) {
        return Err(Error::BatchTooSmall(1));
    }
    let mut total = 0.0;
    let mut task_totals = vec![0.0; data.tasks.len()];
    let mut count = 0usize;
    for batch in batches {
        let mut owned: Vec<Sample> = Vec::with_capacity(batch.len());
        for &i in batch {
            let mut s = if plan.max_shift > 0 {
                augment_shift(data.train[i], plan.max_shift, rng)?
            } else {
                data.train[i].clone()
            };
            if let Some(delta) = plan.scale_delta {
                s = augment_scale(&s, delta, rng)?;
            }
            owned.push(s);
        }
        let refs: Vec<&Sample> = owned.iter().collect();
        let input = prepare(graph, &refs)?;
        let t = targets(&refs, &data.tasks, &plan.loss_weights)?;
        let step = graph.loss_and_gradients(&input, &t, Mode::Train)?;
        if !step.loss.is_finite() {
            return Err(Error::TrainingFault(format!(
                "loss is {} in cycle {cycle}",
                step.loss
            )));
        }
        optimizer.step(graph.store_mut(), &step.gradients)?;
        graph.apply_batchnorm(&step.batchnorm);
        total += step.loss * batch.len() as f64;
        for (acc, (_, l)) in task_totals.iter_mut().zip(&step.task_losses) {
            *acc += l * batch.len() as f64;
        }
        count += batch.len();
    }
    let n = count.max(1) as f64;
    Ok(EpochRecord {
        cycle,
        phase,
        epoch,
        loss: total / n,
        task_losses: data
            .tasks
            .iter()
            .copied()
            .zip(task_totals.into_iter().map(|v| v / n))
            .collect(),
    })
}

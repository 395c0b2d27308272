//! The multi-task tap network: a shared convolution trunk over the aligned
//! feature vector, the device vector joined after flattening, and one fully
//! connected branch per task.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{ANCHOR_CHANNEL, DEVICE_VECTOR_LEN, FEATURE_LEN, SEGMENT_LEN};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::layers::{BatchNorm, Cache, Conv1d, Dense};
use crate::nn::{
    mse, softmax, softmax_cross_entropy, BatchNormStats, Gradients, Layer, LayerSpec, Mode,
    OptimizerState, ParamId, ParamStore, Sequential, Tensor,
};
use crate::signal::CHANNELS;
use crate::{Error, Result};

pub const LOCATION_COLUMNS: usize = 5;
pub const LOCATION_ROWS: usize = 7;
pub const LOCATION_REGIONS: usize = LOCATION_COLUMNS * LOCATION_ROWS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Event,
    Direction,
    Finger,
    #[serde(rename = "loc_class")]
    LocationClass,
    #[serde(rename = "loc_reg")]
    LocationXy,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Event,
        Task::Direction,
        Task::Finger,
        Task::LocationClass,
        Task::LocationXy,
    ];

    /// Heads trained on tap samples only.
    pub const PROPERTIES: [Task; 4] = [
        Task::Direction,
        Task::Finger,
        Task::LocationClass,
        Task::LocationXy,
    ];

    pub fn output_width(self) -> usize {
        match self {
            Task::Event => 2,
            Task::Direction => 6,
            Task::Finger => 2,
            Task::LocationClass => LOCATION_REGIONS,
            Task::LocationXy => 2,
        }
    }

    pub fn is_classification(self) -> bool {
        self != Task::LocationXy
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Event => "event",
            Task::Direction => "direction",
            Task::Finger => "finger",
            Task::LocationClass => "loc_class",
            Task::LocationXy => "loc_reg",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown task `{name}`")))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the 300-element feature vector is presented to the trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLayout {
    /// `[300, 1]`: one filter bank slides over all six segments.
    OneChannel,
    /// `[50, 6]` with `x[t, c] = f[c * 50 + t]`.
    SixChannel,
    /// `[50, 1]`: the z-derivative segment alone.
    ZOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceInjection {
    /// Concatenated to the flattened trunk output.
    AfterFlatten,
    /// Appended to the one-channel input sequence.
    Input,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

const fn conv(filters: usize, kernel: usize, stride: usize) -> ConvSpec {
    ConvSpec {
        filters,
        kernel,
        stride,
    }
}

/// Coarse family of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Mimo,
    Siso(Task),
    SixChannel,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapNetConfig {
    pub layout: InputLayout,
    /// Each conv is followed by ReLU and batch normalization; valid padding.
    pub trunk: Vec<ConvSpec>,
    pub dense_hidden: usize,
    pub heads: Vec<Task>,
    #[serde(default = "default_injection")]
    pub device_injection: DeviceInjection,
    #[serde(default = "default_device_width")]
    pub device_vector_width: usize,
}

fn default_injection() -> DeviceInjection {
    DeviceInjection::AfterFlatten
}

fn default_device_width() -> usize {
    DEVICE_VECTOR_LEN
}

impl TapNetConfig {
    pub fn one_channel(capacity: Capacity) -> Self {
        let (trunk, dense_hidden) = match capacity {
            Capacity::Large => (
                vec![
                    conv(8, 7, 2),
                    conv(12, 7, 2),
                    conv(16, 7, 1),
                    conv(16, 7, 1),
                ],
                32,
            ),
            Capacity::Small => (
                vec![conv(4, 7, 2), conv(6, 7, 2), conv(8, 7, 2), conv(8, 7, 2)],
                16,
            ),
        };
        Self {
            layout: InputLayout::OneChannel,
            trunk,
            dense_hidden,
            heads: Task::ALL.to_vec(),
            device_injection: DeviceInjection::AfterFlatten,
            device_vector_width: DEVICE_VECTOR_LEN,
        }
    }

    pub fn six_channel(capacity: Capacity) -> Self {
        let (trunk, dense_hidden) = match capacity {
            Capacity::Large => (
                vec![
                    conv(16, 7, 1),
                    conv(24, 7, 1),
                    conv(32, 7, 1),
                    conv(32, 7, 1),
                ],
                32,
            ),
            Capacity::Small => (
                vec![conv(4, 5, 1), conv(6, 5, 2), conv(6, 5, 1), conv(6, 3, 1)],
                16,
            ),
        };
        Self {
            layout: InputLayout::SixChannel,
            trunk,
            dense_hidden,
            ..Self::one_channel(capacity)
        }
    }

    pub fn mimo(capacity: Capacity) -> Self {
        Self::one_channel(capacity)
    }

    /// The MIMO trunk with a single branch.
    pub fn siso(task: Task, capacity: Capacity) -> Self {
        Self {
            heads: vec![task],
            ..Self::one_channel(capacity)
        }
    }

    /// Two-layer convolution over the z-derivative segment only.
    pub fn tiny_cnn() -> Self {
        Self {
            layout: InputLayout::ZOnly,
            trunk: vec![conv(8, 5, 2), conv(8, 5, 2)],
            dense_hidden: 16,
            heads: Task::ALL.to_vec(),
            device_injection: DeviceInjection::AfterFlatten,
            device_vector_width: DEVICE_VECTOR_LEN,
        }
    }

    pub fn variant(&self) -> Variant {
        match (self.layout, self.heads.as_slice()) {
            (InputLayout::ZOnly, _) => Variant::Baseline,
            (InputLayout::SixChannel, _) => Variant::SixChannel,
            (InputLayout::OneChannel, [task]) => Variant::Siso(*task),
            _ => Variant::Mimo,
        }
    }

    pub fn has_head(&self, task: Task) -> bool {
        self.heads.contains(&task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout != InputLayout::ZOnly && self.trunk.len() != 4 {
            return Err(Error::Config(format!(
                "the trunk needs exactly 4 conv layers, got {}",
                self.trunk.len()
            )));
        }
        if self.trunk.is_empty() {
            return Err(Error::Config(
                "the trunk needs at least one conv layer".into(),
            ));
        }
        if self
            .trunk
            .iter()
            .any(|c| c.filters == 0 || c.kernel == 0 || c.stride == 0)
            || self.dense_hidden == 0
        {
            return Err(Error::Config(
                "layer hyperparameters must be positive".into(),
            ));
        }
        if self.heads.is_empty() {
            return Err(Error::Config("at least one head is required".into()));
        }
        let mut sorted = self.heads.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.heads.len() {
            return Err(Error::Config("duplicate head".into()));
        }
        if self.device_vector_width != DEVICE_VECTOR_LEN {
            return Err(Error::Config(format!(
                "device vector width must be {DEVICE_VECTOR_LEN}, got {}",
                self.device_vector_width
            )));
        }
        if self.device_injection == DeviceInjection::Input && self.layout != InputLayout::OneChannel
        {
            return Err(Error::Config(
                "input-level device injection needs the one-channel layout".into(),
            ));
        }
        Ok(())
    }

    fn input_shape(&self) -> (usize, usize) {
        match (self.layout, self.device_injection) {
            (InputLayout::OneChannel, DeviceInjection::Input) => {
                (FEATURE_LEN + self.device_vector_width, 1)
            }
            (InputLayout::OneChannel, _) => (FEATURE_LEN, 1),
            (InputLayout::SixChannel, _) => (SEGMENT_LEN, CHANNELS),
            (InputLayout::ZOnly, _) => (SEGMENT_LEN, 1),
        }
    }

    fn concat_width(&self) -> usize {
        match self.device_injection {
            DeviceInjection::AfterFlatten => self.device_vector_width,
            DeviceInjection::Input => 0,
        }
    }
}

/// A prepared batch: trunk input plus the normalized device vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub x: Tensor,
    pub device: Tensor,
}

impl ModelInput {
    pub fn batch(&self) -> usize {
        self.x.batch()
    }
}

/// Supervision for one head over a batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Classes(Vec<usize>),
    /// `[batch, 2]` location ratios.
    Values(Tensor),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadTarget {
    pub task: Task,
    pub target: Target,
    pub weight: f64,
}

/// Everything a training step needs from one forward/backward pass.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub loss: f64,
    pub task_losses: Vec<(Task, f64)>,
    pub gradients: Gradients,
    pub batchnorm: Vec<BatchNormStats>,
}

/// Head outputs for one sample; absent heads are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TapNetOutput {
    pub event_logits: Option<Vec<f64>>,
    pub direction_logits: Option<Vec<f64>>,
    pub finger_logits: Option<Vec<f64>>,
    pub location_logits: Option<Vec<f64>>,
    /// Ratios of screen width and height, clamped to `[0, 1]`.
    pub location_xy: Option<[f64; 2]>,
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

impl TapNetOutput {
    pub fn logits(&self, task: Task) -> Option<&[f64]> {
        match task {
            Task::Event => self.event_logits.as_deref(),
            Task::Direction => self.direction_logits.as_deref(),
            Task::Finger => self.finger_logits.as_deref(),
            Task::LocationClass => self.location_logits.as_deref(),
            Task::LocationXy => None,
        }
    }

    pub fn class(&self, task: Task) -> Option<usize> {
        self.logits(task).map(argmax)
    }

    pub fn probabilities(&self, task: Task) -> Option<Vec<f64>> {
        self.logits(task).map(|l| {
            softmax(&Tensor::new(vec![1, l.len()], l.to_vec()).expect("row shape")).into_data()
        })
    }
}

/// Forward-pass record needed by [`ModelGraph::backward`].
#[derive(Debug)]
pub struct ForwardCache {
    trunk: Vec<Cache>,
    heads: Vec<(usize, Vec<Cache>)>,
    flat: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    config: TapNetConfig,
    store: ParamStore,
    trunk: Sequential,
    heads: Vec<(Task, Sequential)>,
    flat: usize,
}

impl ModelGraph {
    /// Builds the graph with Glorot-uniform weights drawn from `seed`.
    pub fn build(config: TapNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut trunk = Sequential::new();
        let (mut len, mut ch) = config.input_shape();
        for (i, c) in config.trunk.iter().enumerate() {
            len = crate::nn::layers::conv_output_len(len, c.kernel, c.stride, 0)
                .map_err(|e| Error::Config(format!("trunk conv {i}: {e}")))?;
            let prefix = format!("trunk.conv{i}");
            trunk.push(Layer::Conv1d(Conv1d::new(
                &mut store, &prefix, ch, c.filters, c.kernel, c.stride, 0, &mut rng,
            )));
            trunk.push(Layer::Relu);
            trunk.push(Layer::BatchNorm(BatchNorm::new(
                &mut store,
                &format!("trunk.bn{i}"),
                c.filters,
            )));
            ch = c.filters;
        }
        trunk.push(Layer::Flatten);
        let flat = len * ch;
        let joined = flat + config.concat_width();
        let mut heads = Vec::new();
        for &task in &config.heads {
            let mut head = Sequential::new();
            let name = task.name();
            head.push(Layer::Dense(Dense::new(
                &mut store,
                &format!("{name}.hidden"),
                joined,
                config.dense_hidden,
                &mut rng,
            )));
            head.push(Layer::Relu);
            head.push(Layer::Dense(Dense::new(
                &mut store,
                &format!("{name}.out"),
                config.dense_hidden,
                task.output_width(),
                &mut rng,
            )));
            if task == Task::LocationXy {
                head.push(Layer::Sigmoid);
            }
            heads.push((task, head));
        }
        Ok(Self {
            config,
            store,
            trunk,
            heads,
            flat,
        })
    }

    pub fn config(&self) -> &TapNetConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Trainable scalars; running batch-norm statistics are excluded.
    pub fn count_params(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.heads.iter().map(|(t, _)| *t).collect()
    }

    pub fn has_head(&self, task: Task) -> bool {
        self.heads.iter().any(|(t, _)| *t == task)
    }

    pub fn trunk_param_ids(&self) -> Vec<ParamId> {
        self.trunk.param_ids()
    }

    pub fn head_param_ids(&self, task: Task) -> Vec<ParamId> {
        self.heads
            .iter()
            .filter(|(t, _)| *t == task)
            .flat_map(|(_, h)| h.param_ids())
            .collect()
    }

    /// Layer specs per branch, with the device concatenation made explicit.
    pub fn describe(&self) -> Vec<(String, Vec<LayerSpec>)> {
        let mut trunk = self.trunk.specs();
        if self.config.concat_width() > 0 {
            trunk.push(LayerSpec::Concat {
                width: self.config.concat_width(),
            });
        }
        let mut out = vec![("trunk".to_string(), trunk)];
        for (task, head) in &self.heads {
            let mut specs = head.specs();
            if task.is_classification() {
                specs.push(LayerSpec::Softmax);
            }
            out.push((task.name().to_string(), specs));
        }
        out
    }

    /// Arranges feature vectors and normalized device vectors for the trunk.
    pub fn prepare(
        &self,
        features: &[&[f64]],
        devices: &[[f64; DEVICE_VECTOR_LEN]],
    ) -> Result<ModelInput> {
        if features.len() != devices.len() {
            return Err(Error::Shape(format!(
                "{} features but {} device vectors",
                features.len(),
                devices.len()
            )));
        }
        let (len, ch) = self.config.input_shape();
        let mut x = Vec::with_capacity(features.len() * len * ch);
        for (f, d) in features.iter().zip(devices) {
            if f.len() != FEATURE_LEN {
                return Err(Error::Shape(format!(
                    "feature length {} != {FEATURE_LEN}",
                    f.len()
                )));
            }
            match self.config.layout {
                InputLayout::OneChannel => {
                    x.extend_from_slice(f);
                    if self.config.device_injection == DeviceInjection::Input {
                        x.extend_from_slice(d);
                    }
                }
                InputLayout::SixChannel => {
                    for t in 0..SEGMENT_LEN {
                        x.extend((0..CHANNELS).map(|c| f[c * SEGMENT_LEN + t]));
                    }
                }
                InputLayout::ZOnly => {
                    x.extend_from_slice(
                        &f[ANCHOR_CHANNEL * SEGMENT_LEN..(ANCHOR_CHANNEL + 1) * SEGMENT_LEN],
                    );
                }
            }
        }
        let b = features.len();
        Ok(ModelInput {
            x: Tensor::new(vec![b, len, ch], x)?,
            device: Tensor::new(
                vec![b, DEVICE_VECTOR_LEN],
                devices.iter().flatten().copied().collect(),
            )?,
        })
    }

    fn join(&self, flat: Tensor, device: &Tensor) -> Result<Tensor> {
        if self.config.concat_width() == 0 {
            return Ok(flat);
        }
        let b = flat.batch();
        if device.shape() != [b, DEVICE_VECTOR_LEN] {
            return Err(Error::Shape(format!(
                "device batch {:?} for {b} samples",
                device.shape()
            )));
        }
        let width = self.flat + DEVICE_VECTOR_LEN;
        let mut out = Vec::with_capacity(b * width);
        for (row, d) in flat
            .data()
            .chunks_exact(self.flat)
            .zip(device.data().chunks_exact(DEVICE_VECTOR_LEN))
        {
            out.extend_from_slice(row);
            out.extend_from_slice(d);
        }
        Tensor::new(vec![b, width], out)
    }

    /// Runs the trunk and the heads listed in `tasks`.
    pub fn forward(
        &self,
        input: &ModelInput,
        tasks: &[Task],
        mode: Mode,
    ) -> Result<(Vec<(Task, Tensor)>, ForwardCache)> {
        let (flat, trunk_cache) = self.trunk.forward(&self.store, input.x.clone(), mode)?;
        let joined = self.join(flat, &input.device)?;
        let mut outputs = Vec::with_capacity(tasks.len());
        let mut caches = Vec::with_capacity(tasks.len());
        for &task in tasks {
            let idx = self
                .heads
                .iter()
                .position(|(t, _)| *t == task)
                .ok_or_else(|| Error::Config(format!("graph has no {task} head")))?;
            let (y, cache) = self.heads[idx]
                .1
                .forward(&self.store, joined.clone(), mode)?;
            outputs.push((task, y));
            caches.push((idx, cache));
        }
        Ok((
            outputs,
            ForwardCache {
                trunk: trunk_cache,
                heads: caches,
                flat: self.flat,
            },
        ))
    }

    /// Backpropagates per-head output gradients (in the order of the
    /// forward `tasks`). Only parameters on a path from those heads receive
    /// a gradient.
    pub fn backward(&self, cache: ForwardCache, head_grads: Vec<Tensor>) -> Result<Gradients> {
        if head_grads.len() != cache.heads.len() {
            return Err(Error::Shape(
                "one output gradient per evaluated head is required".into(),
            ));
        }
        let mut grads = Gradients::for_store(&self.store);
        let mut joined: Option<Tensor> = None;
        for ((idx, head_cache), g) in cache.heads.into_iter().zip(head_grads) {
            let dj = self.heads[idx]
                .1
                .backward(&self.store, head_cache, g, &mut grads)?;
            match &mut joined {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(dj.data())
                    .for_each(|(a, b)| *a += b),
                None => joined = Some(dj),
            }
        }
        let Some(dj) = joined else {
            return Ok(grads);
        };
        let b = dj.batch();
        let width = dj.len() / b.max(1);
        let dflat: Vec<f64> = dj
            .data()
            .chunks_exact(width)
            .flat_map(|row| row[..cache.flat].iter().copied())
            .collect();
        self.trunk.backward(
            &self.store,
            cache.trunk,
            Tensor::new(vec![b, cache.flat], dflat)?,
            &mut grads,
        )?;
        Ok(grads)
    }

    /// Weighted sum of head losses and its gradients.
    pub fn loss_and_gradients(
        &self,
        input: &ModelInput,
        targets: &[HeadTarget],
        mode: Mode,
    ) -> Result<StepResult> {
        let tasks: Vec<Task> = targets.iter().map(|t| t.task).collect();
        let (outputs, cache) = self.forward(input, &tasks, mode)?;
        let mut total = 0.0;
        let mut task_losses = Vec::with_capacity(targets.len());
        let mut head_grads = Vec::with_capacity(targets.len());
        for ((_, y), t) in outputs.iter().zip(targets) {
            let (loss, mut g) = head_loss(t.task, y, &t.target)?;
            if !loss.is_finite() {
                return Err(Error::TrainingFault(format!("non-finite {} loss", t.task)));
            }
            g.data_mut().iter_mut().for_each(|v| *v *= t.weight);
            total += t.weight * loss;
            task_losses.push((t.task, loss));
            head_grads.push(g);
        }
        let batchnorm = Sequential::batchnorm_stats(&cache.trunk);
        let gradients = self.backward(cache, head_grads)?;
        Ok(StepResult {
            loss: total,
            task_losses,
            gradients,
            batchnorm,
        })
    }

    /// Weighted loss only, without gradients or statistic updates.
    pub fn loss(&self, input: &ModelInput, targets: &[HeadTarget], mode: Mode) -> Result<f64> {
        let tasks: Vec<Task> = targets.iter().map(|t| t.task).collect();
        let (outputs, _) = self.forward(input, &tasks, mode)?;
        let mut total = 0.0;
        for ((_, y), t) in outputs.iter().zip(targets) {
            total += t.weight * head_loss(t.task, y, &t.target)?.0;
        }
        Ok(total)
    }

    pub fn apply_batchnorm(&mut self, stats: &[BatchNormStats]) {
        for s in stats {
            s.apply(&mut self.store);
        }
    }

    /// Inference-mode forward for every head of the graph.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<TapNetOutput>> {
        let tasks = self.tasks();
        let (outputs, _) = self.forward(input, &tasks, Mode::Infer)?;
        let mut result = vec![TapNetOutput::default(); input.batch()];
        for (task, y) in outputs {
            let w = task.output_width();
            for (out, row) in result.iter_mut().zip(y.data().chunks_exact(w)) {
                let row = row.to_vec();
                match task {
                    Task::Event => out.event_logits = Some(row),
                    Task::Direction => out.direction_logits = Some(row),
                    Task::Finger => out.finger_logits = Some(row),
                    Task::LocationClass => out.location_logits = Some(row),
                    Task::LocationXy => {
                        out.location_xy = Some([row[0].clamp(0.0, 1.0), row[1].clamp(0.0, 1.0)])
                    }
                }
            }
        }
        Ok(result)
    }

    pub fn predict_one(
        &self,
        feature: &[f64],
        device: &[f64; DEVICE_VECTOR_LEN],
    ) -> Result<TapNetOutput> {
        let input = self.prepare(&[feature], std::slice::from_ref(device))?;
        Ok(self.predict(&input)?.remove(0))
    }

    pub fn to_checkpoint(
        &self,
        optimizer: Option<&OptimizerState>,
        seed: u64,
    ) -> Result<Checkpoint> {
        Ok(Checkpoint::new(
            serde_json::to_value(&self.config)?,
            self.describe(),
            self.store.clone(),
            optimizer.cloned(),
            seed,
        ))
    }

    /// Rebuilds the graph described by a checkpoint and restores its values.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let config: TapNetConfig = serde_json::from_value(checkpoint.config.clone())?;
        let mut graph = Self::build(config, checkpoint.seed)?;
        if graph.store.len() != checkpoint.params.len() {
            return Err(Error::Schema {
                expected: format!("{} parameter arrays", graph.store.len()),
                found: format!("{}", checkpoint.params.len()),
            });
        }
        for ((_, mine), (_, theirs)) in graph.store.iter().zip(checkpoint.params.iter()) {
            if mine.name != theirs.name
                || mine.role != theirs.role
                || mine.value.shape() != theirs.value.shape()
            {
                return Err(Error::Schema {
                    expected: format!("{} {:?}", mine.name, mine.value.shape()),
                    found: format!("{} {:?}", theirs.name, theirs.value.shape()),
                });
            }
        }
        graph.store = checkpoint.params.clone();
        Ok(graph)
    }
}

fn head_loss(task: Task, y: &Tensor, target: &Target) -> Result<(f64, Tensor)> {
    match (task.is_classification(), target) {
        (true, Target::Classes(c)) => softmax_cross_entropy(y, c),
        (false, Target::Values(t)) => mse(y, t),
        _ => Err(Error::Config(format!(
            "target kind does not match the {task} head"
        ))),
    }
}

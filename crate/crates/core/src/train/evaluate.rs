use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{
    location_mae, r2, ClassMetrics, ConfusionMatrix, LocationMetrics, MetricsReport,
};
use super::{fine_tune, prepare, split_taps, TrainPlan};
use crate::data::Sample;
use crate::model::{ModelGraph, Task};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// The frozen graph on every participant.
    OneToN,
    /// Hold out each participant in turn after fine-tuning on the others.
    LeaveOneOut,
}

/// Pooled predictions; merging folds pools counts, which weights each fold
/// by its support.
#[derive(Default)]
struct Accumulator {
    samples: usize,
    taps: usize,
    confusion: Vec<(Task, ConfusionMatrix)>,
    truth: Vec<[f64; 2]>,
    pred: Vec<[f64; 2]>,
}

impl Accumulator {
    fn matrix(&mut self, task: Task) -> &mut ConfusionMatrix {
        if let Some(i) = self.confusion.iter().position(|(t, _)| *t == task) {
            return &mut self.confusion[i].1;
        }
        self.confusion
            .push((task, ConfusionMatrix::new(task.output_width())));
        &mut self.confusion.last_mut().expect("just pushed").1
    }

    fn add(&mut self, graph: &ModelGraph, samples: &[Sample]) -> Result<()> {
        for chunk in samples.chunks(256) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let outputs = graph.predict(&prepare(graph, &refs)?)?;
            for (s, out) in chunk.iter().zip(&outputs) {
                self.samples += 1;
                if let Some(p) = out.class(Task::Event) {
                    self.matrix(Task::Event).add(s.is_tap() as usize, p);
                }
                // Property heads are scored on every tap, whatever the event head says.
                let Some(tap) = s.tap() else { continue };
                self.taps += 1;
                for (task, truth) in [
                    (Task::Direction, tap.direction.index()),
                    (Task::Finger, tap.finger_part.index()),
                    (Task::LocationClass, tap.loc_region),
                ] {
                    if let Some(p) = out.class(task) {
                        self.matrix(task).add(truth, p);
                    }
                }
                if let Some(xy) = out.location_xy {
                    self.truth.push(tap.loc_xy);
                    self.pred.push(xy);
                }
            }
        }
        Ok(())
    }

    fn report(self) -> Result<MetricsReport> {
        let mut report = MetricsReport {
            samples: self.samples,
            taps: self.taps,
            ..Default::default()
        };
        for (task, m) in self.confusion {
            if m.total() == 0 {
                continue;
            }
            report.classification.insert(
                task.name().to_string(),
                ClassMetrics {
                    weighted_f1: m.weighted_f1()?,
                    support: m.total(),
                    confusion: m.rows(),
                },
            );
        }
        if !self.truth.is_empty() {
            report.location = Some(LocationMetrics {
                // Ratios already divide out the screen size.
                mae: location_mae(&self.truth, &self.pred, 1.0, 1.0)?,
                r2: r2(&self.pred, &self.truth)?,
                support: self.truth.len(),
            });
        }
        Ok(report)
    }
}

/// Scores the frozen graph on `samples`.
pub fn evaluate(graph: &ModelGraph, samples: &[Sample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Empty("nothing to evaluate".into()));
    }
    let mut acc = Accumulator::default();
    acc.add(graph, samples)?;
    acc.report()
}

pub fn one_to_n(graph: &ModelGraph, samples: &[Sample]) -> Result<MetricsReport> {
    evaluate(graph, samples)
}

/// For each participant: fine-tune a copy of `graph` on everyone else and
/// score it on that participant. Metrics pool all held-out folds.
pub fn leave_one_out(
    graph: &ModelGraph,
    samples: &[Sample],
    plan: &TrainPlan,
) -> Result<MetricsReport> {
    let participants: BTreeSet<u32> = samples.iter().map(|s| s.label.participant_id).collect();
    if participants.len() < 2 {
        return Err(Error::Config(format!(
            "leave-one-out needs at least 2 participants, found {}",
            participants.len()
        )));
    }
    let mut acc = Accumulator::default();
    for &held_out in &participants {
        let (test, rest): (Vec<Sample>, Vec<Sample>) = samples
            .iter()
            .cloned()
            .partition(|s| s.label.participant_id == held_out);
        let (taps, nontaps) = split_taps(&rest);
        let mut fold = graph.clone();
        fine_tune(&mut fold, &taps, &nontaps, plan)?;
        log::info!("leave-one-out fold: participant {held_out} held out");
        acc.add(&fold, &test)?;
    }
    acc.report()
}

pub fn evaluate_paradigm(
    graph: &ModelGraph,
    samples: &[Sample],
    paradigm: Paradigm,
    plan: &TrainPlan,
) -> Result<MetricsReport> {
    match paradigm {
        Paradigm::OneToN => one_to_n(graph, samples),
        Paradigm::LeaveOneOut => leave_one_out(graph, samples, plan),
    }
}

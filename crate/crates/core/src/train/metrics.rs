use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Square count matrix, rows are true classes and columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes: k,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape(
                "cannot merge confusion matrices of different size".into(),
            ));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `2PR / (P + R)` per class; 0 where precision or recall is undefined.
    pub fn class_f1(&self, class: usize) -> f64 {
        let tp = self.get(class, class) as f64;
        let predicted: u64 = (0..self.classes).map(|t| self.get(t, class)).sum();
        let actual = self.support(class);
        if predicted == 0 || actual == 0 {
            return 0.0;
        }
        let p = tp / predicted as f64;
        let r = tp / actual as f64;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Per-class F1 averaged with true-class support as weights.
    pub fn weighted_f1(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Empty("confusion matrix has no counts".into()));
        }
        Ok((0..self.classes)
            .map(|c| self.class_f1(c) * self.support(c) as f64)
            .sum::<f64>()
            / total as f64)
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.classes.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn weighted_f1(confusion: &ConfusionMatrix) -> Result<f64> {
    confusion.weighted_f1()
}

/// Euclidean error after dividing by screen width and height; in `[0, √2]`
/// for points on the screen.
pub fn location_error(truth: [f64; 2], pred: [f64; 2], w: f64, h: f64) -> f64 {
    ((truth[0] - pred[0]) / w).hypot((truth[1] - pred[1]) / h)
}

/// Mean [`location_error`] over paired samples.
pub fn location_mae(truth: &[[f64; 2]], pred: &[[f64; 2]], w: f64, h: f64) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Shape("truth and prediction counts differ".into()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no locations".into()));
    }
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Config("screen dimensions must be positive".into()));
    }
    Ok(truth
        .iter()
        .zip(pred)
        .map(|(t, p)| location_error(*t, *p, w, h))
        .sum::<f64>()
        / truth.len() as f64)
}

/// Coefficient of determination per coordinate, averaged. A coordinate whose
/// truth is constant scores 1 when predicted exactly and 0 otherwise.
pub fn r2(pred: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Shape("truth and prediction counts differ".into()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no locations".into()));
    }
    let n = truth.len() as f64;
    let mut sum = 0.0;
    for axis in 0..2 {
        let mean = truth.iter().map(|t| t[axis]).sum::<f64>() / n;
        let ss_tot: f64 = truth.iter().map(|t| (t[axis] - mean).powi(2)).sum();
        let ss_res: f64 = truth
            .iter()
            .zip(pred)
            .map(|(t, p)| (t[axis] - p[axis]).powi(2))
            .sum();
        sum += if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(sum / 2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub weighted_f1: f64,
    pub support: u64,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationMetrics {
    pub mae: f64,
    pub r2: f64,
    pub support: usize,
}

/// Evaluation summary. Classification tasks are keyed by task name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub taps: usize,
    pub classification: BTreeMap<String, ClassMetrics>,
    pub location: Option<LocationMetrics>,
}

impl MetricsReport {
    pub fn f1(&self, task: &str) -> Option<f64> {
        self.classification.get(task).map(|c| c.weighted_f1)
    }

    pub fn location_mae(&self) -> Option<f64> {
        self.location.as_ref().map(|l| l.mae)
    }
}

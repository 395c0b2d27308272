//! Streaming front end: raw frames in, aligned tap candidates out.

use std::collections::VecDeque;

use crate::features::{build_feature, FeatureVector, Padding, POST_ANCHOR};
use crate::gating::{
    detect_extrema, gate_extrema, Extremum, GateConfig, GateDecision, GatingSignal,
};
use crate::signal::{Differentiator, ImuFrame, SignalWindow, DEFAULT_SAMPLE_RATE_HZ};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub gate: GateConfig,
    pub sample_rate_hz: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

/// A gated tap candidate with its aligned feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectedEvent {
    pub anchor_timestamp_us: i64,
    /// Position of the anchor frame in the whole stream.
    pub anchor_stream_index: usize,
    pub feature: FeatureVector,
    pub padding: Padding,
    pub peak_threshold: f64,
    /// Timestamp of the frame that completed the feature window.
    pub ready_timestamp_us: i64,
}

impl DetectedEvent {
    /// Time spent waiting for the post-anchor part of the feature window.
    pub fn window_wait_us(&self) -> i64 {
        self.ready_timestamp_us - self.anchor_timestamp_us
    }
}

/// Result of pushing one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorStep {
    pub timestamp_us: i64,
    /// Plain gate verdict on the current window.
    pub decision: GateDecision,
    /// Stream index of the decision's anchor, if it passed.
    pub anchor_stream_index: Option<usize>,
    pub event: Option<DetectedEvent>,
}

/// Single-writer streaming detector.
///
/// Each pushed frame is differentiated, appended to the window and gated.
/// Once the anchor of a passing impulse has [`POST_ANCHOR`] frames after it,
/// a [`DetectedEvent`] is emitted and the rest of that impulse is consumed so
/// the same tap is not reported twice.
#[derive(Clone, Debug)]
pub struct TapDetector {
    config: DetectorConfig,
    diff: Differentiator,
    window: SignalWindow,
    raw_z: VecDeque<f64>,
    history: VecDeque<f64>,
    history_cap: usize,
    pushed: usize,
    consumed_until_us: Option<i64>,
}

impl TapDetector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.gate.validate()?;
        let history_s = config.gate.adaptive.map_or(1.0, |a| a.history_s);
        let history_cap = ((history_s * config.sample_rate_hz).round() as usize).max(2);
        Ok(Self {
            diff: Differentiator::new(config.sample_rate_hz),
            window: SignalWindow::new(config.sample_rate_hz),
            raw_z: VecDeque::new(),
            history: VecDeque::with_capacity(history_cap + 1),
            history_cap,
            pushed: 0,
            consumed_until_us: None,
            config,
        })
    }

    pub fn window(&self) -> &SignalWindow {
        &self.window
    }

    /// Gate config with thresholds resolved for the current history.
    pub fn effective_gate(&self) -> GateConfig {
        let mut gate = self.config.gate.clone();
        if let Some(adaptive) = &gate.adaptive {
            let t = adaptive.threshold(self.history.iter().copied());
            gate.peak_threshold = t;
            gate.valley_threshold = t;
        }
        gate
    }

    fn window_start_index(&self) -> usize {
        self.pushed - self.window.len()
    }

    fn gating_signal(&self) -> Vec<(i64, f64)> {
        match self.config.gate.signal {
            GatingSignal::Derivative => self.window.z_signal(),
            GatingSignal::Raw => {
                let mean = self.raw_z.iter().sum::<f64>() / self.raw_z.len().max(1) as f64;
                self.window
                    .frames()
                    .zip(&self.raw_z)
                    .map(|(f, z)| (f.timestamp_us, z - mean))
                    .collect()
            }
        }
    }

    /// Drops extrema that belong to an impulse already reported, extending
    /// the consumed span while extrema keep chaining within `t_v`.
    fn unconsumed(&mut self, extrema: Vec<Extremum>) -> Vec<Extremum> {
        let Some(mut until) = self.consumed_until_us else {
            return extrema;
        };
        let t_v = self.config.gate.t_v_us;
        let mut out = Vec::with_capacity(extrema.len());
        for e in extrema {
            if e.timestamp_us <= until {
                continue;
            }
            if out.is_empty() && e.timestamp_us - until < t_v {
                until = e.timestamp_us;
                continue;
            }
            out.push(e);
        }
        self.consumed_until_us = Some(until);
        out
    }

    pub fn push(&mut self, frame: ImuFrame) -> Result<DetectorStep> {
        let d = self.diff.push(frame)?;
        self.window.push(d)?;
        self.raw_z.push_back(frame.accel[2]);
        if self.raw_z.len() > self.window.len() {
            self.raw_z.pop_front();
        }
        self.history.push_back(d.d_az());
        if self.history.len() > self.history_cap {
            self.history.pop_front();
        }
        self.pushed += 1;

        let gate = self.effective_gate();
        let signal = self.gating_signal();
        let extrema = detect_extrema(&signal, gate.peak_threshold, gate.valley_threshold);
        let decision = gate_extrema(&extrema, &gate);
        let start = self.window_start_index();
        let anchor_stream_index = decision.anchor().map(|a| start + a.index);

        let candidates = self.unconsumed(extrema);
        let mut event = None;
        if let GateDecision::Pass { anchor, impulse } = gate_extrema(&candidates, &gate) {
            let after = self.window.len() - 1 - anchor.index;
            if after >= POST_ANCHOR {
                event = Some(self.emit(&anchor, gate.peak_threshold)?);
                self.consumed_until_us = Some(impulse.end_us());
            }
        }
        Ok(DetectorStep {
            timestamp_us: d.timestamp_us,
            decision,
            anchor_stream_index,
            event,
        })
    }

    fn emit(&self, anchor: &Extremum, threshold: f64) -> Result<DetectedEvent> {
        let frames = self.window.snapshot();
        let (feature, padding) = build_feature(&frames, anchor.index)?;
        Ok(DetectedEvent {
            anchor_timestamp_us: anchor.timestamp_us,
            anchor_stream_index: self.window_start_index() + anchor.index,
            feature,
            padding,
            peak_threshold: threshold,
            ready_timestamp_us: frames
                .last()
                .map_or(anchor.timestamp_us, |f| f.timestamp_us),
        })
    }

    /// Flushes a candidate whose feature window was cut short by the end of
    /// the stream; the missing samples are zero-padded.
    pub fn finish(&mut self) -> Result<Option<DetectedEvent>> {
        if self.window.len() < 3 {
            return Ok(None);
        }
        let gate = self.effective_gate();
        let extrema = detect_extrema(
            &self.gating_signal(),
            gate.peak_threshold,
            gate.valley_threshold,
        );
        let candidates = self.unconsumed(extrema);
        match gate_extrema(&candidates, &gate) {
            GateDecision::Pass { anchor, impulse } => {
                let event = self.emit(&anchor, gate.peak_threshold)?;
                self.consumed_until_us = Some(impulse.end_us());
                Ok(Some(event))
            }
            GateDecision::Reject => Ok(None),
        }
    }
}

/// Runs a whole stream through a fresh detector.
pub fn detect_events(frames: &[ImuFrame], config: &DetectorConfig) -> Result<Vec<DetectedEvent>> {
    let mut detector = TapDetector::new(config.clone())?;
    let mut events = Vec::new();
    for f in frames {
        if let Some(e) = detector.push(*f)?.event {
            events.push(e);
        }
    }
    events.extend(detector.finish()?);
    Ok(events)
}

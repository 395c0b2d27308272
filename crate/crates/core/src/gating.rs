//! Heuristic gating on the accelerometer z-axis derivative.
//!
//! A window passes when it contains an impulse (a run of extrema whose
//! adjacent gaps are below `t_v`) with at least one supra-threshold peak.
//! Everything here is a pure function over a snapshot of the signal.

use serde::{Deserialize, Serialize};

use crate::signal::SignalWindow;

/// Default maximum gap between extrema of one impulse: 80 ms.
pub const DEFAULT_T_V_US: i64 = 80_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Peak,
    Valley,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub timestamp_us: i64,
    pub value: f64,
    pub kind: ExtremumKind,
}

/// A maximal run of extrema separated by less than `t_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub extrema: Vec<Extremum>,
}

impl Impulse {
    pub fn start_us(&self) -> i64 {
        self.extrema[0].timestamp_us
    }

    pub fn end_us(&self) -> i64 {
        self.extrema[self.extrema.len() - 1].timestamp_us
    }

    pub fn peaks(&self) -> impl Iterator<Item = &Extremum> + '_ {
        self.extrema.iter().filter(|e| e.kind == ExtremumKind::Peak)
    }

    pub fn has_peak(&self) -> bool {
        self.peaks().next().is_some()
    }
}

/// Which signal the detector gates on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatingSignal {
    /// First-order difference of accelerometer z.
    #[default]
    Derivative,
    /// Raw accelerometer z with the window mean removed.
    Raw,
}

/// How the anchor peak is chosen inside the earliest qualifying impulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    #[default]
    FirstPeak,
    MaxPeak,
}

/// Threshold that follows the recent noise level: `multiplier` times the
/// standard deviation of the gating signal over `history_s`, never below
/// `floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveThreshold {
    pub multiplier: f64,
    pub floor: f64,
    pub history_s: f64,
}

impl Default for AdaptiveThreshold {
    fn default() -> Self {
        Self {
            multiplier: 3.0,
            floor: 1.0,
            history_s: 1.0,
        }
    }
}

impl AdaptiveThreshold {
    pub fn threshold(&self, history: impl ExactSizeIterator<Item = f64> + Clone) -> f64 {
        let n = history.len();
        if n < 2 {
            return self.floor;
        }
        let mean = history.clone().sum::<f64>() / n as f64;
        let var = history.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        (self.multiplier * var.sqrt()).max(self.floor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub t_v_us: i64,
    pub peak_threshold: f64,
    pub valley_threshold: f64,
    pub signal: GatingSignal,
    pub anchor: AnchorRule,
    /// When set, streaming consumers recompute both thresholds from it.
    pub adaptive: Option<AdaptiveThreshold>,
}

impl Default for GateConfig {
    fn default() -> Self {
        let adaptive = AdaptiveThreshold::default();
        Self {
            t_v_us: DEFAULT_T_V_US,
            peak_threshold: adaptive.floor,
            valley_threshold: adaptive.floor,
            signal: GatingSignal::Derivative,
            anchor: AnchorRule::FirstPeak,
            adaptive: Some(adaptive),
        }
    }
}

impl GateConfig {
    /// Fixed thresholds, no adaptation.
    pub fn fixed(peak_threshold: f64, valley_threshold: f64) -> Self {
        Self {
            peak_threshold,
            valley_threshold,
            adaptive: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.t_v_us <= 0 {
            return Err(crate::Error::Config("t_v must be positive".into()));
        }
        if !(self.peak_threshold >= 0.0 && self.valley_threshold >= 0.0) {
            return Err(crate::Error::Config(
                "thresholds must be non-negative".into(),
            ));
        }
        if let Some(a) = &self.adaptive {
            if !(a.multiplier >= 0.0 && a.floor >= 0.0 && a.history_s > 0.0) {
                return Err(crate::Error::Config("invalid adaptive threshold".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateDecision {
    Pass { anchor: Extremum, impulse: Impulse },
    Reject,
}

impl GateDecision {
    pub fn passed(&self) -> bool {
        matches!(self, GateDecision::Pass { .. })
    }

    pub fn anchor(&self) -> Option<&Extremum> {
        match self {
            GateDecision::Pass { anchor, .. } => Some(anchor),
            GateDecision::Reject => None,
        }
    }
}

/// Local maxima `>= peak_threshold` and local minima `<= -valley_threshold`,
/// in index order, found in one pass.
///
/// A plateau counts once, at its first sample, and only if the signal leaves
/// it in the opposite direction it entered. The end samples are never
/// extrema.
pub fn detect_extrema(
    signal: &[(i64, f64)],
    peak_threshold: f64,
    valley_threshold: f64,
) -> Vec<Extremum> {
    let n = signal.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        let (t, v) = signal[i];
        let prev = signal[i - 1].1;
        if v == prev {
            i += 1;
            continue;
        }
        let mut end = i;
        while end + 1 < n && signal[end + 1].1 == v {
            end += 1;
        }
        if end + 1 < n {
            let next = signal[end + 1].1;
            let kind = if v > prev && next < v && v >= peak_threshold {
                Some(ExtremumKind::Peak)
            } else if v < prev && next > v && v <= -valley_threshold {
                Some(ExtremumKind::Valley)
            } else {
                None
            };
            if let Some(kind) = kind {
                out.push(Extremum {
                    index: i,
                    timestamp_us: t,
                    value: v,
                    kind,
                });
            }
        }
        i = end + 1;
    }
    out
}

/// Splits time-ordered extrema into maximal runs with adjacent gaps `< t_v_us`.
pub fn group_impulses(extrema: &[Extremum], t_v_us: i64) -> Vec<Impulse> {
    let mut impulses: Vec<Impulse> = Vec::new();
    for e in extrema {
        match impulses.last_mut() {
            Some(last) if e.timestamp_us - last.end_us() < t_v_us => last.extrema.push(*e),
            _ => impulses.push(Impulse { extrema: vec![*e] }),
        }
    }
    impulses
}

/// Gates an arbitrary `(timestamp, value)` signal using the fixed thresholds
/// in `config`.
pub fn gate_signal(signal: &[(i64, f64)], config: &GateConfig) -> GateDecision {
    let extrema = detect_extrema(signal, config.peak_threshold, config.valley_threshold);
    gate_extrema(&extrema, config)
}

/// Picks the anchor from already detected extrema.
pub fn gate_extrema(extrema: &[Extremum], config: &GateConfig) -> GateDecision {
    for impulse in group_impulses(extrema, config.t_v_us) {
        let anchor = match config.anchor {
            AnchorRule::FirstPeak => impulse.peaks().next().copied(),
            AnchorRule::MaxPeak => impulse
                .peaks()
                .fold(None::<Extremum>, |best, e| match best {
                    Some(b) if b.value >= e.value => Some(b),
                    _ => Some(*e),
                }),
        };
        if let Some(anchor) = anchor {
            return GateDecision::Pass { anchor, impulse };
        }
    }
    GateDecision::Reject
}

/// Gates the derivative z-channel of a window.
pub fn gate(window: &SignalWindow, config: &GateConfig) -> GateDecision {
    gate_signal(&window.z_signal(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::DerivFrame;
    use proptest::prelude::*;

    fn sig(values: &[f64]) -> Vec<(i64, f64)> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as i64 * 1000, v))
            .collect()
    }

    fn ext(t_ms: i64) -> Extremum {
        Extremum {
            index: 0,
            timestamp_us: t_ms * 1000,
            value: 1.0,
            kind: ExtremumKind::Peak,
        }
    }

    /// Definition-level scan: every interior index compared with both
    /// neighbours. Valid for plateau-free signals.
    fn brute_extrema(v: &[f64], pt: f64, vt: f64) -> Vec<(usize, ExtremumKind)> {
        let mut out = Vec::new();
        for i in 1..v.len().saturating_sub(1) {
            if v[i] > v[i - 1] && v[i] > v[i + 1] && v[i] >= pt {
                out.push((i, ExtremumKind::Peak));
            }
            if v[i] < v[i - 1] && v[i] < v[i + 1] && v[i] <= -vt {
                out.push((i, ExtremumKind::Valley));
            }
        }
        out
    }

    #[test]
    fn flat_signal_has_no_extrema() {
        assert!(detect_extrema(&sig(&[0.0; 20]), 0.0, 0.0).is_empty());
    }

    #[test]
    fn short_signal_is_empty() {
        assert!(detect_extrema(&sig(&[0.0, 5.0]), 1.0, 1.0).is_empty());
    }

    #[test]
    fn single_peak() {
        let e = detect_extrema(&sig(&[0.0, 5.0, 0.0]), 1.0, 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(
            (e[0].index, e[0].value, e[0].kind),
            (1, 5.0, ExtremumKind::Peak)
        );
    }

    #[test]
    fn peak_and_valley_match_scan() {
        let v = [0.0, 5.0, 0.0, -4.0, 0.0];
        let got: Vec<_> = detect_extrema(&sig(&v), 1.0, 1.0)
            .iter()
            .map(|e| (e.index, e.kind))
            .collect();
        assert_eq!(got, brute_extrema(&v, 1.0, 1.0));
        assert_eq!(
            got,
            vec![(1, ExtremumKind::Peak), (3, ExtremumKind::Valley)]
        );
    }

    #[test]
    fn plateau_reports_first_sample() {
        let e = detect_extrema(&sig(&[0.0, 3.0, 3.0, 3.0, 1.0]), 1.0, 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].index, 1);
        // A shelf on the way up is not a peak.
        assert!(detect_extrema(&sig(&[0.0, 3.0, 3.0, 4.0, 4.0]), 1.0, 1.0).is_empty());
    }

    #[test]
    fn thresholds_filter_small_extrema() {
        let e = detect_extrema(&sig(&[0.0, 0.5, 0.0, -0.5, 0.0]), 1.0, 1.0);
        assert!(e.is_empty());
    }

    #[test]
    fn grouping_examples() {
        assert_eq!(
            group_impulses(&[ext(10), ext(60), ext(70)], DEFAULT_T_V_US).len(),
            1
        );
        assert_eq!(
            group_impulses(&[ext(10), ext(200)], DEFAULT_T_V_US).len(),
            2
        );
        // Exactly t_v apart starts a new impulse.
        assert_eq!(group_impulses(&[ext(10), ext(90)], DEFAULT_T_V_US).len(), 2);
        assert!(group_impulses(&[], DEFAULT_T_V_US).is_empty());
    }

    fn window_from(values: &[f64]) -> SignalWindow {
        let frames: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut f = DerivFrame::zero(i as i64 * 2404);
                f.d_accel[2] = v;
                f
            })
            .collect();
        SignalWindow::from_frames(&frames, 63, 416.0).unwrap()
    }

    #[test]
    fn damped_tap_passes() {
        let values: Vec<f64> = (0..63)
            .map(|i| {
                if i < 10 {
                    0.0
                } else {
                    let n = (i - 10) as f64;
                    3.0 * (-n / 5.0).exp() * (2.0 * std::f64::consts::PI * 50.0 * n / 416.0).cos()
                }
            })
            .collect();
        let d = gate(&window_from(&values), &GateConfig::fixed(1.0, 1.0));
        let anchor = d.anchor().expect("tap should pass");
        assert_eq!(anchor.index, 10);
        assert_eq!(anchor.value, 3.0);
    }

    #[test]
    fn slow_subthreshold_sinusoid_rejected() {
        let values: Vec<f64> = (0..63).map(|i| 0.5 * (i as f64 * 0.2).sin()).collect();
        assert_eq!(
            gate(&window_from(&values), &GateConfig::fixed(1.0, 1.0)),
            GateDecision::Reject
        );
    }

    #[test]
    fn valley_only_rejected() {
        let mut values = vec![0.0; 63];
        values[20] = -6.0;
        assert_eq!(
            gate(&window_from(&values), &GateConfig::fixed(1.0, 1.0)),
            GateDecision::Reject
        );
    }

    #[test]
    fn anchor_rules() {
        let mut values = vec![0.0; 40];
        values[5] = 2.0;
        values[8] = -3.0;
        values[11] = 4.0;
        let w = window_from(&values);
        let mut cfg = GateConfig::fixed(1.0, 1.0);
        assert_eq!(gate(&w, &cfg).anchor().unwrap().index, 5);
        cfg.anchor = AnchorRule::MaxPeak;
        assert_eq!(gate(&w, &cfg).anchor().unwrap().index, 11);
    }

    #[test]
    fn adaptive_threshold_floor_and_scale() {
        let a = AdaptiveThreshold::default();
        assert_eq!(a.threshold([0.0; 100].into_iter()), 1.0);
        let noisy: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 2.0 } else { -2.0 })
            .collect();
        assert!((a.threshold(noisy.into_iter()) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(GateConfig::default().validate().is_ok());
        let mut c = GateConfig::fixed(1.0, 1.0);
        c.t_v_us = 0;
        assert!(c.validate().is_err());
        assert!(GateConfig::fixed(-1.0, 1.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn extrema_match_definition_scan(
            v in proptest::collection::vec(-10.0f64..10.0, 0..200),
            pt in 0.0f64..5.0,
            vt in 0.0f64..5.0,
        ) {
            let got = detect_extrema(&sig(&v), pt, vt);
            prop_assert!(got.len() <= v.len());
            prop_assert!(got.windows(2).all(|w| w[0].index < w[1].index));
            let got: Vec<_> = got.iter().map(|e| (e.index, e.kind)).collect();
            prop_assert_eq!(got, brute_extrema(&v, pt, vt));
        }

        #[test]
        fn grouping_is_a_partition(
            gaps in proptest::collection::vec(1i64..200_000, 0..60),
            t_v in 1i64..150_000,
        ) {
            let mut t = 0;
            let extrema: Vec<Extremum> = gaps.iter().enumerate().map(|(i, g)| {
                t += g;
                Extremum { index: i, timestamp_us: t, value: 1.0, kind: ExtremumKind::Peak }
            }).collect();
            let impulses = group_impulses(&extrema, t_v);
            let flat: Vec<Extremum> = impulses.iter().flat_map(|i| i.extrema.clone()).collect();
            prop_assert_eq!(&flat, &extrema);
            for imp in &impulses {
                prop_assert!(imp.extrema.windows(2).all(|w| w[1].timestamp_us - w[0].timestamp_us < t_v));
            }
            for pair in impulses.windows(2) {
                prop_assert!(pair[1].start_us() - pair[0].end_us() >= t_v);
            }
        }

        #[test]
        fn raising_threshold_never_creates_a_pass(
            v in proptest::collection::vec(-8.0f64..8.0, 3..80),
            low in 0.0f64..4.0,
            extra in 0.0f64..4.0,
        ) {
            let w = window_from(&v);
            let lo = gate(&w, &GateConfig::fixed(low, low));
            let hi = gate(&w, &GateConfig::fixed(low + extra, low));
            prop_assert!(lo.passed() || !hi.passed());
        }
    }
}

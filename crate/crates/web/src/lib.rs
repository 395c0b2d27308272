//! Browser bindings for three pieces of the pipeline: gating a synthetic
//! snippet, aligning its feature vector, and the normalized location error.
//! Every function returns a JSON string for the page to render.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tapnet::data::synth::synthesize_snippet;
use tapnet::data::{region_id, shift_feature, SynthConfig};
use tapnet::features::{build_feature, ANCHOR_INDEX, SEGMENT_LEN};
use tapnet::gating::{detect_extrema, gate_extrema, ExtremumKind, GateConfig};
use tapnet::train::location_error as normalized_error;

fn to_js<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

fn js_err(e: tapnet::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct Point {
    index: usize,
    value: f64,
    peak: bool,
}

#[derive(Serialize)]
struct GateView {
    d_az: Vec<f64>,
    extrema: Vec<Point>,
    passed: bool,
    anchor: Option<usize>,
    threshold: f64,
    is_tap: bool,
    description: String,
}

fn snippet_config(seed: u64, tap: bool) -> SynthConfig {
    SynthConfig {
        seed,
        tap_fraction: if tap { 1.0 } else { 0.0 },
        ..SynthConfig::default()
    }
}

/// Synthesizes one snippet (a tap when `tap` is set, otherwise a non-tap
/// motion) and gates its z-axis derivative with a fixed threshold.
#[wasm_bindgen]
pub fn gate_snippet(seed: u64, tap: bool, threshold: f64) -> Result<String, JsValue> {
    let snippet = synthesize_snippet(&snippet_config(seed, tap), 0).map_err(js_err)?;
    let gate = GateConfig::fixed(threshold, threshold);
    gate.validate().map_err(js_err)?;
    let z: Vec<(i64, f64)> = snippet
        .frames
        .iter()
        .map(|f| (f.timestamp_us, f.d_az()))
        .collect();
    let extrema = detect_extrema(&z, threshold, threshold);
    let decision = gate_extrema(&extrema, &gate);
    let description = match &snippet.label.tap {
        Some(t) => format!("{:?} tap, {:?}", t.direction, t.finger_part).to_lowercase(),
        None => "non-tap motion".into(),
    };
    to_js(&GateView {
        d_az: z.iter().map(|p| p.1).collect(),
        extrema: extrema
            .iter()
            .map(|e| Point {
                index: e.index,
                value: e.value,
                peak: e.kind == ExtremumKind::Peak,
            })
            .collect(),
        passed: decision.passed(),
        anchor: decision.anchor().map(|a| a.index),
        threshold,
        is_tap: snippet.label.is_tap,
        description,
    })
}

#[derive(Serialize)]
struct FeatureView {
    values: Vec<f64>,
    segment_len: usize,
    anchor_index: usize,
    shift: i32,
}

/// The 300-value feature vector of a synthetic tap, optionally shifted in
/// time by `shift` samples within each channel.
#[wasm_bindgen]
pub fn aligned_feature(seed: u64, shift: i32) -> Result<String, JsValue> {
    let snippet = synthesize_snippet(&snippet_config(seed, true), 0).map_err(js_err)?;
    let (feature, _) = build_feature(&snippet.frames, snippet.anchor).map_err(js_err)?;
    let shifted = shift_feature(&feature, shift as isize);
    to_js(&FeatureView {
        values: shifted.values().to_vec(),
        segment_len: SEGMENT_LEN,
        anchor_index: ANCHOR_INDEX,
        shift,
    })
}

#[derive(Serialize)]
struct LocationView {
    error: f64,
    truth_region: usize,
    predicted_region: usize,
}

/// Error between two points given as ratios of screen width and height.
#[wasm_bindgen]
pub fn location_error(
    truth_x: f64,
    truth_y: f64,
    pred_x: f64,
    pred_y: f64,
) -> Result<String, JsValue> {
    let truth_region = region_id(truth_x, truth_y).map_err(js_err)?;
    let predicted_region = region_id(pred_x, pred_y).map_err(js_err)?;
    to_js(&LocationView {
        error: normalized_error([truth_x, truth_y], [pred_x, pred_y], 1.0, 1.0),
        truth_region,
        predicted_region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: Result<String, JsValue>) -> serde_json::Value {
        serde_json::from_str(&s.ok().unwrap()).unwrap()
    }

    #[test]
    fn taps_pass_and_anchor_on_a_peak() {
        let v = parse(gate_snippet(4, true, 1.0));
        assert_eq!(v["passed"], true);
        assert_eq!(v["d_az"].as_array().unwrap().len(), 128);
        let anchor = v["anchor"].as_u64().unwrap();
        assert!(v["extrema"]
            .as_array()
            .unwrap()
            .iter()
            .any(|e| e["index"] == anchor && e["peak"] == true));
    }

    #[test]
    fn feature_anchor_sits_at_its_index() {
        let v = parse(aligned_feature(2, 0));
        let values = v["values"].as_array().unwrap();
        assert_eq!(values.len(), 300);
        let z = &values[100..150];
        let max = z
            .iter()
            .map(|x| x.as_f64().unwrap())
            .fold(f64::MIN, f64::max);
        assert_eq!(values[ANCHOR_INDEX].as_f64().unwrap(), max);
        let shifted = parse(aligned_feature(2, 3));
        assert_eq!(shifted["values"][ANCHOR_INDEX + 3], values[ANCHOR_INDEX]);
    }

    #[test]
    fn corner_to_center() {
        let v = parse(location_error(0.0, 0.0, 0.5, 0.5));
        assert!((v["error"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(v["truth_region"], 0);
        assert_eq!(v["predicted_region"], 17);
    }
}

//! Aligned feature vectors and the device (form factor) vector.
//!
//! Layout of the 300-element feature vector: six derivative channels in the
//! order d_ax, d_ay, d_az, d_gx, d_gy, d_gz, each 50 samples long. Every
//! channel covers `[anchor - 5, anchor + 44]`, so the anchor sample of d_az
//! lands on global index `2 * 50 + 5 = 105`, the 106th element.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::{DerivFrame, CHANNELS};
use crate::{Error, Result};

pub const SEGMENT_LEN: usize = 50;
pub const FEATURE_LEN: usize = CHANNELS * SEGMENT_LEN;
/// Samples kept before the anchor in each channel segment.
pub const PRE_ANCHOR: usize = 5;
/// Samples kept after the anchor in each channel segment.
pub const POST_ANCHOR: usize = SEGMENT_LEN - PRE_ANCHOR - 1;
/// Index of the d_az channel in the layout.
pub const ANCHOR_CHANNEL: usize = 2;
pub const ANCHOR_INDEX: usize = ANCHOR_CHANNEL * SEGMENT_LEN + PRE_ANCHOR;
pub const DEVICE_VECTOR_LEN: usize = 7;

/// Normalizer for screen dimensions in [`normalize_device`].
const DIMENSION_SCALE_MM: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(Error::Shape(format!(
                "feature vector has {} values, expected {FEATURE_LEN}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; FEATURE_LEN],
        }
    }

    /// Concatenates six 50-sample segments.
    pub fn from_channels(channels: &[[f64; SEGMENT_LEN]; CHANNELS]) -> Self {
        Self {
            values: channels.iter().flatten().copied().collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * SEGMENT_LEN..(c + 1) * SEGMENT_LEN]
    }

    pub fn channels(&self) -> [[f64; SEGMENT_LEN]; CHANNELS] {
        let mut out = [[0.0; SEGMENT_LEN]; CHANNELS];
        for (c, seg) in out.iter_mut().enumerate() {
            seg.copy_from_slice(self.channel(c));
        }
        out
    }

    /// Rounds every value to single precision, the on-disk resolution.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
    }
}

/// How many samples of a segment were zero-filled because the window did not
/// reach far enough.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub before: usize,
    pub after: usize,
}

impl Padding {
    pub fn is_none(&self) -> bool {
        self.before == 0 && self.after == 0
    }
}

/// Cuts the aligned feature vector around `anchor` (an index into `frames`).
pub fn build_feature(frames: &[DerivFrame], anchor: usize) -> Result<(FeatureVector, Padding)> {
    if anchor >= frames.len() {
        return Err(Error::Alignment {
            anchor,
            len: frames.len(),
        });
    }
    let start = anchor as isize - PRE_ANCHOR as isize;
    let mut values = vec![0.0; FEATURE_LEN];
    for offset in 0..SEGMENT_LEN {
        let src = start + offset as isize;
        if src < 0 || src as usize >= frames.len() {
            continue;
        }
        let frame = &frames[src as usize];
        for c in 0..CHANNELS {
            values[c * SEGMENT_LEN + offset] = frame.channel(c);
        }
    }
    let padding = Padding {
        before: PRE_ANCHOR.saturating_sub(anchor),
        after: (anchor + POST_ANCHOR + 1).saturating_sub(frames.len()),
    };
    Ok((FeatureVector { values }, padding))
}

/// Phone form factor: screen size, IMU mounting point relative to the upper
/// left corner, and the sign of each IMU axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceVector {
    pub screen_w_mm: f64,
    pub screen_h_mm: f64,
    pub imu_pos_x_mm: f64,
    pub imu_pos_y_mm: f64,
    pub imu_dir: [i8; 3],
}

impl DeviceVector {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.screen_w_mm, self.screen_h_mm];
        if !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::InvalidDevice(
                "screen dimensions must be positive".into(),
            ));
        }
        if !(self.imu_pos_x_mm.is_finite() && self.imu_pos_y_mm.is_finite()) {
            return Err(Error::InvalidDevice("IMU position must be finite".into()));
        }
        if self.imu_dir.iter().any(|s| !(-1..=1).contains(s)) {
            return Err(Error::InvalidDevice(
                "IMU axis signs must be -1, 0 or 1".into(),
            ));
        }
        Ok(())
    }
}

/// Encodes a device vector as seven values in `[-1, 1]`: screen width and
/// height over 200 mm, IMU position over the matching screen dimension, and
/// the three axis signs.
pub fn normalize_device(raw: &DeviceVector) -> Result<[f64; DEVICE_VECTOR_LEN]> {
    raw.validate()?;
    let out = [
        raw.screen_w_mm / DIMENSION_SCALE_MM,
        raw.screen_h_mm / DIMENSION_SCALE_MM,
        raw.imu_pos_x_mm / raw.screen_w_mm,
        raw.imu_pos_y_mm / raw.screen_h_mm,
        raw.imu_dir[0] as f64,
        raw.imu_dir[1] as f64,
        raw.imu_dir[2] as f64,
    ];
    if out.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::InvalidDevice(format!(
            "normalized device vector {out:?} leaves [-1, 1]"
        )));
    }
    Ok(out)
}

/// Known devices keyed by id. Always contains phones `A` and `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceRegistry {
    devices: BTreeMap<String, DeviceVector>,
}

impl Default for DeviceRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl DeviceRegistry {
    /// The two reference phones. Screen sizes follow the 5.5" and 6.3"
    /// diagonals; IMU mounting points are placeholders. B carries its IMU
    /// rotated half a turn about z, so its x and y axes point the other way.
    pub fn builtin() -> Self {
        let mut devices = BTreeMap::new();
        devices.insert(
            "A".to_string(),
            DeviceVector {
                screen_w_mm: 62.5,
                screen_h_mm: 125.0,
                imu_pos_x_mm: 14.0,
                imu_pos_y_mm: 22.0,
                imu_dir: [1, 1, 1],
            },
        );
        devices.insert(
            "B".to_string(),
            DeviceVector {
                screen_w_mm: 70.0,
                screen_h_mm: 144.0,
                imu_pos_x_mm: 52.0,
                imu_pos_y_mm: 34.0,
                imu_dir: [-1, -1, 1],
            },
        );
        Self { devices }
    }

    pub fn new(devices: BTreeMap<String, DeviceVector>) -> Result<Self> {
        let reg = Self { devices };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        for id in ["A", "B"] {
            if !self.devices.contains_key(id) {
                return Err(Error::Config(format!("device registry lacks phone {id}")));
            }
        }
        for (id, d) in &self.devices {
            d.validate()
                .map_err(|e| Error::InvalidDevice(format!("{id}: {e}")))?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&DeviceVector> {
        self.devices
            .get(id)
            .ok_or_else(|| Error::UnknownDevice(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.devices.keys().map(String::as_str)
    }

    pub fn insert(&mut self, id: impl Into<String>, device: DeviceVector) -> Result<()> {
        device.validate()?;
        self.devices.insert(id.into(), device);
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let reg: Self = serde_json::from_str(text)?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }
}

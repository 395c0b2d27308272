//! Labels, samples, the location grid, augmentation, dataset files and the
//! synthetic tap generator.

mod augment;
mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use augment::{augment_scale, augment_shift, shift_feature};
pub use io::{
    load_dataset, read_dataset, save_dataset, write_dataset, DatasetHeader, DATASET_FORMAT,
    DATASET_SCHEMA_VERSION,
};
pub use synth::{
    synthesize, synthesize_one, synthesize_stream, NonTapKind, StreamEvent, SynthConfig,
};

use crate::features::{FeatureVector, DEVICE_VECTOR_LEN};
use crate::model::{LOCATION_COLUMNS, LOCATION_REGIONS, LOCATION_ROWS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Front,
        Direction::Back,
        Direction::Left,
        Direction::Right,
        Direction::Top,
        Direction::Bottom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerPart {
    Pad,
    Nail,
}

impl FingerPart {
    pub const ALL: [FingerPart; 2] = [FingerPart::Pad, FingerPart::Nail];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// How firmly the phone is held.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripForce {
    /// Resting on the palm.
    Rest,
    #[default]
    Normal,
    Strong,
}

/// Collection conditions. Not predicted; recorded for analysis and used by
/// the generator as modulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub grip: GripForce,
    /// Tap force level, 1 (extremely gentle) to 5 (extremely strong).
    pub force: u8,
    pub case: bool,
}

impl Default for Conditions {
    fn default() -> Self {
        Self {
            grip: GripForce::Normal,
            force: 3,
            case: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapProperties {
    pub direction: Direction,
    pub finger_part: FingerPart,
    pub loc_region: usize,
    /// Ratios of screen width and height.
    pub loc_xy: [f64; 2],
}

impl TapProperties {
    /// Properties whose region is derived from `loc_xy`.
    pub fn new(direction: Direction, finger_part: FingerPart, loc_xy: [f64; 2]) -> Result<Self> {
        Ok(Self {
            direction,
            finger_part,
            loc_region: region_id(loc_xy[0], loc_xy[1])?,
            loc_xy,
        })
    }
}

/// `tap` is `None` exactly for non-tap samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapLabel {
    pub is_tap: bool,
    pub tap: Option<TapProperties>,
    pub participant_id: u32,
    pub device_id: String,
    #[serde(default)]
    pub conditions: Conditions,
}

impl TapLabel {
    pub fn validate(&self) -> Result<()> {
        match (&self.tap, self.is_tap) {
            (Some(p), true) => {
                if !p.loc_xy.iter().all(|v| (0.0..=1.0).contains(v)) {
                    return Err(Error::OutOfRange(format!("location {:?}", p.loc_xy)));
                }
                if region_id(p.loc_xy[0], p.loc_xy[1])? != p.loc_region {
                    return Err(Error::OutOfRange(format!(
                        "region {} does not contain location {:?}",
                        p.loc_region, p.loc_xy
                    )));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::Config(
                    "only tap samples carry tap properties".into(),
                ))
            }
        }
        if !(1..=5).contains(&self.conditions.force) {
            return Err(Error::OutOfRange(format!(
                "force level {}",
                self.conditions.force
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub feature: FeatureVector,
    /// Normalized device vector.
    pub device: [f64; DEVICE_VECTOR_LEN],
    pub label: TapLabel,
}

impl Sample {
    pub fn is_tap(&self) -> bool {
        self.label.is_tap
    }

    pub fn tap(&self) -> Option<&TapProperties> {
        self.label.tap.as_ref()
    }
}

/// Region of the 5 x 7 location grid, numbered row-major so vertical
/// neighbours differ by 5.
pub fn region_id(x_ratio: f64, y_ratio: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&x_ratio) || !(0.0..=1.0).contains(&y_ratio) {
        return Err(Error::OutOfRange(format!(
            "location ratio ({x_ratio}, {y_ratio})"
        )));
    }
    let col = ((LOCATION_COLUMNS as f64 * x_ratio).floor() as usize).min(LOCATION_COLUMNS - 1);
    let row = ((LOCATION_ROWS as f64 * y_ratio).floor() as usize).min(LOCATION_ROWS - 1);
    Ok(LOCATION_COLUMNS * row + col)
}

pub fn region_center(id: usize) -> Result<[f64; 2]> {
    if id >= LOCATION_REGIONS {
        return Err(Error::OutOfRange(format!("region {id}")));
    }
    let (row, col) = (id / LOCATION_COLUMNS, id % LOCATION_COLUMNS);
    Ok([
        (col as f64 + 0.5) / LOCATION_COLUMNS as f64,
        (row as f64 + 0.5) / LOCATION_ROWS as f64,
    ])
}

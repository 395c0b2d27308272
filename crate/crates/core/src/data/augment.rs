use rand::Rng;

use super::Sample;
use crate::features::{FeatureVector, SEGMENT_LEN};
use crate::signal::CHANNELS;
use crate::{Error, Result};

/// Shifts every channel segment by `k` samples (positive is later),
/// zero-filling the vacated edge.
pub fn shift_feature(feature: &FeatureVector, k: isize) -> FeatureVector {
    let mut out = FeatureVector::zeros();
    let src = feature.values();
    let dst = out.values_mut();
    for c in 0..CHANNELS {
        let base = c * SEGMENT_LEN;
        for t in 0..SEGMENT_LEN {
            let from = t as isize - k;
            if (0..SEGMENT_LEN as isize).contains(&from) {
                dst[base + t] = src[base + from as usize];
            }
        }
    }
    out
}

/// Random temporal shift drawn uniformly from `-max_shift..=max_shift`.
pub fn augment_shift(sample: &Sample, max_shift: usize, rng: &mut impl Rng) -> Result<Sample> {
    if max_shift >= SEGMENT_LEN {
        return Err(Error::Config(format!(
            "max shift {max_shift} must be below {SEGMENT_LEN}"
        )));
    }
    let k = rng.gen_range(-(max_shift as isize)..=max_shift as isize);
    Ok(Sample {
        feature: shift_feature(&sample.feature, k),
        ..sample.clone()
    })
}

/// Random amplitude scaling by a factor in `1 ± max_delta`. Not used by
/// default training.
pub fn augment_scale(sample: &Sample, max_delta: f64, rng: &mut impl Rng) -> Result<Sample> {
    if !(0.0..1.0).contains(&max_delta) {
        return Err(Error::Config(format!(
            "scale delta {max_delta} must be in [0, 1)"
        )));
    }
    let s = 1.0 + rng.gen_range(-max_delta..=max_delta);
    let mut out = sample.clone();
    out.feature.values_mut().iter_mut().for_each(|v| *v *= s);
    Ok(out)
}

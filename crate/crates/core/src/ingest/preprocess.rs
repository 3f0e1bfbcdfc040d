use nalgebra::Vector3;

use super::{native_rate, FlightLog, MagSample, ObservationSet};
use crate::calibration::CalibrationParams;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
/// Poses older than this (seconds) are stale.
pub const DEFAULT_MAX_POSE_AGE: f64 = 0.05;

/// Per-axis running median over a centred window.
///
/// Near either end the window shrinks symmetrically so that every output
/// sample is the median of an odd, centred neighbourhood; the first and last
/// samples pass through unchanged.
pub fn median_filter(samples: &[MagSample], window: usize) -> Result<Vec<MagSample>> {
    if window == 0 || window % 2 == 0 {
        return Err(invalid(format!(
            "median window must be odd and positive, got {window}"
        )));
    }
    if window > samples.len() {
        return Err(invalid(format!(
            "median window {window} exceeds series length {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let half = window / 2;
    let mut scratch = Vec::with_capacity(window);
    let out = (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let mut field = Vector3::zeros();
            for axis in 0..3 {
                scratch.clear();
                scratch.extend(samples[i - h..=i + h].iter().map(|s| s.field_body[axis]));
                let (_, m, _) = scratch.select_nth_unstable_by(h, f64::total_cmp);
                field[axis] = *m;
            }
            MagSample {
                field_body: field,
                ..samples[i]
            }
        })
        .collect();
    Ok(out)
}

fn nearest_index(samples: &[MagSample], t: f64) -> usize {
    let hi = samples.partition_point(|s| s.t < t);
    if hi == 0 {
        return 0;
    }
    if hi == samples.len() {
        return hi - 1;
    }
    // ties go to the earlier sample
    if t - samples[hi - 1].t <= samples[hi].t - t {
        hi - 1
    } else {
        hi
    }
}

/// Picks the sample nearest each slot `t0 + k / target_rate`, dropping
/// repeated picks.
pub fn downsample(samples: &[MagSample], target_rate: f64) -> Result<Vec<MagSample>> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(Error::Empty("magnetometer stream")),
    };
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(invalid(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    if let Some(native) = native_rate(samples) {
        if target_rate > native * (1.0 + 1e-9) {
            return Err(invalid(format!(
                "target rate {target_rate} Hz exceeds native rate {native} Hz"
            )));
        }
    }
    // slots run to the last one whose nearest sample can be the final sample
    let slots = ((last - first) * target_rate + 0.5).floor() as usize;
    let mut out: Vec<MagSample> = Vec::with_capacity(slots + 1);
    let mut previous = None;
    for k in 0..=slots {
        let idx = nearest_index(samples, first + k as f64 / target_rate);
        if previous != Some(idx) {
            out.push(samples[idx]);
            previous = Some(idx);
        }
    }
    Ok(out)
}

/// [`replace_stale_from`] drawing replacements from the same list.
pub fn replace_stale(samples: &[MagSample], max_age: f64) -> Result<Vec<MagSample>> {
    replace_stale_from(samples, samples, max_age)
}

/// Replaces every selected sample whose pose is older than `max_age` with
/// the temporally nearest fresh sample from `pool`. A replacement that is
/// already selected appears only once in the result.
pub fn replace_stale_from(
    selected: &[MagSample],
    pool: &[MagSample],
    max_age: f64,
) -> Result<Vec<MagSample>> {
    let fresh: Vec<MagSample> = pool
        .iter()
        .filter(|s| s.pose_age <= max_age)
        .copied()
        .collect();
    let mut out = Vec::with_capacity(selected.len());
    for s in selected {
        if s.pose_age <= max_age {
            out.push(*s);
        } else if fresh.is_empty() {
            return Err(Error::NoFreshSample { max_age });
        } else {
            out.push(fresh[nearest_index(&fresh, s.t)]);
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out.dedup_by(|a, b| a.t == b.t);
    Ok(out)
}

/// Calibrates and rotates every magnetometer sample of a preprocessed log
/// into the world frame, pairing it with the interpolated position.
pub fn to_world(log: &FlightLog, calib: &CalibrationParams) -> Result<ObservationSet> {
    calib.validate()?;
    let n = log.mags.len();
    let mut obs = ObservationSet {
        locations: Vec::with_capacity(n),
        measurements: Vec::with_capacity(n),
        timestamps: Vec::with_capacity(n),
        sources: vec![log.id.clone()],
    };
    for m in &log.mags {
        let (position, attitude) = log.pose_at(m.t)?;
        let body = calib.inverse_model(&m.field_body)?;
        let world = attitude * body;
        obs.locations.push(position.into());
        obs.measurements.push(world.into());
        obs.timestamps.push(m.t);
    }
    Ok(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocessConfig {
    pub median_window: usize,
    pub rate_hz: f64,
    pub max_pose_age: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            median_window: DEFAULT_MEDIAN_WINDOW,
            rate_hz: 2.0,
            max_pose_age: DEFAULT_MAX_POSE_AGE,
        }
    }
}

/// Median filter, downsample, stale-pose replacement, calibration and
/// rotation, in that order.
pub fn preprocess(
    log: &FlightLog,
    config: &PreprocessConfig,
    calib: &CalibrationParams,
) -> Result<ObservationSet> {
    let filtered = median_filter(&log.mags, config.median_window)?;
    let selected = downsample(&filtered, config.rate_hz)?;
    let mags = replace_stale_from(&selected, &filtered, config.max_pose_age)?;
    let processed = FlightLog {
        id: log.id.clone(),
        poses: log.poses.clone(),
        mags,
    };
    to_world(&processed, calib)
}

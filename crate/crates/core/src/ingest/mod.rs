//! Flight logs, observation sets and the preprocessing chain that turns the
//! former into the latter.

mod io;
mod preprocess;

pub use io::{read_flight_log, read_observations, write_flight_log, write_observations};
pub use preprocess::{
    downsample, median_filter, preprocess, replace_stale, replace_stale_from, to_world,
    PreprocessConfig, DEFAULT_MAX_POSE_AGE, DEFAULT_MEDIAN_WINDOW,
};

use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{invalid, Error, Result};
use crate::Point3;

/// Motion-capture pose. The attitude rotates body-frame vectors into the
/// world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
}

impl PoseSample {
    pub fn new(t: f64, position: Vector3<f64>, attitude: UnitQuaternion<f64>) -> Self {
        PoseSample {
            t,
            position,
            attitude,
        }
    }

    pub fn level(t: f64, position: Vector3<f64>) -> Self {
        PoseSample {
            t,
            position,
            attitude: UnitQuaternion::identity(),
        }
    }
}

/// One magnetometer reading in the sensor (body) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagSample {
    pub t: f64,
    pub field_body: Vector3<f64>,
    /// Seconds since the most recent pose at or before `t`; infinite when no
    /// pose precedes the sample.
    pub pose_age: f64,
}

impl MagSample {
    pub fn new(t: f64, field_body: Vector3<f64>, pose_age: f64) -> Self {
        MagSample {
            t,
            field_body,
            pose_age,
        }
    }
}

/// Time-aligned pose and magnetometer streams from one flight.
///
/// Flight ids follow the `tY_XX` convention: series `Y`, two-digit flight
/// number `XX`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    pub id: String,
    pub poses: Vec<PoseSample>,
    pub mags: Vec<MagSample>,
}

impl FlightLog {
    /// Builds a log from raw streams, deriving each sample's pose age.
    pub fn from_streams(
        id: impl Into<String>,
        poses: Vec<PoseSample>,
        mags: impl IntoIterator<Item = (f64, Vector3<f64>)>,
    ) -> Result<Self> {
        let mut mags_out = Vec::new();
        let mut cursor = 0usize;
        for (t, b) in mags {
            while cursor < poses.len() && poses[cursor].t <= t {
                cursor += 1;
            }
            let age = if cursor == 0 {
                f64::INFINITY
            } else {
                t - poses[cursor - 1].t
            };
            mags_out.push(MagSample::new(t, b, age));
        }
        let log = FlightLog {
            id: id.into(),
            poses,
            mags: mags_out,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.poses.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(invalid(format!(
                    "pose timestamps not increasing at t = {}",
                    w[1].t
                )));
            }
        }
        for w in self.mags.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(invalid(format!(
                    "magnetometer timestamps not increasing at t = {}",
                    w[1].t
                )));
            }
        }
        for p in &self.poses {
            if !p.t.is_finite() || !p.position.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("non-finite pose at t = {}", p.t)));
            }
            if (p.attitude.as_ref().norm() - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "non-unit attitude quaternion at t = {}",
                    p.t
                )));
            }
        }
        for m in &self.mags {
            if !m.t.is_finite() || !m.field_body.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!(
                    "non-finite magnetometer sample at t = {}",
                    m.t
                )));
            }
            if m.pose_age < 0.0 {
                return Err(invalid(format!("negative pose age at t = {}", m.t)));
            }
        }
        Ok(())
    }

    /// Interpolated pose at `t`; see [`interpolate_pose`].
    pub fn pose_at(&self, t: f64) -> Result<(Vector3<f64>, UnitQuaternion<f64>)> {
        interpolate_pose(&self.poses, t)
    }

    /// Median spacing of the magnetometer stream in Hz.
    pub fn native_rate(&self) -> Option<f64> {
        native_rate(&self.mags)
    }
}

pub(crate) fn native_rate(samples: &[MagSample]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    let mid = dts.len() / 2;
    let (_, median, _) = dts.select_nth_unstable_by(mid, f64::total_cmp);
    Some(1.0 / *median)
}

/// Pose at `t`: linear interpolation of position and spherical interpolation
/// of attitude between the bracketing poses.
pub fn interpolate_pose(
    poses: &[PoseSample],
    t: f64,
) -> Result<(Vector3<f64>, UnitQuaternion<f64>)> {
    let (first, last) = match (poses.first(), poses.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Empty("pose stream")),
    };
    if !(t >= first.t && t <= last.t) {
        return Err(Error::OutsidePoseRange {
            t,
            start: first.t,
            end: last.t,
        });
    }
    // index of the first pose strictly after t
    let hi = poses.partition_point(|p| p.t <= t);
    if hi == poses.len() {
        return Ok((last.position, last.attitude));
    }
    let a = &poses[hi - 1];
    let b = &poses[hi];
    let s = (t - a.t) / (b.t - a.t);
    if s == 0.0 {
        return Ok((a.position, a.attitude));
    }
    let position = a.position + (b.position - a.position) * s;
    let attitude = a
        .attitude
        .try_slerp(&b.attitude, s, 1e-12)
        .unwrap_or(a.attitude);
    Ok((position, attitude))
}

/// Paired world-frame locations and field measurements.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub locations: Vec<Point3>,
    /// World-frame field, µT.
    pub measurements: Vec<Point3>,
    pub timestamps: Vec<f64>,
    /// Ids of the flights the rows came from.
    pub sources: Vec<String>,
}

impl ObservationSet {
    pub fn new(
        locations: Vec<Point3>,
        measurements: Vec<Point3>,
        timestamps: Vec<f64>,
        sources: Vec<String>,
    ) -> Result<Self> {
        let set = ObservationSet {
            locations,
            measurements,
            timestamps,
            sources,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        if self.measurements.len() != n || self.timestamps.len() != n {
            return Err(invalid(format!(
                "observation row counts differ: {} locations, {} measurements, {} timestamps",
                n,
                self.measurements.len(),
                self.timestamps.len()
            )));
        }
        let finite = self
            .locations
            .iter()
            .chain(&self.measurements)
            .flatten()
            .all(|v| v.is_finite())
            && self.timestamps.iter().all(|t| t.is_finite());
        if !finite {
            return Err(invalid("observation set contains non-finite entries"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// One measured component across all rows.
    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.measurements.iter().map(|m| m[axis]).collect()
    }

    /// Measurement magnitudes.
    pub fn norms(&self) -> Vec<f64> {
        self.measurements
            .iter()
            .map(|m| (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt())
            .collect()
    }

    /// Concatenates several sets, keeping row order and the union of sources.
    pub fn merge<'a>(sets: impl IntoIterator<Item = &'a ObservationSet>) -> ObservationSet {
        let mut out = ObservationSet::default();
        for s in sets {
            out.locations.extend_from_slice(&s.locations);
            out.measurements.extend_from_slice(&s.measurements);
            out.timestamps.extend_from_slice(&s.timestamps);
            for id in &s.sources {
                if !out.sources.contains(id) {
                    out.sources.push(id.clone());
                }
            }
        }
        out
    }
}

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::field::{evaluate_field, Environment};
use crate::calibration::CalibrationParams;
use crate::error::{invalid, Error, Result};
use crate::ingest::{interpolate_pose, FlightLog, PoseSample};
use crate::Point3;

/// Mid-flight change of the vehicle bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSwitch {
    /// Seconds from the start of the flight.
    pub t: f64,
    /// Bias in effect from `t` on, µT.
    pub bias: Point3,
}

/// Sensor and vehicle imperfections applied to the true field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionProfile {
    /// µT
    pub gaussian_noise_sd: f64,
    /// Probability per sample of a single-axis spike.
    pub spurious_rate: f64,
    /// µT
    pub spurious_magnitude: f64,
    /// Constant body-frame bias for the flight, µT.
    pub flight_bias: Point3,
    #[serde(default)]
    pub bias_switch: Option<BiasSwitch>,
    /// Intervals `[start, end]` (s) with no motion-capture poses.
    #[serde(default)]
    pub pose_dropouts: Vec<[f64; 2]>,
    /// Magnetometer error model applied to the biased body field.
    #[serde(default)]
    pub sensor_model: Option<CalibrationParams>,
}

impl Default for CorruptionProfile {
    fn default() -> Self {
        CorruptionProfile::none()
    }
}

impl CorruptionProfile {
    pub fn none() -> Self {
        CorruptionProfile {
            gaussian_noise_sd: 0.0,
            spurious_rate: 0.0,
            spurious_magnitude: 0.0,
            flight_bias: [0.0; 3],
            bias_switch: None,
            pose_dropouts: Vec::new(),
            sensor_model: None,
        }
    }

    /// Noise of the lab magnetometer: 0.1 µT white noise and rare ±3 µT
    /// spikes.
    pub fn lab() -> Self {
        CorruptionProfile {
            gaussian_noise_sd: 0.1,
            spurious_rate: 0.002,
            spurious_magnitude: 3.0,
            ..CorruptionProfile::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spurious_rate >= 0.0 && self.spurious_rate <= 1.0) {
            return Err(invalid("spurious rate must lie in [0, 1]"));
        }
        if !(self.gaussian_noise_sd >= 0.0 && self.gaussian_noise_sd.is_finite())
            || !(self.spurious_magnitude >= 0.0 && self.spurious_magnitude.is_finite())
        {
            return Err(invalid("noise magnitudes must be non-negative and finite"));
        }
        let finite = |p: &Point3| p.iter().all(|v| v.is_finite());
        if !finite(&self.flight_bias)
            || self
                .bias_switch
                .is_some_and(|s| !finite(&s.bias) || !s.t.is_finite())
        {
            return Err(invalid("bias must be finite"));
        }
        for d in &self.pose_dropouts {
            if !(d[0] < d[1]) {
                return Err(invalid(format!("pose dropout {d:?} must have start < end")));
            }
        }
        if let Some(s) = &self.sensor_model {
            s.validate()?;
        }
        Ok(())
    }

    /// Bias in effect at `t`.
    pub fn bias_at(&self, t: f64) -> Vector3<f64> {
        match self.bias_switch {
            Some(s) if t >= s.t => s.bias.into(),
            _ => self.flight_bias.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightOptions {
    /// Flight id, `tY_XX`.
    pub id: String,
    /// Magnetometer rate, Hz.
    pub mag_rate_hz: f64,
}

impl Default for FlightOptions {
    fn default() -> Self {
        FlightOptions {
            id: "t0_00".into(),
            mag_rate_hz: 200.0,
        }
    }
}

/// What the simulator knows about one magnetometer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub field_world: Vector3<f64>,
    /// Axis and signed size of a spike, if one was injected.
    pub spurious: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFlight {
    pub log: FlightLog,
    pub truth: Vec<TruthSample>,
}

impl SimulatedFlight {
    pub fn spurious_count(&self) -> usize {
        self.truth.iter().filter(|s| s.spurious.is_some()).count()
    }
}

/// Flies `trajectory` through `env` and records a corrupted magnetometer
/// stream at `options.mag_rate_hz`. For every sample the random draws are
/// taken in a fixed order (three noise values, spike test, spike axis,
/// spike sign), so a seed fully determines the log.
pub fn simulate_flight(
    env: &Environment,
    trajectory: &[PoseSample],
    profile: &CorruptionProfile,
    seed: u64,
    options: &FlightOptions,
) -> Result<SimulatedFlight> {
    profile.validate()?;
    let (first, last) = match (trajectory.first(), trajectory.last()) {
        (Some(f), Some(l)) => (f.t, l.t),
        _ => return Err(Error::Empty("trajectory")),
    };
    if !(options.mag_rate_hz > 0.0 && options.mag_rate_hz.is_finite()) {
        return Err(invalid("magnetometer rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = ((last - first) * options.mag_rate_hz + 1e-9).floor() as u64 + 1;
    let mut mags = Vec::with_capacity(count as usize);
    let mut truth = Vec::with_capacity(count as usize);
    for k in 0..count {
        let t = first + k as f64 / options.mag_rate_hz;
        let (position, attitude) = interpolate_pose(trajectory, t)?;
        let field_world = evaluate_field(env, &position.into())?;
        let mut body = attitude.inverse() * field_world + profile.bias_at(t);
        if let Some(model) = &profile.sensor_model {
            body = model.forward_model(&body);
        }
        let noise = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        body += noise * profile.gaussian_noise_sd;
        let spike: f64 = rng.gen();
        let axis = rng.gen_range(0..3usize);
        let positive: bool = rng.gen();
        let spurious = (spike < profile.spurious_rate).then(|| {
            let delta = if positive {
                profile.spurious_magnitude
            } else {
                -profile.spurious_magnitude
            };
            body[axis] += delta;
            (axis, delta)
        });
        mags.push((t, body));
        truth.push(TruthSample {
            t,
            position,
            field_world,
            spurious,
        });
    }
    let n_poses = trajectory.len();
    let poses: Vec<PoseSample> = trajectory
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            *i == 0
                || *i == n_poses - 1
                || !profile
                    .pose_dropouts
                    .iter()
                    .any(|d| p.t > d[0] && p.t < d[1])
        })
        .map(|(_, p)| *p)
        .collect();
    let log = FlightLog::from_streams(options.id.clone(), poses, mags)?;
    Ok(SimulatedFlight { log, truth })
}

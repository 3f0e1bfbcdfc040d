use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::PoseSample;
use crate::Bounds;

const EPS: f64 = 1e-9;

/// Direction of the long strides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrideAxis {
    #[default]
    X,
    Y,
}

/// Smooth small-angle attitude perturbation: each Euler angle follows
/// `max_angle · sin(2π f t + φ)` with seeded frequency and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeWobble {
    /// Radians.
    pub max_angle: f64,
    pub seed: u64,
}

/// Boustrophedon scan over one or more horizontal slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lawnmower {
    /// Slice altitudes (z, metres, negative is up), flown in order.
    pub altitudes: Vec<f64>,
    pub stride_length: f64,
    pub lane_spacing: f64,
    /// m/s
    pub speed_limit: f64,
    /// Pose rate, Hz.
    pub sample_rate: f64,
    /// m/s²
    #[serde(default = "default_acceleration")]
    pub acceleration: f64,
    #[serde(default)]
    pub stride_axis: StrideAxis,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub wobble: Option<AttitudeWobble>,
}

fn default_acceleration() -> f64 {
    1.0
}

impl Lawnmower {
    pub fn new(
        altitudes: Vec<f64>,
        stride_length: f64,
        lane_spacing: f64,
        speed_limit: f64,
        sample_rate: f64,
    ) -> Self {
        Lawnmower {
            altitudes,
            stride_length,
            lane_spacing,
            speed_limit,
            sample_rate,
            acceleration: default_acceleration(),
            stride_axis: StrideAxis::X,
            bounds: Bounds::workspace(),
            wobble: None,
        }
    }

    pub fn with_stride_axis(mut self, axis: StrideAxis) -> Self {
        self.stride_axis = axis;
        self
    }

    pub fn with_wobble(mut self, wobble: AttitudeWobble) -> Self {
        self.wobble = Some(wobble);
        self
    }

    fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.altitudes.is_empty() {
            return Err(invalid("lawnmower needs at least one altitude"));
        }
        for &z in &self.altitudes {
            if !(z >= self.bounds.min[2] - EPS && z <= self.bounds.max[2] + EPS) {
                return Err(invalid(format!("altitude {z} outside the workspace")));
            }
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lane_spacing) {
            return Err(invalid("lane spacing must be positive"));
        }
        if !positive(self.stride_length) {
            return Err(invalid("stride length must be positive"));
        }
        if !positive(self.speed_limit)
            || !positive(self.sample_rate)
            || !positive(self.acceleration)
        {
            return Err(invalid(
                "speed limit, acceleration and sample rate must be positive",
            ));
        }
        let (along, _) = self.axes();
        if self.stride_length > self.bounds.span(along) + EPS {
            return Err(invalid(format!(
                "stride {} m exceeds the workspace span {} m",
                self.stride_length,
                self.bounds.span(along)
            )));
        }
        if let Some(w) = &self.wobble {
            if !(w.max_angle >= 0.0 && w.max_angle < 0.5) {
                return Err(invalid("wobble angle must lie in [0, 0.5) rad"));
            }
        }
        Ok(())
    }

    fn axes(&self) -> (usize, usize) {
        match self.stride_axis {
            StrideAxis::X => (0, 1),
            StrideAxis::Y => (1, 0),
        }
    }

    /// Corner points of the path.
    pub fn waypoints(&self) -> Result<Vec<Vector3<f64>>> {
        self.validate()?;
        let b = &self.bounds;
        let (along, across) = self.axes();
        let center = b.center();
        let ends = [
            center[along] - 0.5 * self.stride_length,
            center[along] + 0.5 * self.stride_length,
        ];
        let count = (b.span(across) / self.lane_spacing + EPS).floor() as usize + 1;
        let first = center[across] - 0.5 * (count - 1) as f64 * self.lane_spacing;
        let lanes: Vec<f64> = (0..count)
            .map(|i| first + i as f64 * self.lane_spacing)
            .collect();

        let point = |a: f64, c: f64, z: f64| {
            let mut p = Vector3::new(0.0, 0.0, z);
            p[along] = a;
            p[across] = c;
            p
        };
        let origin = |z: f64| {
            Vector3::new(
                0.0f64.clamp(b.min[0], b.max[0]),
                0.0f64.clamp(b.min[1], b.max[1]),
                z,
            )
        };

        let mut pts = vec![origin(self.altitudes[0])];
        let mut side = 0usize;
        for (slice, &z) in self.altitudes.iter().enumerate() {
            let order: Vec<f64> = if slice % 2 == 0 {
                lanes.clone()
            } else {
                lanes.iter().rev().copied().collect()
            };
            for c in order {
                pts.push(point(ends[side], c, z));
                side = 1 - side;
                pts.push(point(ends[side], c, z));
            }
        }
        pts.push(origin(*self.altitudes.last().unwrap()));
        pts.dedup_by(|a, b| (*a - *b).norm() < EPS);
        Ok(pts)
    }

    /// Poses sampled at `sample_rate` along the path, starting at `t = 0`.
    pub fn generate(&self) -> Result<Vec<PoseSample>> {
        let pts = self.waypoints()?;
        let profiles: Vec<Segment> = pts
            .windows(2)
            .map(|w| Segment::new(w[0], w[1], self.speed_limit, self.acceleration))
            .collect();
        let total: f64 = profiles.iter().map(|s| s.duration).sum();
        let wobble = self.wobble.map(Wobble::new);

        let mut out = Vec::new();
        let mut seg = 0usize;
        let mut seg_start = 0.0;
        let last_k = (total * self.sample_rate + EPS).floor() as u64;
        let mut push = |t: f64, p: Vector3<f64>| {
            let q = wobble
                .as_ref()
                .map_or(UnitQuaternion::identity(), |w| w.at(t));
            out.push(PoseSample::new(t, p, q));
        };
        for k in 0..=last_k {
            let t = k as f64 / self.sample_rate;
            while seg + 1 < profiles.len() && t >= seg_start + profiles[seg].duration {
                seg_start += profiles[seg].duration;
                seg += 1;
            }
            let p = if profiles.is_empty() {
                pts[0]
            } else {
                profiles[seg].position(t - seg_start)
            };
            push(t, p);
        }
        if total - last_k as f64 / self.sample_rate > 1e-6 {
            push(total, *pts.last().unwrap());
        }
        Ok(out)
    }
}

/// Free-function form of [`Lawnmower::generate`] with default acceleration,
/// x-strides and the standard workspace.
pub fn lawnmower_trajectory(
    altitudes: &[f64],
    x_stride: f64,
    y_spacing: f64,
    speed_limit: f64,
    sample_rate: f64,
) -> Result<Vec<PoseSample>> {
    Lawnmower::new(
        altitudes.to_vec(),
        x_stride,
        y_spacing,
        speed_limit,
        sample_rate,
    )
    .generate()
}

/// Stationary sensor at `position` taking `count` uniformly random
/// attitudes at `rate` Hz, for calibration data.
pub fn tumble(position: [f64; 3], count: usize, rate: f64, seed: u64) -> Result<Vec<PoseSample>> {
    if count < 2 || !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(
            "tumble needs at least two poses and a positive rate",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Vector3::from(position);
    Ok((0..count)
        .map(|k| {
            let q = loop {
                let v = nalgebra::Vector4::from_fn(|_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                if v.norm() > 1e-6 {
                    break nalgebra::Quaternion::from(v);
                }
            };
            PoseSample::new(k as f64 / rate, p, UnitQuaternion::from_quaternion(q))
        })
        .collect())
}

/// Straight move from rest to rest with a trapezoidal (or triangular) speed
/// profile.
struct Segment {
    start: Vector3<f64>,
    dir: Vector3<f64>,
    length: f64,
    peak: f64,
    accel: f64,
    ramp: f64,
    duration: f64,
}

impl Segment {
    fn new(start: Vector3<f64>, end: Vector3<f64>, vmax: f64, accel: f64) -> Self {
        let d = end - start;
        let length = d.norm();
        let dir = if length > 0.0 {
            d / length
        } else {
            Vector3::zeros()
        };
        let peak = vmax.min((accel * length).sqrt());
        let ramp = peak / accel;
        let cruise = if peak > 0.0 {
            (length - peak * ramp) / peak
        } else {
            0.0
        };
        Segment {
            start,
            dir,
            length,
            peak,
            accel,
            ramp,
            duration: 2.0 * ramp + cruise.max(0.0),
        }
    }

    fn distance(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let s = if t < self.ramp {
            0.5 * self.accel * t * t
        } else if t <= self.duration - self.ramp {
            0.5 * self.peak * self.ramp + self.peak * (t - self.ramp)
        } else {
            let r = self.duration - t;
            self.length - 0.5 * self.accel * r * r
        };
        s.clamp(0.0, self.length)
    }

    fn position(&self, t: f64) -> Vector3<f64> {
        self.start + self.dir * self.distance(t)
    }
}

struct Wobble {
    amplitude: f64,
    freq: [f64; 3],
    phase: [f64; 3],
}

impl Wobble {
    fn new(w: AttitudeWobble) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
        let freq = [0, 1, 2].map(|_| rng.gen_range(0.05..0.5));
        let phase = [0, 1, 2].map(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        Wobble {
            amplitude: w.max_angle,
            freq,
            phase,
        }
    }

    fn at(&self, t: f64) -> UnitQuaternion<f64> {
        let a = [0, 1, 2].map(|k| {
            self.amplitude * (std::f64::consts::TAU * self.freq[k] * t + self.phase[k]).sin()
        });
        UnitQuaternion::from_euler_angles(a[0], a[1], a[2])
    }
}

/// The scan profiles flown in the lab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlightProfile {
    /// Four low slices, 0.5 to 1.25 m.
    LowerFour,
    /// Four high slices, 1.5 to 2.25 m.
    UpperFour,
    /// Three slices spread over the full height.
    ScanGamma,
    /// Three slices, x-strides.
    ScanEpsilon,
    /// Three slices, y-strides.
    ScanEpsilonPerp,
}

impl FlightProfile {
    pub const ALL: [FlightProfile; 5] = [
        FlightProfile::LowerFour,
        FlightProfile::UpperFour,
        FlightProfile::ScanGamma,
        FlightProfile::ScanEpsilon,
        FlightProfile::ScanEpsilonPerp,
    ];

    pub fn altitudes(self) -> Vec<f64> {
        match self {
            FlightProfile::LowerFour => vec![-0.5, -0.75, -1.0, -1.25],
            FlightProfile::UpperFour => vec![-1.5, -1.75, -2.0, -2.25],
            FlightProfile::ScanGamma => vec![-0.5, -1.375, -2.25],
            FlightProfile::ScanEpsilon | FlightProfile::ScanEpsilonPerp => vec![-0.75, -1.5, -2.0],
        }
    }

    /// Lawnmower for this profile: 0.25 m lane spacing, 1.9 m/s limit,
    /// strides spanning the workspace.
    pub fn lawnmower(self, sample_rate: f64) -> Lawnmower {
        let b = Bounds::workspace();
        match self {
            FlightProfile::ScanEpsilonPerp => {
                Lawnmower::new(self.altitudes(), b.span(1), 0.25, 1.9, sample_rate)
                    .with_stride_axis(StrideAxis::Y)
            }
            _ => Lawnmower::new(self.altitudes(), b.span(0), 0.25, 1.9, sample_rate),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_altitude_has_thirteen_lanes() {
        let lm = Lawnmower::new(vec![-1.5], 4.0, 0.25, 1.9, 120.0);
        let pts = lm.waypoints().unwrap();
        // origin, 13 lanes × 2 ends, origin
        assert_eq!(pts.len(), 28);
        let lanes: Vec<f64> = pts[1..27].iter().step_by(2).map(|p| p.y).collect();
        for (i, y) in lanes.iter().enumerate() {
            assert!((y - (-1.5 + 0.25 * i as f64)).abs() < 1e-12);
        }
        assert_eq!(pts[0], Vector3::new(0.0, 0.0, -1.5));
        assert_eq!(pts[27], Vector3::new(0.0, 0.0, -1.5));
        // lanes are x-strides of 4 m
        assert!((pts[1].x - pts[2].x).abs() - 4.0 < 1e-12);
    }

    #[test]
    fn lower_four_has_z_strides_between_slices() {
        let pts = FlightProfile::LowerFour
            .lawnmower(120.0)
            .waypoints()
            .unwrap();
        let zs: Vec<f64> = pts.iter().map(|p| p.z).collect();
        let mut levels = zs.clone();
        levels.dedup();
        assert_eq!(levels, vec![-0.5, -0.75, -1.0, -1.25]);
        // every altitude change is purely vertical
        for w in pts.windows(2) {
            if w[0].z != w[1].z {
                assert!((w[0].xy() - w[1].xy()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn speed_cap_and_bounds_hold() {
        for profile in FlightProfile::ALL {
            let poses = profile.lawnmower(120.0).generate().unwrap();
            let b = Bounds::workspace();
            for w in poses.windows(2) {
                assert!(w[1].t > w[0].t);
                let v = (w[1].position - w[0].position).norm() / (w[1].t - w[0].t);
                assert!(v <= 1.9 + 1e-9, "{profile:?} speed {v}");
            }
            for p in &poses {
                assert!(b.contains(&p.position.into(), 1e-9));
            }
            let first = poses.first().unwrap().position;
            let last = poses.last().unwrap().position;
            assert!(first.xy().norm() < 1e-12 && last.xy().norm() < 1e-12);
        }
    }

    #[test]
    fn lower_four_duration_is_lab_scale() {
        let poses = FlightProfile::LowerFour
            .lawnmower(120.0)
            .generate()
            .unwrap();
        let t = poses.last().unwrap().t;
        assert!(t > 200.0 && t < 400.0, "{t}");
    }

    #[test]
    fn errors() {
        assert!(lawnmower_trajectory(&[], 4.0, 0.25, 1.9, 120.0).is_err());
        assert!(lawnmower_trajectory(&[-1.0], 5.0, 0.25, 1.9, 120.0).is_err());
        assert!(lawnmower_trajectory(&[-1.0], 4.0, 0.0, 1.9, 120.0).is_err());
        assert!(lawnmower_trajectory(&[-3.0], 4.0, 0.25, 1.9, 120.0).is_err());
    }

    #[test]
    fn wobble_is_small_and_deterministic() {
        let lm = Lawnmower::new(vec![-1.0], 4.0, 0.5, 1.9, 50.0).with_wobble(AttitudeWobble {
            max_angle: 0.05,
            seed: 3,
        });
        let a = lm.generate().unwrap();
        let b = lm.generate().unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.attitude.angle() < 0.1));
        assert!(a.iter().any(|p| p.attitude.angle() > 1e-3));
    }

    #[test]
    fn tumble_covers_orientations() {
        let poses = tumble([0.0, 0.0, -1.0], 400, 10.0, 2).unwrap();
        let mean = poses
            .iter()
            .map(|p| p.attitude * Vector3::z())
            .sum::<Vector3<f64>>()
            / 400.0;
        assert!(mean.norm() < 0.15);
        assert!(poses
            .iter()
            .all(|p| (p.attitude.as_ref().norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn segment_profile_reaches_end() {
        let s = Segment::new(Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0), 1.9, 1.0);
        assert!((s.duration - (4.0 / 1.9 + 1.9)).abs() < 1e-12);
        assert!((s.position(s.duration).x - 4.0).abs() < 1e-12);
        let short = Segment::new(Vector3::zeros(), Vector3::new(0.25, 0.0, 0.0), 1.9, 1.0);
        assert!((short.duration - 1.0).abs() < 1e-12);
        assert!((short.position(0.5).x - 0.125).abs() < 1e-12);
    }
}

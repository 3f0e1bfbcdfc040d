use serde::{Deserialize, Serialize};

use super::field::{synthetic_lab, Environment};
use super::flight::{simulate_flight, CorruptionProfile, FlightOptions, SimulatedFlight};
use super::trajectory::{tumble, FlightProfile, Lawnmower};
use crate::error::Result;
use crate::ingest::PoseSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSpec {
    SyntheticLab { seed: u64 },
    Explicit(Environment),
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<Environment> {
        let env = match self {
            EnvironmentSpec::SyntheticLab { seed } => synthetic_lab(*seed),
            EnvironmentSpec::Explicit(env) => env.clone(),
        };
        env.validate()?;
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySpec {
    Profile {
        name: FlightProfile,
        pose_rate_hz: f64,
    },
    Lawnmower(Lawnmower),
    /// Stationary random attitudes for calibration data.
    Tumble {
        position: [f64; 3],
        poses: usize,
        pose_rate_hz: f64,
        seed: u64,
    },
}

impl TrajectorySpec {
    pub fn generate(&self) -> Result<Vec<PoseSample>> {
        match self {
            TrajectorySpec::Profile { name, pose_rate_hz } => {
                name.lawnmower(*pose_rate_hz).generate()
            }
            TrajectorySpec::Lawnmower(l) => l.generate(),
            TrajectorySpec::Tumble {
                position,
                poses,
                pose_rate_hz,
                seed,
            } => tumble(*position, *poses, *pose_rate_hz, *seed),
        }
    }
}

fn default_mag_rate() -> f64 {
    200.0
}

/// A complete simulated flight: environment, path, corruption and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub environment: EnvironmentSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub corruption: CorruptionProfile,
    #[serde(default = "default_mag_rate")]
    pub mag_rate_hz: f64,
}

impl Scenario {
    /// Parses and validates a scenario file.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.environment.build()?;
        s.corruption.validate()?;
        Ok(s)
    }

    pub fn run(&self) -> Result<SimulatedFlight> {
        let env = self.environment.build()?;
        let path = self.trajectory.generate()?;
        let options = FlightOptions {
            id: self.id.clone(),
            mag_rate_hz: self.mag_rate_hz,
        };
        simulate_flight(&env, &path, &self.corruption, self.seed, &options)
    }
}

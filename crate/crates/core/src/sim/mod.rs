//! Synthetic magnetic environments, scan trajectories and corrupted sensor
//! logs with known ground truth.

mod field;
mod flight;
mod scenario;
mod trajectory;

pub use field::{evaluate_field, synthetic_lab, DipoleSource, Environment, LAB_BACKGROUND};
pub use flight::{
    simulate_flight, BiasSwitch, CorruptionProfile, FlightOptions, SimulatedFlight, TruthSample,
};
pub use scenario::{EnvironmentSpec, Scenario, TrajectorySpec};
pub use trajectory::{
    lawnmower_trajectory, tumble, AttitudeWobble, FlightProfile, Lawnmower, StrideAxis,
};

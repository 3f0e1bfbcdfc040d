//! Indoor magnetic field mapping.
//!
//! The crate covers the whole offline pipeline: a synthetic flight and field
//! simulator, flight-log preprocessing, magnetometer calibration, per-axis
//! Gaussian-process maps (intermediate and compromise), and map evaluation.
//!
//! World frame convention: `z` points down, the floor is at `z = 0` and the
//! default working volume is `x ∈ [-2, 2]`, `y ∈ [-1.5, 1.5]`,
//! `z ∈ [-2.25, -0.5]` metres. Field values are in microtesla.

pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod gpr;
pub mod ingest;
pub mod mapping;
pub mod sim;

pub use error::{Error, Result};

/// A point or vector in the world frame stored as plain coordinates.
pub type Point3 = [f64; 3];

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub min: Point3,
    pub max: Point3,
}

impl Bounds {
    pub const fn new(min: Point3, max: Point3) -> Self {
        Bounds { min, max }
    }

    /// The flight-lab working volume.
    pub const fn workspace() -> Self {
        Bounds {
            min: [-2.0, -1.5, -2.25],
            max: [2.0, 1.5, -0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite()) {
                return Err(error::invalid("bounds must be finite"));
            }
            if self.min[a] >= self.max[a] {
                return Err(error::invalid(format!(
                    "degenerate bounds on axis {a}: min {} >= max {}",
                    self.min[a], self.max[a]
                )));
            }
        }
        Ok(())
    }

    pub fn span(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn center(&self) -> Point3 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds::workspace()
    }
}

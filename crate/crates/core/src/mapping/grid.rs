use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{Bounds, Point3};

const LATTICE_EPS: f64 = 1e-9;
/// Height of the takeoff column above the floor, m.
const TAKEOFF_HEIGHT: f64 = 0.5;

/// Regular pseudo-observation grid over a box, plus a vertical column of
/// points above the origin from the floor up to 0.5 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spacing per axis, m.
    pub spacing: [f64; 3],
    #[serde(default)]
    pub bounds: Bounds,
    /// Number of takeoff-column points; 0 disables the column.
    #[serde(default = "default_takeoff")]
    pub takeoff_column: usize,
}

fn default_takeoff() -> usize {
    7
}

impl GridSpec {
    pub fn new(spacing: [f64; 3]) -> Self {
        GridSpec {
            spacing,
            bounds: Bounds::workspace(),
            takeoff_column: default_takeoff(),
        }
    }

    pub fn uniform(s: f64) -> Self {
        GridSpec::new([s; 3])
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for a in 0..3 {
            let s = self.spacing[a];
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!(
                    "grid spacing on axis {a} must be positive"
                )));
            }
            if s > self.bounds.span(a) + LATTICE_EPS {
                return Err(invalid(format!(
                    "grid spacing {s} m exceeds the span {} m of axis {a}",
                    self.bounds.span(a)
                )));
            }
        }
        Ok(())
    }

    /// Lattice coordinates `min + k·S` that do not pass `max`.
    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        let (lo, s) = (self.bounds.min[axis], self.spacing[axis]);
        let count = (self.bounds.span(axis) / s + LATTICE_EPS).floor() as usize + 1;
        (0..count).map(|k| lo + k as f64 * s).collect()
    }

    /// Distance between the last lattice point and the upper bound on each
    /// axis.
    pub fn uncovered(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| {
            let last = *self.axis_points(a).last().unwrap();
            (self.bounds.max[a] - last).max(0.0)
        })
    }

    pub fn len(&self) -> usize {
        (0..3).map(|a| self.axis_points(a).len()).product::<usize>() + self.takeoff_column
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grid points ordered x fastest, then y, then z, followed by the takeoff
/// column from the floor upwards.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<Point3>> {
    spec.validate()?;
    let [xs, ys, zs] = [0, 1, 2].map(|a| spec.axis_points(a));
    let mut out = Vec::with_capacity(spec.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                out.push([x, y, z]);
            }
        }
    }
    let n = spec.takeoff_column;
    for k in 0..n {
        let z = if n == 1 {
            0.0
        } else {
            -TAKEOFF_HEIGHT * k as f64 / (n - 1) as f64
        };
        out.push([0.0, 0.0, z]);
    }
    Ok(out)
}

/// The spacings of the density study: 0.2 m to 1.0 m in 0.05 m steps.
pub fn density_spacings() -> Vec<f64> {
    (0..17).map(|k| (20 + 5 * k) as f64 / 100.0).collect()
}

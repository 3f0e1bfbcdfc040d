use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{Bounds, Point3};

/// µ0/4π expressed in µT·m/(A·m²).
const MU0_OVER_4PI_UT: f64 = 0.1;
const COINCIDENCE: f64 = 1e-9;

/// Point magnetic dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    /// Metres, world frame.
    pub position: Point3,
    /// A·m².
    pub moment: Point3,
}

impl DipoleSource {
    /// Field of this dipole at `r`, µT.
    pub fn field_at(&self, r: &Point3) -> Result<Vector3<f64>> {
        let d = Vector3::from(*r) - Vector3::from(self.position);
        let dist = d.norm();
        if dist < COINCIDENCE {
            return Err(Error::Singularity {
                point: *r,
                dipole: self.position,
            });
        }
        let u = d / dist;
        let m = Vector3::from(self.moment);
        Ok((3.0 * m.dot(&u) * u - m) * (MU0_OVER_4PI_UT / (dist * dist * dist)))
    }
}

/// Uniform background plus a set of dipoles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// µT.
    pub background_field: Point3,
    #[serde(default)]
    pub dipoles: Vec<DipoleSource>,
    #[serde(default)]
    pub workspace_bounds: Bounds,
}

impl Environment {
    pub fn uniform(background_field: Point3) -> Self {
        Environment {
            background_field,
            dipoles: Vec::new(),
            workspace_bounds: Bounds::workspace(),
        }
    }

    /// Checks finiteness, the bounds, and that no dipole sits inside the
    /// workspace.
    pub fn validate(&self) -> Result<()> {
        self.workspace_bounds.validate()?;
        if !self.background_field.iter().all(|v| v.is_finite()) {
            return Err(invalid("background field must be finite"));
        }
        for (i, d) in self.dipoles.iter().enumerate() {
            if !d.position.iter().chain(&d.moment).all(|v| v.is_finite()) {
                return Err(invalid(format!("dipole {i} is not finite")));
            }
            if self.workspace_bounds.contains(&d.position, 0.0) {
                return Err(invalid(format!(
                    "dipole {i} at {:?} lies inside the workspace",
                    d.position
                )));
            }
        }
        Ok(())
    }

    pub fn field_at(&self, r: &Point3) -> Result<Vector3<f64>> {
        evaluate_field(self, r)
    }
}

/// Background plus the superposed dipole fields at `r`, µT.
pub fn evaluate_field(env: &Environment, r: &Point3) -> Result<Vector3<f64>> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(invalid("query point must be finite"));
    }
    let mut b = Vector3::from(env.background_field);
    for d in &env.dipoles {
        b += d.field_at(r)?;
    }
    Ok(b)
}

/// Background roughly matching a mid-latitude lab, µT (z down).
pub const LAB_BACKGROUND: Point3 = [20.0, -1.5, 49.0];

/// A randomised indoor environment: reinforcement-like dipoles in the
/// floor slab, the walls and the ceiling, all at least about a metre outside
/// the workspace. Field swings across the workspace are a few µT with a
/// correlation length of about a metre.
pub fn synthetic_lab(seed: u64) -> Environment {
    let bounds = Bounds::workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dipoles = Vec::new();
    let moment = |rng: &mut ChaCha8Rng, scale: f64| -> Point3 {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let v = if v.norm() < 1e-3 {
            Vector3::z()
        } else {
            v.normalize()
        };
        (v * scale * rng.gen_range(0.5..1.0)).into()
    };
    // floor slab
    for _ in 0..16 {
        let p = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-2.5..2.5),
            rng.gen_range(0.8..1.4),
        ];
        let m = moment(&mut rng, 150.0);
        dipoles.push(DipoleSource {
            position: p,
            moment: m,
        });
    }
    // walls
    for _ in 0..8 {
        let z = rng.gen_range(-3.0..0.0);
        let p = match rng.gen_range(0..4) {
            0 => [-3.4, rng.gen_range(-2.5..2.5), z],
            1 => [3.4, rng.gen_range(-2.5..2.5), z],
            2 => [rng.gen_range(-3.0..3.0), -2.9, z],
            _ => [rng.gen_range(-3.0..3.0), 2.9, z],
        };
        let m = moment(&mut rng, 150.0);
        dipoles.push(DipoleSource {
            position: p,
            moment: m,
        });
    }
    // ceiling
    for _ in 0..4 {
        let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-2.5..2.5), -3.6];
        let m = moment(&mut rng, 150.0);
        dipoles.push(DipoleSource {
            position: p,
            moment: m,
        });
    }
    Environment {
        background_field: LAB_BACKGROUND,
        dipoles,
        workspace_bounds: bounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_field_everywhere() {
        let env = Environment::uniform([20.0, 0.0, -45.0]);
        for r in [[0.0; 3], [1.0, -1.0, -2.0], [-3.0, 5.0, 7.0]] {
            assert_eq!(
                evaluate_field(&env, &r).unwrap(),
                Vector3::new(20.0, 0.0, -45.0)
            );
        }
    }

    #[test]
    fn inverse_cube_along_moment_axis() {
        let d = DipoleSource {
            position: [0.0; 3],
            moment: [0.0, 0.0, 5.0],
        };
        let near = d.field_at(&[0.0, 0.0, 1.0]).unwrap();
        let far = d.field_at(&[0.0, 0.0, 2.0]).unwrap();
        assert_relative_eq!(far.z / near.z, 0.125, epsilon = 1e-14);
        // on-axis field is 2·0.1·m/r³
        assert_relative_eq!(near.z, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn superposition_of_three_dipoles() {
        let dipoles = vec![
            DipoleSource {
                position: [3.0, 0.0, 0.0],
                moment: [1.0, 2.0, 0.0],
            },
            DipoleSource {
                position: [0.0, -3.0, 1.0],
                moment: [0.0, 0.0, -4.0],
            },
            DipoleSource {
                position: [-1.0, 2.0, 2.0],
                moment: [3.0, -1.0, 2.0],
            },
        ];
        let env = Environment {
            background_field: [1.0, 2.0, 3.0],
            dipoles,
            workspace_bounds: Bounds::workspace(),
        };
        let r = [1.0, 1.0, -1.0];
        // each term by hand: 0.1·(3(m·d)d/|d|⁵ - m/|d|³)
        let term = |p: [f64; 3], m: [f64; 3]| {
            let d = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
            let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let dn = d2.sqrt();
            let md = m[0] * d[0] + m[1] * d[1] + m[2] * d[2];
            [0, 1, 2].map(|k| 0.1 * (3.0 * md * d[k] / (d2 * d2 * dn) - m[k] / (d2 * dn)))
        };
        let mut expected = [1.0, 2.0, 3.0];
        for d in &env.dipoles {
            let t = term(d.position, d.moment);
            for k in 0..3 {
                expected[k] += t[k];
            }
        }
        let got = evaluate_field(&env, &r).unwrap();
        for k in 0..3 {
            assert_relative_eq!(got[k], expected[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn query_on_dipole_is_singular() {
        let env = Environment {
            background_field: [0.0; 3],
            dipoles: vec![DipoleSource {
                position: [0.0, 0.0, 1.0],
                moment: [1.0, 0.0, 0.0],
            }],
            workspace_bounds: Bounds::workspace(),
        };
        assert!(matches!(
            evaluate_field(&env, &[0.0, 0.0, 1.0]),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn synthetic_lab_is_valid_and_smooth_in_workspace() {
        let env = synthetic_lab(7);
        env.validate().unwrap();
        let b = env.workspace_bounds;
        let h = 1e-4;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=8 {
            for j in 0..=6 {
                for k in 0..=7 {
                    let r = [
                        b.min[0] + b.span(0) * i as f64 / 8.0,
                        b.min[1] + b.span(1) * j as f64 / 6.0,
                        b.min[2] + b.span(2) * k as f64 / 7.0,
                    ];
                    let f = evaluate_field(&env, &r).unwrap();
                    assert!(f.iter().all(|v| v.is_finite()));
                    for a in 0..3 {
                        let mut rp = r;
                        let mut rm = r;
                        rp[a] += h;
                        rm[a] -= h;
                        let g = (evaluate_field(&env, &rp).unwrap()
                            - evaluate_field(&env, &rm).unwrap())
                            / (2.0 * h);
                        assert!(g.iter().all(|v| v.is_finite()));
                    }
                    lo = lo.min(f.norm());
                    hi = hi.max(f.norm());
                }
            }
        }
        assert!(hi - lo > 2.0 && hi - lo < 60.0, "norm range {lo}..{hi}");
    }

    #[test]
    fn dipole_inside_workspace_rejected() {
        let mut env = synthetic_lab(1);
        env.dipoles.push(DipoleSource {
            position: [0.0, 0.0, -1.0],
            moment: [1.0; 3],
        });
        assert!(env.validate().is_err());
    }
}

//! Nine-parameter magnetometer error model and its two-step least-squares
//! calibration.
//!
//! The model maps the true field `B` to the measured field `M`:
//!
//! ```text
//! Mx = a·Bx + x0
//! My = b·(By·cos ρ + Bx·sin ρ) + y0
//! Mz = c·(Bx·sin λ + By·sin φ·cos λ + Bz·cos φ·cos λ) + z0
//! ```
//!
//! The lower-triangular structure makes the inverse closed form: solve `Bx`,
//! then `By`, then `Bz`.

mod fit;
pub mod lm;

pub use fit::{calibrate, CalibrationConfig, FitReport, StepReport, DEFAULT_REFERENCE_NORM};

use std::f64::consts::FRAC_PI_2;

use nalgebra::{SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Parameter vector in the order `[a, b, c, x0, y0, z0, ρ, λ, φ]`.
pub type ThetaVector = SVector<f64, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub scale_a: f64,
    pub scale_b: f64,
    pub scale_c: f64,
    /// µT
    pub bias_x0: f64,
    pub bias_y0: f64,
    pub bias_z0: f64,
    /// Non-orthogonality angles, radians.
    pub rho: f64,
    pub lambda: f64,
    pub phi: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl CalibrationParams {
    pub const fn identity() -> Self {
        CalibrationParams {
            scale_a: 1.0,
            scale_b: 1.0,
            scale_c: 1.0,
            bias_x0: 0.0,
            bias_y0: 0.0,
            bias_z0: 0.0,
            rho: 0.0,
            lambda: 0.0,
            phi: 0.0,
        }
    }

    pub fn bias_only(bias: Vector3<f64>) -> Self {
        CalibrationParams {
            bias_x0: bias.x,
            bias_y0: bias.y,
            bias_z0: bias.z,
            ..Self::identity()
        }
    }

    pub fn from_theta(theta: &ThetaVector) -> Self {
        CalibrationParams {
            scale_a: theta[0],
            scale_b: theta[1],
            scale_c: theta[2],
            bias_x0: theta[3],
            bias_y0: theta[4],
            bias_z0: theta[5],
            rho: theta[6],
            lambda: theta[7],
            phi: theta[8],
        }
    }

    pub fn theta(&self) -> ThetaVector {
        ThetaVector::from([
            self.scale_a,
            self.scale_b,
            self.scale_c,
            self.bias_x0,
            self.bias_y0,
            self.bias_z0,
            self.rho,
            self.lambda,
            self.phi,
        ])
    }

    pub fn bias(&self) -> Vector3<f64> {
        Vector3::new(self.bias_x0, self.bias_y0, self.bias_z0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta().iter().all(|v| v.is_finite()) {
            return Err(invalid("calibration parameters must be finite"));
        }
        if self.scale_a <= 0.0 || self.scale_b <= 0.0 || self.scale_c <= 0.0 {
            return Err(invalid("calibration scale factors must be positive"));
        }
        for (name, angle) in [
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("phi", self.phi),
        ] {
            if angle.abs() >= FRAC_PI_2 {
                return Err(invalid(format!(
                    "non-orthogonality angle {name} = {angle} outside (-pi/2, pi/2)"
                )));
            }
        }
        Ok(())
    }

    /// Measured field for a given true field (noise-free).
    pub fn forward_model(&self, field: &Vector3<f64>) -> Vector3<f64> {
        let (bx, by, bz) = (field.x, field.y, field.z);
        let (sr, cr) = self.rho.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(
            self.scale_a * bx + self.bias_x0,
            self.scale_b * (by * cr + bx * sr) + self.bias_y0,
            self.scale_c * (bx * sl + by * sp * cl + bz * cp * cl) + self.bias_z0,
        )
    }

    /// True field recovered from a measurement by triangular
    /// back-substitution.
    pub fn inverse_model(&self, measured: &Vector3<f64>) -> Result<Vector3<f64>> {
        let (sr, cr) = self.rho.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        if (cp * cl).abs() < 1e-12 {
            return Err(Error::SingularModel("cos(phi)·cos(lambda) vanishes".into()));
        }
        if cr.abs() < 1e-12 {
            return Err(Error::SingularModel("cos(rho) vanishes".into()));
        }
        if self.scale_a == 0.0 || self.scale_b == 0.0 || self.scale_c == 0.0 {
            return Err(Error::SingularModel("zero scale factor".into()));
        }
        let bx = (measured.x - self.bias_x0) / self.scale_a;
        let by = ((measured.y - self.bias_y0) / self.scale_b - bx * sr) / cr;
        let bz = ((measured.z - self.bias_z0) / self.scale_c - bx * sl - by * sp * cl) / (cp * cl);
        Ok(Vector3::new(bx, by, bz))
    }

    /// Recovered field and its Jacobian with respect to θ.
    pub fn inverse_with_jacobian(
        &self,
        measured: &Vector3<f64>,
    ) -> Result<(Vector3<f64>, SMatrix<f64, 3, 9>)> {
        let b = self.inverse_model(measured)?;
        let (bx, by, bz) = (b.x, b.y, b.z);
        let (a, sb, sc) = (self.scale_a, self.scale_b, self.scale_c);
        let (sr, cr) = self.rho.sin_cos();
        let (sl, cl) = self.lambda.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let p = (measured.y - self.bias_y0) / sb;
        let q = (measured.z - self.bias_z0) / sc;

        let mut j = SMatrix::<f64, 3, 9>::zeros();
        // d/d[a, x0]
        j[(0, 0)] = -bx / a;
        j[(0, 3)] = -1.0 / a;
        // By = (p - Bx sin ρ) / cos ρ
        let dp = {
            let mut v = SVector::<f64, 9>::zeros();
            v[1] = -p / sb;
            v[4] = -1.0 / sb;
            v
        };
        for k in 0..9 {
            j[(1, k)] = (dp[k] - sr * j[(0, k)]) / cr;
        }
        j[(1, 6)] = -bx + by * sr / cr;
        // Bz = (q - Bx sin λ - By sin φ cos λ) / (cos φ cos λ)
        let dq = {
            let mut v = SVector::<f64, 9>::zeros();
            v[2] = -q / sc;
            v[5] = -1.0 / sc;
            v
        };
        let denom = cp * cl;
        for k in 0..7 {
            j[(2, k)] = (dq[k] - sl * j[(0, k)] - sp * cl * j[(1, k)]) / denom;
        }
        j[(2, 7)] = (-bx * cl + by * sp * sl + bz * cp * sl) / denom;
        j[(2, 8)] = -by + bz * sp / cp;
        Ok((b, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_params() -> CalibrationParams {
        CalibrationParams {
            scale_a: 1.05,
            scale_b: 0.97,
            scale_c: 1.02,
            bias_x0: 3.2,
            bias_y0: -1.7,
            bias_z0: 0.8,
            rho: 0.02,
            lambda: -0.015,
            phi: 0.03,
        }
    }

    #[test]
    fn identity_model_is_transparent() {
        let f = Vector3::new(10.0, -5.0, 40.0);
        let id = CalibrationParams::identity();
        assert_eq!(id.forward_model(&f), f);
        assert_eq!(id.inverse_model(&f).unwrap(), f);
    }

    #[test]
    fn forward_x_axis_direct() {
        let p = CalibrationParams {
            scale_a: 2.0,
            bias_x0: 1.0,
            ..CalibrationParams::identity()
        };
        assert_eq!(p.forward_model(&Vector3::new(3.0, 0.0, 0.0)).x, 7.0);
    }

    #[test]
    fn forward_full_model_by_hand() {
        // evaluated term by term from the model equations
        let p = full_params();
        let (bx, by, bz) = (10.0_f64, -5.0_f64, 40.0_f64);
        let mx = 1.05 * bx + 3.2;
        let my = 0.97 * (by * 0.02_f64.cos() + bx * 0.02_f64.sin()) - 1.7;
        let mz = 1.02
            * (bx * (-0.015_f64).sin()
                + by * 0.03_f64.sin() * (-0.015_f64).cos()
                + bz * 0.03_f64.cos() * (-0.015_f64).cos())
            + 0.8;
        let m = p.forward_model(&Vector3::new(bx, by, bz));
        assert_relative_eq!(m, Vector3::new(mx, my, mz), epsilon = 1e-12);
        assert_relative_eq!(m.x, 13.7, epsilon = 1e-12);
    }

    #[test]
    fn inverse_round_trips_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = CalibrationParams {
                scale_a: rng.gen_range(0.5..1.5),
                scale_b: rng.gen_range(0.5..1.5),
                scale_c: rng.gen_range(0.5..1.5),
                bias_x0: rng.gen_range(-20.0..20.0),
                bias_y0: rng.gen_range(-20.0..20.0),
                bias_z0: rng.gen_range(-20.0..20.0),
                rho: rng.gen_range(-0.5..0.5),
                lambda: rng.gen_range(-0.5..0.5),
                phi: rng.gen_range(-0.5..0.5),
            };
            let f = Vector3::new(
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
            );
            let back = p.inverse_model(&p.forward_model(&f)).unwrap();
            assert!(
                (back - f).norm() <= 1e-12 * f.norm().max(1.0) * 10.0,
                "{back} vs {f}"
            );
            let m = Vector3::new(
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
            );
            let fwd = p.forward_model(&p.inverse_model(&m).unwrap());
            assert!((fwd - m).norm() <= 1e-11 * m.norm().max(1.0));
        }
    }

    #[test]
    fn singular_phi_is_rejected() {
        let p = CalibrationParams {
            phi: FRAC_PI_2,
            ..CalibrationParams::identity()
        };
        assert!(matches!(
            p.inverse_model(&Vector3::new(1.0, 2.0, 3.0)),
            Err(Error::SingularModel(_))
        ));
        assert!(p.validate().is_err());
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let p = full_params();
        let m = Vector3::new(30.0, -12.0, 41.0);
        let (_, j) = p.inverse_with_jacobian(&m).unwrap();
        let theta = p.theta();
        for k in 0..9 {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fu = CalibrationParams::from_theta(&up)
                .inverse_model(&m)
                .unwrap();
            let fd = CalibrationParams::from_theta(&dn)
                .inverse_model(&m)
                .unwrap();
            let fd_col = (fu - fd) / (2.0 * h);
            for r in 0..3 {
                let rel = (j[(r, k)] - fd_col[r]).abs() / fd_col[r].abs().max(1e-3);
                assert!(
                    rel < 1e-6,
                    "row {r} col {k}: {} vs {}",
                    j[(r, k)],
                    fd_col[r]
                );
            }
        }
    }
}

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{self, LmConfig};
use super::{CalibrationParams, ThetaVector};
use crate::error::{invalid, Error, Result};

/// Reference field strength used in the lab, µT.
pub const DEFAULT_REFERENCE_NORM: f64 = 53.1351;

const MIN_MEASUREMENTS: usize = 50;
/// Smallest spread of the measurement cloud accepted as attitude coverage,
/// as a fraction of the mean field magnitude.
const MIN_DIRECTION_SPREAD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Reference field magnitude `B_R`, µT.
    pub reference_norm: f64,
    pub max_iterations: usize,
    /// Relative cost change that ends each minimisation step.
    pub convergence_tol: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            reference_norm: DEFAULT_REFERENCE_NORM,
            max_iterations: 200,
            convergence_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Σ(ΔB)² at the end of the step, µT⁴.
    pub cost: f64,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub measurements: usize,
    pub bias_step: StepReport,
    pub full_step: StepReport,
    /// RMS of `B_R² - |g(m)|²`, µT².
    pub residual_rms: f64,
    /// RMS of `|g(m)| - B_R`, µT.
    pub norm_error_rms: f64,
    pub note: String,
}

fn check_geometry(measurements: &[Vector3<f64>]) -> Result<()> {
    if measurements.len() < MIN_MEASUREMENTS {
        return Err(invalid(format!(
            "calibration needs at least {MIN_MEASUREMENTS} measurements, got {}",
            measurements.len()
        )));
    }
    if measurements
        .iter()
        .any(|m| !m.iter().all(|v| v.is_finite()))
    {
        return Err(invalid("non-finite measurement"));
    }
    let mean = measurements.iter().sum::<Vector3<f64>>() / measurements.len() as f64;
    // spread of the measurement cloud relative to its distance from the
    // origin; a single attitude gives only sensor noise
    let mut cov = nalgebra::Matrix3::zeros();
    for m in measurements {
        let d = m - mean;
        cov += d * d.transpose();
    }
    cov /= measurements.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let spread = eig.eigenvalues.max().max(0.0).sqrt();
    let scale = measurements.iter().map(|m| m.norm()).sum::<f64>() / measurements.len() as f64;
    if spread < MIN_DIRECTION_SPREAD * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateGeometry(format!(
            "measurement cloud spread {spread:.3e} µT is too small for a field of {scale:.3} µT"
        )));
    }
    Ok(())
}

fn bias_residuals(
    measurements: &[Vector3<f64>],
    reference_sq: f64,
    bias: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = measurements.len();
    let b = Vector3::new(bias[0], bias[1], bias[2]);
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 3);
    for (i, m) in measurements.iter().enumerate() {
        let d = m - b;
        r[i] = reference_sq - d.norm_squared();
        for k in 0..3 {
            j[(i, k)] = 2.0 * d[k];
        }
    }
    (r, j)
}

fn full_residuals(
    measurements: &[Vector3<f64>],
    reference_sq: f64,
    theta: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let params = CalibrationParams::from_theta(&ThetaVector::from_iterator(theta.iter().copied()));
    params.validate().ok()?;
    let n = measurements.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 9);
    for (i, m) in measurements.iter().enumerate() {
        let (b, db) = params.inverse_with_jacobian(m).ok()?;
        r[i] = reference_sq - b.norm_squared();
        let row = -2.0 * b.transpose() * db;
        for k in 0..9 {
            j[(i, k)] = row[k];
        }
    }
    Some((r, j))
}

/// Two-step calibration: biases alone from zero, then all nine parameters
/// starting from unit scales, the step-one biases and zero angles.
pub fn calibrate(
    measurements: &[Vector3<f64>],
    config: &CalibrationConfig,
) -> Result<(CalibrationParams, FitReport)> {
    if !(config.reference_norm > 0.0 && config.reference_norm.is_finite()) {
        return Err(invalid("reference norm must be positive"));
    }
    check_geometry(measurements)?;
    let reference_sq = config.reference_norm * config.reference_norm;
    let lm_config = LmConfig {
        max_iterations: config.max_iterations,
        relative_tolerance: config.convergence_tol,
        ..LmConfig::default()
    };

    let bias_fit = lm::minimize(DVector::zeros(3), &lm_config, |b| {
        Some(bias_residuals(measurements, reference_sq, b))
    })?;
    let bias = Vector3::new(bias_fit.params[0], bias_fit.params[1], bias_fit.params[2]);

    let theta0 = CalibrationParams::bias_only(bias).theta();
    let full_fit = lm::minimize(
        DVector::from_iterator(9, theta0.iter().copied()),
        &lm_config,
        |t| full_residuals(measurements, reference_sq, t),
    )?;
    let params =
        CalibrationParams::from_theta(&ThetaVector::from_iterator(full_fit.params.iter().copied()));

    let n = measurements.len() as f64;
    let mut norm_err_sq = 0.0;
    for m in measurements {
        let b = params.inverse_model(m)?;
        norm_err_sq += (b.norm() - config.reference_norm).powi(2);
    }
    let report = FitReport {
        measurements: measurements.len(),
        residual_rms: (full_fit.cost / n).sqrt(),
        norm_error_rms: (norm_err_sq / n).sqrt(),
        bias_step: StepReport {
            cost: bias_fit.cost,
            iterations: bias_fit.iterations,
            cost_history: bias_fit.cost_history,
        },
        full_step: StepReport {
            cost: full_fit.cost,
            iterations: full_fit.iterations,
            cost_history: full_fit.cost_history,
        },
        note: String::new(),
    };
    Ok((params, report))
}

//! Scalar Gaussian-process regression with a squared-exponential kernel.
//!
//! Targets are centred on their mean before fitting and the offset is added
//! back on prediction, so the zero-mean prior only has to model the spatial
//! variation of each field component.

mod component;
mod kernel;
mod likelihood;
mod optimize;

pub use component::{GpComponent, Prediction};
pub use kernel::{kernel, kernel_with_noise, squared_distance};
pub use likelihood::{factor_with_jitter, nlml, nlml_value, NlmlProblem, NlmlResult};
pub use optimize::{
    optimize_hyperparameters, start_points, LogBounds, OptimizeConfig, OptimizeReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Kernel hyperparameters `{σ_f, l, σ_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Signal standard deviation, µT.
    pub sigma_f: f64,
    /// Length scale, metres.
    pub length_scale: f64,
    /// Measurement noise standard deviation, µT.
    pub sigma_n: f64,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, length_scale: f64, sigma_n: f64) -> Result<Self> {
        let hp = Hyperparameters {
            sigma_f,
            length_scale,
            sigma_n,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.sigma_f) && ok(self.length_scale) && ok(self.sigma_n) {
            Ok(())
        } else {
            Err(invalid(format!(
                "hyperparameters must be positive and finite: {self:?}"
            )))
        }
    }

    /// `[ln σ_f, ln l, ln σ_n]`
    pub fn to_log(&self) -> [f64; 3] {
        [self.sigma_f.ln(), self.length_scale.ln(), self.sigma_n.ln()]
    }

    pub fn from_log(log: [f64; 3]) -> Self {
        Hyperparameters {
            sigma_f: log[0].exp(),
            length_scale: log[1].exp(),
            sigma_n: log[2].exp(),
        }
    }
}

/// Where the noise variance `σ_n²` enters the covariance.
///
/// `Diagonal` is standard regression: noise on the training diagonal only.
/// `EveryEntry` adds `σ_n²` to every kernel evaluation, training and cross
/// covariances alike, which some toolchains write as part of the kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePlacement {
    #[default]
    Diagonal,
    EveryEntry,
}

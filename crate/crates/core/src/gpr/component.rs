use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par};

use super::kernel::{cross_covariance, prior_variance, training_covariance};
use super::likelihood::factor_with_jitter;
use super::{Hyperparameters, NoisePlacement};
use crate::error::{invalid, Error, Result};
use crate::Point3;

const QUERY_CHUNK: usize = 512;

/// Posterior mean and standard deviation at a set of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// One scalar GP with its inference state: the Cholesky factor of the
/// training covariance and the weights `α = K⁻¹(y - offset)`.
#[derive(Debug, Clone)]
pub struct GpComponent {
    hyperparams: Hyperparameters,
    noise: NoisePlacement,
    locations: Arc<Vec<Point3>>,
    targets: Vec<f64>,
    mean_offset: f64,
    chol: Mat<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpComponent {
    /// Builds the inference state with the target mean as prior mean.
    pub fn fit(
        locations: Arc<Vec<Point3>>,
        targets: Vec<f64>,
        hyperparams: Hyperparameters,
        noise: NoisePlacement,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Empty("training targets"));
        }
        let offset = targets.iter().sum::<f64>() / targets.len() as f64;
        Self::with_offset(locations, targets, hyperparams, noise, offset)
    }

    /// Builds the inference state around a given prior mean.
    pub fn with_offset(
        locations: Arc<Vec<Point3>>,
        targets: Vec<f64>,
        hyperparams: Hyperparameters,
        noise: NoisePlacement,
        mean_offset: f64,
    ) -> Result<Self> {
        hyperparams.validate()?;
        if locations.len() != targets.len() {
            return Err(invalid(format!(
                "{} locations but {} targets",
                locations.len(),
                targets.len()
            )));
        }
        if locations.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if !mean_offset.is_finite()
            || !targets.iter().all(|v| v.is_finite())
            || !locations.iter().flatten().all(|v| v.is_finite())
        {
            return Err(invalid("training data must be finite"));
        }
        let n = targets.len();
        let k = training_covariance(&hyperparams, noise, &locations);
        let (llt, jitter) = factor_with_jitter(&k, hyperparams.sigma_f * hyperparams.sigma_f)?;
        let mut rhs = Mat::from_fn(n, 1, |i, _| targets[i] - mean_offset);
        llt.solve_in_place(rhs.as_mut());
        let alpha = (0..n).map(|i| rhs[(i, 0)]).collect();
        let chol = llt.L().to_owned();
        Ok(GpComponent {
            hyperparams,
            noise,
            locations,
            targets,
            mean_offset,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparameters {
        &self.hyperparams
    }

    pub fn noise_placement(&self) -> NoisePlacement {
        self.noise
    }

    pub fn locations(&self) -> &Arc<Vec<Point3>> {
        &self.locations
    }

    /// Training targets in absolute units.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Diagonal jitter added to make the training covariance factorable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Posterior mean and SD of the latent field.
    pub fn predict(&self, query: &[Point3]) -> Prediction {
        self.predict_inner(query, 0.0)
    }

    /// Posterior mean and SD of a new noisy measurement, i.e. with `σ_n²`
    /// added to the latent variance.
    pub fn predict_observed(&self, query: &[Point3]) -> Prediction {
        self.predict_inner(query, self.hyperparams.sigma_n * self.hyperparams.sigma_n)
    }

    fn predict_inner(&self, query: &[Point3], extra_var: f64) -> Prediction {
        let m = query.len();
        let prior = prior_variance(&self.hyperparams, self.noise);
        let mut mean = Vec::with_capacity(m);
        let mut sd = Vec::with_capacity(m);
        for chunk in query.chunks(QUERY_CHUNK) {
            let mut kq = cross_covariance(&self.hyperparams, self.noise, &self.locations, chunk);
            for j in 0..chunk.len() {
                let mu: f64 = (0..self.alpha.len())
                    .map(|i| kq[(i, j)] * self.alpha[i])
                    .sum();
                mean.push(mu + self.mean_offset);
            }
            solve_lower_triangular_in_place(self.chol.as_ref(), kq.as_mut(), Par::Seq);
            for j in 0..chunk.len() {
                let explained: f64 = kq.col(j).iter().map(|v| v * v).sum();
                sd.push(((prior - explained).max(0.0) + extra_var).sqrt());
            }
        }
        Prediction { mean, sd }
    }

    /// Residual `‖K α - (y - offset)‖ / ‖y - offset‖` of the stored solve.
    pub fn solve_residual(&self) -> f64 {
        let k = training_covariance(&self.hyperparams, self.noise, &self.locations);
        let n = self.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let ka: f64 = (0..n).map(|j| k[(i, j)] * self.alpha[j]).sum::<f64>()
                + self.jitter * self.alpha[i];
            let yi = self.targets[i] - self.mean_offset;
            num += (ka - yi).powi(2);
            den += yi * yi;
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

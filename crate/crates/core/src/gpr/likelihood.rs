use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, Side};

use super::kernel::squared_distance;
use super::{Hyperparameters, NoisePlacement};
use crate::error::{invalid, Error, Result};
use crate::Point3;

const JITTER_START: f64 = 1e-10;
const JITTER_CAP: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Cholesky factor of `k`, retrying with diagonal jitter `1e-10·scale`,
/// escalating tenfold up to `1e-4·scale`. Returns the factor and the jitter
/// that was needed.
pub fn factor_with_jitter(k: &Mat<f64>, scale: f64) -> Result<(Llt<f64>, f64)> {
    if let Ok(llt) = k.llt(Side::Lower) {
        return Ok((llt, 0.0));
    }
    let mut jitter = JITTER_START * scale;
    let cap = JITTER_CAP * scale * (1.0 + 1e-9);
    while jitter <= cap {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Ok(llt) = kj.llt(Side::Lower) {
            return Ok((llt, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: jitter / 10.0,
    })
}

/// Training data prepared for repeated likelihood evaluations: centred
/// targets and the pairwise squared-distance matrix.
#[derive(Debug, Clone)]
pub struct NlmlProblem {
    sqdist: Mat<f64>,
    centered: Vec<f64>,
    mean_offset: f64,
    noise: NoisePlacement,
}

impl NlmlProblem {
    pub fn new(locations: &[Point3], targets: &[f64], noise: NoisePlacement) -> Result<Self> {
        if locations.len() != targets.len() {
            return Err(invalid("locations and targets differ in length"));
        }
        if locations.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if !targets.iter().all(|v| v.is_finite())
            || !locations.iter().flatten().all(|v| v.is_finite())
        {
            return Err(invalid("training data must be finite"));
        }
        let n = targets.len();
        let mean_offset = targets.iter().sum::<f64>() / n as f64;
        let centered = targets.iter().map(|y| y - mean_offset).collect();
        let sqdist = Mat::from_fn(n, n, |i, j| squared_distance(&locations[i], &locations[j]));
        Ok(NlmlProblem {
            sqdist,
            centered,
            mean_offset,
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.centered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centered.is_empty()
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn centered_targets(&self) -> &[f64] {
        &self.centered
    }

    /// Sample standard deviation of the targets.
    pub fn target_sd(&self) -> f64 {
        let n = self.centered.len();
        if n < 2 {
            return 0.0;
        }
        (self.centered.iter().map(|y| y * y).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    fn covariance(&self, hp: &Hyperparameters) -> Mat<f64> {
        let n = self.len();
        let sf2 = hp.sigma_f * hp.sigma_f;
        let sn2 = hp.sigma_n * hp.sigma_n;
        let inv2l2 = 1.0 / (2.0 * hp.length_scale * hp.length_scale);
        let offset = if self.noise == NoisePlacement::EveryEntry {
            sn2
        } else {
            0.0
        };
        let mut k = Mat::from_fn(n, n, |i, j| {
            sf2 * (-self.sqdist[(i, j)] * inv2l2).exp() + offset
        });
        if self.noise == NoisePlacement::Diagonal {
            for i in 0..n {
                k[(i, i)] += sn2;
            }
        }
        k
    }

    fn factor(&self, hp: &Hyperparameters) -> Result<(Mat<f64>, Llt<f64>, f64, Vec<f64>, f64)> {
        hp.validate()?;
        let k = self.covariance(hp);
        let (llt, jitter) = factor_with_jitter(&k, hp.sigma_f * hp.sigma_f)?;
        let n = self.len();
        let mut alpha = Mat::from_fn(n, 1, |i, _| self.centered[i]);
        llt.solve_in_place(alpha.as_mut());
        let alpha: Vec<f64> = (0..n).map(|i| alpha[(i, 0)]).collect();
        let l = llt.L();
        let half_logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let fit: f64 = self.centered.iter().zip(&alpha).map(|(y, a)| y * a).sum();
        let value = 0.5 * fit + half_logdet + 0.5 * n as f64 * LN_2PI;
        Ok((k, llt, jitter, alpha, value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmlResult {
    pub value: f64,
    /// Derivatives with respect to `[ln σ_f, ln l, ln σ_n]`.
    pub gradient: [f64; 3],
    pub jitter: f64,
}

/// Negative log marginal likelihood only.
pub fn nlml_value(hp: &Hyperparameters, problem: &NlmlProblem) -> Result<f64> {
    problem.factor(hp).map(|(_, _, _, _, v)| v)
}

/// Negative log marginal likelihood of the centred targets and its gradient
/// in log-parameter space.
pub fn nlml(hp: &Hyperparameters, problem: &NlmlProblem) -> Result<NlmlResult> {
    let (k, llt, jitter, alpha, value) = problem.factor(hp)?;
    let w = llt.inverse();
    let n = problem.len();
    let sn2 = hp.sigma_n * hp.sigma_n;
    let inv_l2 = 1.0 / (hp.length_scale * hp.length_scale);
    let every = problem.noise == NoisePlacement::EveryEntry;
    let (mut g_f, mut g_l, mut g_n) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let aj = alpha[j];
        for i in 0..n {
            let wij = w[(i, j)] - alpha[i] * aj;
            let mut kf = k[(i, j)];
            if every {
                kf -= sn2;
                g_n += wij;
            }
            if i == j && !every {
                kf -= sn2;
                g_n += wij;
            }
            g_f += wij * kf;
            g_l += wij * kf * problem.sqdist[(i, j)];
        }
    }
    Ok(NlmlResult {
        value,
        gradient: [g_f, 0.5 * g_l * inv_l2, g_n * sn2],
        jitter,
    })
}

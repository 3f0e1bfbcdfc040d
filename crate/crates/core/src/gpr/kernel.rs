use faer::Mat;

use super::{Hyperparameters, NoisePlacement};
use crate::Point3;

#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Squared-exponential covariance `σ_f² exp(-|r - r'|² / 2l²)`.
#[inline]
pub fn kernel(hp: &Hyperparameters, r: &Point3, r2: &Point3) -> f64 {
    hp.sigma_f
        * hp.sigma_f
        * (-squared_distance(r, r2) / (2.0 * hp.length_scale * hp.length_scale)).exp()
}

/// Covariance between two distinct evaluations under a noise placement.
#[inline]
pub fn kernel_with_noise(
    hp: &Hyperparameters,
    noise: NoisePlacement,
    r: &Point3,
    r2: &Point3,
) -> f64 {
    match noise {
        NoisePlacement::Diagonal => kernel(hp, r, r2),
        NoisePlacement::EveryEntry => kernel(hp, r, r2) + hp.sigma_n * hp.sigma_n,
    }
}

/// Training covariance including noise.
pub(crate) fn training_covariance(
    hp: &Hyperparameters,
    noise: NoisePlacement,
    x: &[Point3],
) -> Mat<f64> {
    let n = x.len();
    let noise_var = hp.sigma_n * hp.sigma_n;
    let mut k = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kernel_with_noise(hp, noise, &x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        if noise == NoisePlacement::Diagonal {
            k[(j, j)] += noise_var;
        }
    }
    k
}

/// Cross covariance `K(X, Q)` as an `n × m` matrix.
pub(crate) fn cross_covariance(
    hp: &Hyperparameters,
    noise: NoisePlacement,
    x: &[Point3],
    q: &[Point3],
) -> Mat<f64> {
    Mat::from_fn(x.len(), q.len(), |i, j| {
        kernel_with_noise(hp, noise, &x[i], &q[j])
    })
}

/// Prior variance at any single point.
pub(crate) fn prior_variance(hp: &Hyperparameters, noise: NoisePlacement) -> f64 {
    match noise {
        NoisePlacement::Diagonal => hp.sigma_f * hp.sigma_f,
        NoisePlacement::EveryEntry => hp.sigma_f * hp.sigma_f + hp.sigma_n * hp.sigma_n,
    }
}

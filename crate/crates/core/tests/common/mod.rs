//! Independent dense-algebra oracle shared by the integration tests.
#![allow(dead_code)]

use magmap_core::gpr::Hyperparameters;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn se(hp: &Hyperparameters, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d2: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
    hp.sigma_f.powi(2) * (-d2 / (2.0 * hp.length_scale.powi(2))).exp()
}

/// Posterior mean and SD by direct solves against `K + σ_n² I`, with the
/// target mean as prior mean.
pub fn oracle_predict(
    x: &[[f64; 3]],
    y: &[f64],
    hp: &Hyperparameters,
    q: &[[f64; 3]],
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let offset = y.iter().sum::<f64>() / n as f64;
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| se(hp, &x[i], &x[j]) + if i == j { hp.sigma_n.powi(2) } else { 0.0 })
                .collect()
        })
        .collect();
    let alpha = dense_solve(k.clone(), y.iter().map(|v| v - offset).collect());
    let mut mean = Vec::new();
    let mut sd = Vec::new();
    for p in q {
        let ks: Vec<f64> = x.iter().map(|xi| se(hp, xi, p)).collect();
        mean.push(offset + ks.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>());
        let v = dense_solve(k.clone(), ks.clone());
        let var = hp.sigma_f.powi(2) - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        sd.push(var.max(0.0).sqrt());
    }
    (mean, sd)
}

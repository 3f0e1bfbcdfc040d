//! Levenberg–Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub initial_damping: f64,
    /// Damping multiplier on a rejected step; divides on acceptance.
    pub damping_factor: f64,
    pub max_iterations: usize,
    /// Converged once an accepted step changes the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            max_iterations: 200,
            relative_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after the initial evaluation and after every accepted step.
    pub cost_history: Vec<f64>,
}

const MAX_DAMPING: f64 = 1e20;

/// Minimises `Σ r_i(x)²`.
///
/// `eval` returns the residuals and their Jacobian, or `None` where the model
/// is undefined; such trial points are treated as rejected steps.
pub fn minimize<F>(x0: DVector<f64>, config: &LmConfig, mut eval: F) -> Result<LmOutcome>
where
    F: FnMut(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let (mut r, mut j) = eval(&x0).ok_or_else(|| {
        Error::InvalidArgument("initial point is outside the model domain".into())
    })?;
    let mut x = x0;
    let mut cost = r.norm_squared();
    let mut history = vec![cost];
    let mut damping = config.initial_damping;

    for iteration in 1..=config.max_iterations {
        if cost == 0.0 {
            return Ok(LmOutcome {
                params: x,
                cost,
                iterations: iteration - 1,
                cost_history: history,
            });
        }
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let scale_floor = jtj.diagonal().max() * 1e-12;
        loop {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += damping * jtj[(k, k)].max(scale_floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&grad)));
            let candidate = step.as_ref().and_then(|s| {
                let trial = &x + s;
                eval(&trial).map(|(tr, tj)| (trial, tr, tj))
            });
            match candidate {
                Some((trial, tr, tj)) if tr.norm_squared() <= cost => {
                    let new_cost = tr.norm_squared();
                    let rel = (cost - new_cost) / cost;
                    x = trial;
                    r = tr;
                    j = tj;
                    cost = new_cost;
                    history.push(cost);
                    damping = (damping / config.damping_factor).max(1e-15);
                    if rel < config.relative_tolerance {
                        return Ok(LmOutcome {
                            params: x,
                            cost,
                            iterations: iteration,
                            cost_history: history,
                        });
                    }
                    break;
                }
                _ => {
                    damping *= config.damping_factor;
                    if damping > MAX_DAMPING {
                        // no descent direction left: stationary point
                        return Ok(LmOutcome {
                            params: x,
                            cost,
                            iterations: iteration,
                            cost_history: history,
                        });
                    }
                }
            }
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iterations,
    })
}

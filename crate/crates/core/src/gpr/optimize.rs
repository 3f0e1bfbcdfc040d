//! Multi-start, box-constrained BFGS over log-hyperparameters.

use serde::{Deserialize, Serialize};

use super::likelihood::{nlml, nlml_value, NlmlProblem};
use super::Hyperparameters;
use crate::error::{Error, Result};

/// Box on `[ln σ_f, ln l, ln σ_n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for LogBounds {
    fn default() -> Self {
        LogBounds {
            lower: [1e-4f64.ln(), 1e-2f64.ln(), 1e-4f64.ln()],
            upper: [1e4f64.ln(), 1e3f64.ln(), 1e4f64.ln()],
        }
    }
}

impl LogBounds {
    fn clamp(&self, x: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|k| x[k].clamp(self.lower[k], self.upper[k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub max_iterations: usize,
    pub bounds: LogBounds,
    /// Stop when an iteration improves the objective by less than this
    /// fraction.
    pub relative_tolerance: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            max_iterations: 100,
            bounds: LogBounds::default(),
            relative_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub hyperparameters: Hyperparameters,
    pub nlml: f64,
    /// Objective at each start, in start order.
    pub start_nlml: Vec<Option<f64>>,
    /// Objective reached from each start.
    pub final_nlml: Vec<Option<f64>>,
    pub evaluations: usize,
}

/// The fixed start grid: `l ∈ {0.3, 1.0}` m crossed with
/// `σ_f ∈ {s, 2s}`, `σ_n = 0.1 s`, where `s` is the target sample SD.
pub fn start_points(target_sd: f64, bounds: &LogBounds) -> Vec<[f64; 3]> {
    let s = target_sd.max(1e-3);
    let mut out = Vec::with_capacity(4);
    for l in [0.3, 1.0] {
        for sf in [s, 2.0 * s] {
            out.push(bounds.clamp([sf.ln(), f64::ln(l), (0.1 * s).ln()]));
        }
    }
    out
}

struct Evaluator<'a> {
    problem: &'a NlmlProblem,
    count: usize,
}

impl Evaluator<'_> {
    fn value(&mut self, x: &[f64; 3]) -> f64 {
        self.count += 1;
        nlml_value(&Hyperparameters::from_log(*x), self.problem).unwrap_or(f64::INFINITY)
    }

    fn value_grad(&mut self, x: &[f64; 3]) -> Option<(f64, [f64; 3])> {
        self.count += 1;
        nlml(&Hyperparameters::from_log(*x), self.problem)
            .ok()
            .map(|r| (r.value, r.gradient))
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
/// Largest move per iteration in any log-parameter.
const MAX_STEP: f64 = 2.0;

fn bfgs(
    eval: &mut Evaluator<'_>,
    x0: [f64; 3],
    config: &OptimizeConfig,
) -> Option<(f64, [f64; 3])> {
    let bounds = &config.bounds;
    let mut x = bounds.clamp(x0);
    let (mut f, mut g) = eval.value_grad(&x)?;
    let mut h = IDENTITY;
    let gtol = 1e-6 * (eval.problem.len() as f64).max(1.0);

    for _ in 0..config.max_iterations {
        let active: [bool; 3] = [0, 1, 2].map(|k| {
            (x[k] <= bounds.lower[k] && g[k] > 0.0) || (x[k] >= bounds.upper[k] && g[k] < 0.0)
        });
        let pg: [f64; 3] = [0, 1, 2].map(|k| if active[k] { 0.0 } else { g[k] });
        if pg.iter().all(|v| v.abs() <= gtol) {
            break;
        }
        let mut d = [0, 1, 2].map(|r| {
            if active[r] {
                0.0
            } else {
                -(0..3)
                    .filter(|&c| !active[c])
                    .map(|c| h[r][c] * g[c])
                    .sum::<f64>()
            }
        });
        if dot(&d, &pg) >= 0.0 {
            h = IDENTITY;
            d = pg.map(|v| -v);
        }
        let longest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if longest > MAX_STEP {
            d = d.map(|v| v * MAX_STEP / longest);
        }

        // backtracking along the projected path
        let mut t = 1.0;
        let mut accepted = None;
        for attempt in 0..40 {
            let trial = bounds.clamp([0, 1, 2].map(|k| x[k] + t * d[k]));
            let step = [0, 1, 2].map(|k| trial[k] - x[k]);
            if step.iter().all(|s| s.abs() < 1e-14) {
                break;
            }
            let armijo = f + 1e-4 * dot(&g, &step);
            if attempt == 0 {
                if let Some((ft, gt)) = eval.value_grad(&trial) {
                    if ft <= armijo {
                        accepted = Some((trial, ft, Some(gt)));
                        break;
                    }
                }
            } else {
                let ft = eval.value(&trial);
                if ft <= armijo {
                    accepted = Some((trial, ft, None));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if h != IDENTITY {
                h = IDENTITY;
                continue;
            }
            break;
        };
        let gn = match gn {
            Some(gn) => gn,
            None => eval.value_grad(&xn)?.1,
        };
        let s = [0, 1, 2].map(|k| xn[k] - x[k]);
        let y = [0, 1, 2].map(|k| gn[k] - g[k]);
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            let hy = [0, 1, 2].map(|r| dot(&h[r], &y));
            let yhy = dot(&y, &hy);
            let mut hn = h;
            for r in 0..3 {
                for c in 0..3 {
                    hn[r][c] +=
                        (sy + yhy) * s[r] * s[c] / (sy * sy) - (hy[r] * s[c] + s[r] * hy[c]) / sy;
                }
            }
            h = hn;
        }
        let improvement = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if improvement <= config.relative_tolerance * f.abs().max(1.0) {
            break;
        }
    }
    Some((f, x))
}

/// Minimises the negative log marginal likelihood from every start point and
/// keeps the best result.
pub fn optimize_hyperparameters(
    problem: &NlmlProblem,
    config: &OptimizeConfig,
) -> Result<OptimizeReport> {
    if problem.len() < 2 {
        return Err(Error::InvalidArgument(
            "hyperparameter optimization needs at least 2 observations".into(),
        ));
    }
    let mut eval = Evaluator { problem, count: 0 };
    let mut best: Option<(f64, [f64; 3])> = None;
    let mut start_nlml = Vec::new();
    let mut final_nlml = Vec::new();
    for start in start_points(problem.target_sd(), &config.bounds) {
        let f0 = eval.value(&start);
        start_nlml.push(f0.is_finite().then_some(f0));
        let result = bfgs(&mut eval, start, config);
        final_nlml.push(result.map(|r| r.0));
        if let Some((f, x)) = result {
            if best.map_or(true, |(bf, _)| f < bf) {
                best = Some((f, x));
            }
        }
    }
    let (f, x) = best.ok_or(Error::OptimizationFailed)?;
    Ok(OptimizeReport {
        hyperparameters: Hyperparameters::from_log(x),
        nlml: f,
        start_nlml,
        final_nlml,
        evaluations: eval.count,
    })
}

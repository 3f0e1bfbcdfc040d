//! Map evaluation: RMSE and 2σ capture, the consistency verdict with
//! segment analysis, the grid-density sweep and the vector-versus-norm map
//! comparison.

mod compare;
mod density;
mod tables;

pub use compare::{compare_norm_maps, NormComparison};
pub use density::{
    density_sweep, density_sweep_specs, DensityRow, DensityStudyResult, PATHOLOGY_GAP,
};
pub use tables::{comparison_table, density_table, validation_table, write_residuals_csv};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ingest::ObservationSet;
use crate::mapping::VectorFieldMap;
use crate::Point3;

/// Residuals larger than this are listed individually, µT.
pub const OUTLIER_THRESHOLD: f64 = 2.0;
pub const DEFAULT_CONSISTENCY_THRESHOLD: f64 = 0.96;
pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_STRIDE: usize = 50;

/// Which predictive SD the 2σ test uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Uncertainty {
    /// SD of the latent field only.
    Latent,
    /// SD of a new measurement: latent variance plus `σ_n²`.
    #[default]
    Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub index: usize,
    pub t: f64,
    /// Signed residual, µT.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sources: Vec<String>,
    pub points: usize,
    /// Per-component RMSE, µT.
    pub rmse: [f64; 3],
    /// `sqrt(Σ rmse²)`, µT.
    pub norm_rmse: f64,
    /// Fraction of points with `|residual| ≤ 2·sd`, per component.
    pub capture: [f64; 3],
    pub uncertainty: Uncertainty,
    pub timestamps: Vec<f64>,
    /// Predicted mean minus measurement.
    pub residuals: Vec<Point3>,
    pub sd: Vec<Point3>,
    pub outliers: [Vec<Outlier>; 3],
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Fraction of `|r| ≤ 2·sd`.
pub fn capture_fraction(residuals: &[f64], sd: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 1.0;
    }
    let inside = residuals
        .iter()
        .zip(sd)
        .filter(|(r, s)| r.abs() <= 2.0 * **s)
        .count();
    inside as f64 / residuals.len() as f64
}

impl ValidationReport {
    /// Builds the report from residuals and SDs.
    pub fn from_residuals(
        sources: Vec<String>,
        timestamps: Vec<f64>,
        residuals: Vec<Point3>,
        sd: Vec<Point3>,
        uncertainty: Uncertainty,
    ) -> Result<Self> {
        let n = residuals.len();
        if n == 0 {
            return Err(Error::Empty("validation set"));
        }
        if sd.len() != n || timestamps.len() != n {
            return Err(invalid("residual, sd and timestamp counts differ"));
        }
        let rmse = [0, 1, 2].map(|k| rmse(residuals.iter().map(|r| r[k])));
        let norm_rmse = (rmse[0] * rmse[0] + rmse[1] * rmse[1] + rmse[2] * rmse[2]).sqrt();
        let capture = [0, 1, 2].map(|k| {
            let r: Vec<f64> = residuals.iter().map(|v| v[k]).collect();
            let s: Vec<f64> = sd.iter().map(|v| v[k]).collect();
            capture_fraction(&r, &s)
        });
        let outliers = [0, 1, 2].map(|k| {
            residuals
                .iter()
                .enumerate()
                .filter(|(_, r)| r[k].abs() > OUTLIER_THRESHOLD)
                .map(|(i, r)| Outlier {
                    index: i,
                    t: timestamps[i],
                    residual: r[k],
                })
                .collect()
        });
        Ok(ValidationReport {
            sources,
            points: n,
            rmse,
            norm_rmse,
            capture,
            uncertainty,
            timestamps,
            residuals,
            sd,
            outliers,
        })
    }

    /// Label for tables: the joined source ids.
    pub fn label(&self) -> String {
        if self.sources.is_empty() {
            "-".into()
        } else {
            self.sources.join("+")
        }
    }
}

/// Residuals of `map` against `obs` with observation-level SDs.
pub fn validate(map: &VectorFieldMap, obs: &ObservationSet) -> Result<ValidationReport> {
    validate_with(map, obs, Uncertainty::Observation)
}

pub fn validate_with(
    map: &VectorFieldMap,
    obs: &ObservationSet,
    uncertainty: Uncertainty,
) -> Result<ValidationReport> {
    if obs.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    obs.validate()?;
    let pred = match uncertainty {
        Uncertainty::Latent => map.predict_vector(&obs.locations),
        Uncertainty::Observation => map.predict_observed(&obs.locations),
    };
    let residuals = pred
        .mean
        .iter()
        .zip(&obs.measurements)
        .map(|(m, y)| [m[0] - y[0], m[1] - y[1], m[2] - y[2]])
        .collect();
    ValidationReport::from_residuals(
        obs.sources.clone(),
        obs.timestamps.clone(),
        residuals,
        pred.sd,
        uncertainty,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

impl Verdict {
    fn from_capture(capture: &[f64; 3], threshold: f64) -> Self {
        if capture.iter().all(|c| *c >= threshold) {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// First row.
    pub start: usize,
    /// One past the last row.
    pub end: usize,
    pub capture: [f64; 3],
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub sources: Vec<String>,
    pub threshold: f64,
    pub window: usize,
    pub stride: usize,
    pub capture: [f64; 3],
    pub verdict: Verdict,
    pub segments: Vec<Segment>,
}

impl ConsistencyReport {
    pub fn failing_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| s.verdict == Verdict::Inconsistent)
    }

    /// Whole flight inconsistent, or at least one window failing.
    pub fn flagged(&self) -> bool {
        self.verdict == Verdict::Inconsistent || self.failing_segments().next().is_some()
    }
}

/// Whole-flight and windowed 2σ verdicts from an existing report. Windows
/// start every `stride` rows; a final window aligned to the end covers any
/// remainder.
pub fn consistency_from_report(
    report: &ValidationReport,
    threshold: f64,
    window: usize,
    stride: usize,
) -> Result<ConsistencyReport> {
    let n = report.points;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid("threshold must lie in (0, 1]"));
    }
    if window == 0 || stride == 0 {
        return Err(invalid("window and stride must be positive"));
    }
    if window > n {
        return Err(invalid(format!(
            "window of {window} exceeds the {n} observations"
        )));
    }
    let segment = |start: usize| {
        let end = start + window;
        let capture = [0, 1, 2].map(|k| {
            let r: Vec<f64> = report.residuals[start..end].iter().map(|v| v[k]).collect();
            let s: Vec<f64> = report.sd[start..end].iter().map(|v| v[k]).collect();
            capture_fraction(&r, &s)
        });
        Segment {
            start,
            end,
            capture,
            verdict: Verdict::from_capture(&capture, threshold),
        }
    };
    let mut segments: Vec<Segment> = (0..=n - window).step_by(stride).map(segment).collect();
    if segments.last().is_some_and(|s| s.end < n) {
        segments.push(segment(n - window));
    }
    Ok(ConsistencyReport {
        sources: report.sources.clone(),
        threshold,
        window,
        stride,
        capture: report.capture,
        verdict: Verdict::from_capture(&report.capture, threshold),
        segments,
    })
}

pub fn consistency_check(
    map: &VectorFieldMap,
    obs: &ObservationSet,
    threshold: f64,
    window: usize,
) -> Result<ConsistencyReport> {
    if window > obs.len() {
        return Err(invalid(format!(
            "window of {window} exceeds the {} observations",
            obs.len()
        )));
    }
    consistency_from_report(&validate(map, obs)?, threshold, window, DEFAULT_STRIDE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(residuals: Vec<Point3>, sd: Vec<Point3>) -> ValidationReport {
        let t = (0..residuals.len()).map(|i| i as f64).collect();
        ValidationReport::from_residuals(
            vec!["t1_01".into()],
            t,
            residuals,
            sd,
            Uncertainty::Observation,
        )
        .unwrap()
    }

    #[test]
    fn rmse_arithmetic() {
        let r = report(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], vec![[1.0; 3]; 2]);
        assert_eq!(r.rmse, [1.0, 0.0, 0.0]);
        assert_eq!(r.norm_rmse, 1.0);
        assert_eq!(r.capture, [1.0; 3]);
    }

    #[test]
    fn outliers_listed_with_sign() {
        let r = report(vec![[2.5, 0.0, -3.0], [0.1, 1.9, 0.0]], vec![[1.0; 3]; 2]);
        assert_eq!(
            r.outliers[0],
            vec![Outlier {
                index: 0,
                t: 0.0,
                residual: 2.5
            }]
        );
        assert!(r.outliers[1].is_empty());
        assert_eq!(r.outliers[2][0].residual, -3.0);
    }

    #[test]
    fn zero_residuals_are_consistent() {
        let r = report(vec![[0.0; 3]; 300], vec![[0.1; 3]; 300]);
        let c = consistency_from_report(&r, 0.96, 200, 50).unwrap();
        assert_eq!(c.verdict, Verdict::Consistent);
        assert!(!c.flagged());
        // windows at 0, 50, 100 and the tail at 100 is already aligned
        assert_eq!(
            c.segments.iter().map(|s| s.start).collect::<Vec<_>>(),
            vec![0, 50, 100]
        );
    }

    #[test]
    fn tail_window_added() {
        let r = report(vec![[0.0; 3]; 260], vec![[0.1; 3]; 260]);
        let c = consistency_from_report(&r, 0.96, 200, 50).unwrap();
        assert_eq!(
            c.segments.iter().map(|s| s.start).collect::<Vec<_>>(),
            vec![0, 50, 60]
        );
    }

    #[test]
    fn late_shift_fails_a_segment() {
        let mut res = vec![[0.0; 3]; 600];
        for r in res.iter_mut().skip(450) {
            r[2] = 1.0;
        }
        let r = report(res, vec![[0.2; 3]; 600]);
        let c = consistency_from_report(&r, 0.96, 200, 50).unwrap();
        assert_eq!(c.verdict, Verdict::Inconsistent);
        assert!(c.failing_segments().all(|s| s.end > 450));
        assert!(c.segments[0].verdict == Verdict::Consistent);
    }

    #[test]
    fn window_larger_than_set_rejected() {
        let r = report(vec![[0.0; 3]; 10], vec![[0.1; 3]; 10]);
        assert!(consistency_from_report(&r, 0.96, 11, 5).is_err());
    }

    fn rows() -> impl Strategy<Value = (Vec<Point3>, Vec<Point3>)> {
        (1usize..80).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), n),
                prop::collection::vec(prop::array::uniform3(0.01f64..2.0), n),
            )
        })
    }

    proptest! {
        #[test]
        fn norm_rmse_identity((res, sd) in rows()) {
            let r = report(res, sd);
            let sum: f64 = r.rmse.iter().map(|v| v * v).sum();
            prop_assert!((r.norm_rmse * r.norm_rmse - sum).abs() <= 1e-12 * sum.max(1.0));
        }

        #[test]
        fn inflating_sd_never_lowers_capture((res, sd) in rows(), factor in 1.0f64..5.0) {
            let a = report(res.clone(), sd.clone());
            let b = report(res, sd.iter().map(|s| s.map(|v| v * factor)).collect());
            for k in 0..3 {
                prop_assert!(b.capture[k] >= a.capture[k]);
            }
        }

        #[test]
        fn verdict_is_threshold_monotone((res, sd) in rows(), lower in 0.01f64..0.96) {
            let r = report(res, sd);
            let n = r.points;
            let hi = consistency_from_report(&r, 0.96, n, 1).unwrap();
            let lo = consistency_from_report(&r, lower, n, 1).unwrap();
            if hi.verdict == Verdict::Consistent {
                prop_assert_eq!(lo.verdict, Verdict::Consistent);
            }
        }
    }
}

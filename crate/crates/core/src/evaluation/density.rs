use serde::{Deserialize, Serialize};

use super::{validate, ValidationReport};
use crate::error::{Error, Result};
use crate::ingest::ObservationSet;
use crate::mapping::{compress, GridSpec, VectorFieldMap};

/// A grid leaving an uncovered slab at least this thick (m) at the top of
/// any axis is marked as a coverage pathology.
pub const PATHOLOGY_GAP: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub spacing: [f64; 3],
    pub n1: usize,
    /// Norm RMSE per validation set, µT.
    pub norm_rmse: Vec<f64>,
    /// Uncovered slab at the upper end of each axis, m.
    pub uncovered: [f64; 3],
    pub pathological: bool,
    #[serde(skip)]
    pub reports: Vec<ValidationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStudyResult {
    /// Labels of the validation sets, in column order.
    pub flights: Vec<String>,
    pub rows: Vec<DensityRow>,
}

impl DensityStudyResult {
    pub fn row(&self, spacing: f64) -> Option<&DensityRow> {
        self.rows
            .iter()
            .find(|r| (r.spacing[0] - spacing).abs() < 1e-12)
    }
}

/// Compresses `inter` onto each uniform spacing (workspace bounds, 7-point
/// takeoff column) and validates every compromise map.
pub fn density_sweep(
    inter: &VectorFieldMap,
    spacings: &[f64],
    validation: &[ObservationSet],
) -> Result<DensityStudyResult> {
    let specs: Vec<GridSpec> = spacings.iter().map(|&s| GridSpec::uniform(s)).collect();
    density_sweep_specs(inter, &specs, validation)
}

pub fn density_sweep_specs(
    inter: &VectorFieldMap,
    specs: &[GridSpec],
    validation: &[ObservationSet],
) -> Result<DensityStudyResult> {
    if specs.is_empty() {
        return Err(Error::Empty("spacing list"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation sets"));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let map = compress(inter, spec)?;
        let reports = validation
            .iter()
            .map(|obs| validate(&map, obs))
            .collect::<Result<Vec<_>>>()?;
        let uncovered = spec.uncovered();
        rows.push(DensityRow {
            spacing: spec.spacing,
            n1: map.len(),
            norm_rmse: reports.iter().map(|r| r.norm_rmse).collect(),
            uncovered,
            pathological: uncovered.iter().any(|g| *g >= PATHOLOGY_GAP - 1e-9),
            reports,
        });
    }
    let flights = validation
        .iter()
        .map(|o| {
            if o.sources.is_empty() {
                "-".into()
            } else {
                o.sources.join("+")
            }
        })
        .collect();
    Ok(DensityStudyResult { flights, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{GpComponent, Hyperparameters, NoisePlacement};
    use crate::mapping::{MapKind, Provenance};
    use std::sync::Arc;

    fn toy_map() -> VectorFieldMap {
        let locs: Vec<[f64; 3]> = (0..30)
            .map(|i| {
                let f = i as f64;
                [-1.8 + 0.12 * f, 1.4 * (0.7 * f).sin(), -0.6 - 0.05 * f]
            })
            .collect();
        let locs = Arc::new(locs);
        let hp = Hyperparameters::new(1.0, 0.8, 0.05).unwrap();
        let make = |k: f64| {
            let t = locs.iter().map(|p| k + (p[0] + p[1]).sin()).collect();
            GpComponent::fit(locs.clone(), t, hp, NoisePlacement::Diagonal).unwrap()
        };
        VectorFieldMap {
            kind: MapKind::Intermediate,
            components: [make(20.0), make(-1.0), make(49.0)],
            provenance: Provenance::default(),
        }
    }

    fn val(map: &VectorFieldMap) -> ObservationSet {
        let locs: Vec<[f64; 3]> = (0..20)
            .map(|i| [-1.5 + 0.15 * i as f64, 0.2, -1.0])
            .collect();
        let p = map.predict_vector(&locs);
        ObservationSet::new(
            locs,
            p.mean,
            (0..20).map(|i| i as f64).collect(),
            vec!["t9_01".into()],
        )
        .unwrap()
    }

    #[test]
    fn rows_follow_spacings_and_flag_gaps() {
        let map = toy_map();
        let r = density_sweep(&map, &[0.45, 0.5, 1.0], &[val(&map)]).unwrap();
        assert_eq!(
            r.rows.iter().map(|r| r.n1).collect::<Vec<_>>(),
            vec![259, 259, 47]
        );
        assert!(r.rows[0].pathological);
        assert!(!r.rows[1].pathological);
        assert_eq!(r.flights, vec!["t9_01"]);
    }

    #[test]
    fn sweep_row_equals_direct_compromise() {
        let map = toy_map();
        let obs = val(&map);
        let spec = GridSpec::new([0.5, 0.5, 0.25]);
        let r = density_sweep_specs(&map, &[spec], &[obs.clone()]).unwrap();
        let direct = validate(&compress(&map, &spec).unwrap(), &obs).unwrap();
        assert_eq!(r.rows[0].reports[0], direct);
        assert_eq!(r.rows[0].n1, 511);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ObservationSet;
use crate::mapping::{NormFieldMap, VectorFieldMap};

/// RMSE of the norm of the vector map and of the norm map against the
/// measured magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormComparison {
    pub sources: Vec<String>,
    pub points: usize,
    /// RMSE of `‖m̂‖ - ‖y‖`, µT.
    pub rmse_vec_nrm: f64,
    /// RMSE of `m̂_nrm - ‖y‖`, µT.
    pub rmse_nrm_nrm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl NormComparison {
    pub fn difference(&self) -> f64 {
        (self.rmse_vec_nrm - self.rmse_nrm_nrm).abs()
    }
}

pub fn compare_norm_maps(
    vec_map: &VectorFieldMap,
    nrm_map: &NormFieldMap,
    obs: &ObservationSet,
) -> Result<NormComparison> {
    if obs.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    obs.validate()?;
    let truth = obs.norms();
    let vec_pred = vec_map.predict_vector(&obs.locations).mean;
    let nrm_pred = nrm_map.predict(&obs.locations).mean;
    let n = obs.len() as f64;
    let mut sv = 0.0;
    let mut sn = 0.0;
    for i in 0..obs.len() {
        let m = vec_pred[i];
        let ev = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt() - truth[i];
        let en = nrm_pred[i] - truth[i];
        sv += ev * ev;
        sn += en * en;
    }
    let mut a = vec_map.provenance.source_flights.clone();
    let mut b = nrm_map.provenance.source_flights.clone();
    a.sort();
    b.sort();
    let warning = (a != b)
        .then(|| format!("maps were trained on different flights: vector {a:?}, norm {b:?}"));
    Ok(NormComparison {
        sources: obs.sources.clone(),
        points: obs.len(),
        rmse_vec_nrm: (sv / n).sqrt(),
        rmse_nrm_nrm: (sn / n).sqrt(),
        warning,
    })
}

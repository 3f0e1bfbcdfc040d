//! Vector and norm field maps built from per-axis GPs, the
//! intermediate→compromise compression, and the map file format.

mod file;
mod grid;

pub use file::{ComponentRecord, MapFile, Quantity};
pub use grid::{density_spacings, generate_grid, GridSpec};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gpr::{
    optimize_hyperparameters, GpComponent, Hyperparameters, NlmlProblem, NoisePlacement,
    OptimizeConfig, OptimizeReport, Prediction,
};
use crate::ingest::ObservationSet;
use crate::Point3;

/// Fewest observations accepted for training a map.
pub const MIN_TRAINING_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// Hyperparameters and inference set from all multi-flight observations.
    Intermediate,
    /// Intermediate hyperparameters, inference from grid pseudo-observations.
    Compromise,
    /// Trained on one flight.
    SingleFlight,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Flight ids of the training data.
    pub source_flights: Vec<String>,
    /// Grid the compromise inference set was placed on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Free-form run metadata such as input hashes, seed and version.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub run: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    #[serde(default)]
    pub noise: NoisePlacement,
    #[serde(default)]
    pub optimize: OptimizeConfig,
}

/// Stacked per-component predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPrediction {
    pub mean: Vec<Point3>,
    pub sd: Vec<Point3>,
}

impl VectorPrediction {
    fn stack(parts: [Prediction; 3]) -> Self {
        let m = parts[0].mean.len();
        VectorPrediction {
            mean: (0..m)
                .map(|i| [parts[0].mean[i], parts[1].mean[i], parts[2].mean[i]])
                .collect(),
            sd: (0..m)
                .map(|i| [parts[0].sd[i], parts[1].sd[i], parts[2].sd[i]])
                .collect(),
        }
    }
}

/// Three scalar GPs, one per field component, sharing training locations.
#[derive(Debug, Clone)]
pub struct VectorFieldMap {
    pub kind: MapKind,
    pub components: [GpComponent; 3],
    pub provenance: Provenance,
}

impl VectorFieldMap {
    pub fn locations(&self) -> &Arc<Vec<Point3>> {
        self.components[0].locations()
    }

    pub fn len(&self) -> usize {
        self.components[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.components[0].is_empty()
    }

    pub fn hyperparams(&self) -> [Hyperparameters; 3] {
        [0, 1, 2].map(|a| *self.components[a].hyperparams())
    }

    pub fn noise_placement(&self) -> NoisePlacement {
        self.components[0].noise_placement()
    }

    /// Latent-field posterior per component.
    pub fn predict_vector(&self, query: &[Point3]) -> VectorPrediction {
        VectorPrediction::stack([0, 1, 2].map(|a| self.components[a].predict(query)))
    }

    /// Posterior of a new measurement per component (latent plus noise).
    pub fn predict_observed(&self, query: &[Point3]) -> VectorPrediction {
        VectorPrediction::stack([0, 1, 2].map(|a| self.components[a].predict_observed(query)))
    }
}

/// Free-function form of [`VectorFieldMap::predict_vector`].
pub fn predict_vector(map: &VectorFieldMap, query: &[Point3]) -> VectorPrediction {
    map.predict_vector(query)
}

/// Scalar GP on the field magnitude.
#[derive(Debug, Clone)]
pub struct NormFieldMap {
    pub kind: MapKind,
    pub component: GpComponent,
    pub provenance: Provenance,
}

impl NormFieldMap {
    pub fn predict(&self, query: &[Point3]) -> Prediction {
        self.component.predict(query)
    }
}

fn check_training(obs: &ObservationSet) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::Empty("observation set"));
    }
    obs.validate()?;
    if obs.len() < MIN_TRAINING_POINTS {
        return Err(invalid(format!(
            "map training needs at least {MIN_TRAINING_POINTS} observations, got {}",
            obs.len()
        )));
    }
    Ok(())
}

fn kind_for(obs: &ObservationSet) -> MapKind {
    if obs.sources.len() == 1 {
        MapKind::SingleFlight
    } else {
        MapKind::Intermediate
    }
}

fn train_component(
    locations: &Arc<Vec<Point3>>,
    targets: Vec<f64>,
    config: &MapConfig,
) -> Result<(GpComponent, OptimizeReport)> {
    let problem = NlmlProblem::new(locations, &targets, config.noise)?;
    let report = optimize_hyperparameters(&problem, &config.optimize)?;
    let gp = GpComponent::fit(
        locations.clone(),
        targets,
        report.hyperparameters,
        config.noise,
    )?;
    Ok((gp, report))
}

/// Optimises one set of hyperparameters per component on the merged
/// observations and builds the inference state on all of them. Returns the
/// optimisation reports alongside the map.
pub fn build_intermediate_with_reports(
    obs: &ObservationSet,
    config: &MapConfig,
) -> Result<(VectorFieldMap, [OptimizeReport; 3])> {
    check_training(obs)?;
    let locations = Arc::new(obs.locations.clone());
    let [x, y, z] = [0, 1, 2].map(|a| train_component(&locations, obs.component(a), config));
    let ((gx, rx), (gy, ry), (gz, rz)) = (x?, y?, z?);
    let map = VectorFieldMap {
        kind: kind_for(obs),
        components: [gx, gy, gz],
        provenance: Provenance {
            source_flights: obs.sources.clone(),
            ..Provenance::default()
        },
    };
    Ok((map, [rx, ry, rz]))
}

pub fn build_intermediate(obs: &ObservationSet, config: &MapConfig) -> Result<VectorFieldMap> {
    build_intermediate_with_reports(obs, config).map(|(m, _)| m)
}

fn compress_component(gp: &GpComponent, grid: &Arc<Vec<Point3>>) -> Result<GpComponent> {
    let targets = gp.predict(grid).mean;
    GpComponent::with_offset(
        grid.clone(),
        targets,
        *gp.hyperparams(),
        gp.noise_placement(),
        gp.mean_offset(),
    )
}

/// Re-bases a trained map on pseudo-observations: the map's posterior means
/// at `grid` become the new training targets, hyperparameters and mean
/// offsets are copied unchanged.
pub fn build_compromise(inter: &VectorFieldMap, grid: &[Point3]) -> Result<VectorFieldMap> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if inter.kind == MapKind::Compromise {
        return Err(invalid(
            "compromise maps are built from intermediate or single-flight maps",
        ));
    }
    let grid = Arc::new(grid.to_vec());
    let [x, y, z] = [0, 1, 2].map(|a| compress_component(&inter.components[a], &grid));
    Ok(VectorFieldMap {
        kind: MapKind::Compromise,
        components: [x?, y?, z?],
        provenance: Provenance {
            grid: None,
            ..inter.provenance.clone()
        },
    })
}

/// [`build_compromise`] on the grid described by `spec`, recorded in the
/// provenance.
pub fn compress(inter: &VectorFieldMap, spec: &GridSpec) -> Result<VectorFieldMap> {
    let mut map = build_compromise(inter, &generate_grid(spec)?)?;
    map.provenance.grid = Some(*spec);
    Ok(map)
}

/// Scalar map on `‖y‖` through the same optimise-and-fit path as one vector
/// component.
pub fn build_norm_map(obs: &ObservationSet, config: &MapConfig) -> Result<NormFieldMap> {
    check_training(obs)?;
    let locations = Arc::new(obs.locations.clone());
    let (component, _) = train_component(&locations, obs.norms(), config)?;
    Ok(NormFieldMap {
        kind: kind_for(obs),
        component,
        provenance: Provenance {
            source_flights: obs.sources.clone(),
            ..Provenance::default()
        },
    })
}

pub fn compress_norm(map: &NormFieldMap, spec: &GridSpec) -> Result<NormFieldMap> {
    if map.kind == MapKind::Compromise {
        return Err(invalid(
            "compromise maps are built from intermediate or single-flight maps",
        ));
    }
    let grid = Arc::new(generate_grid(spec)?);
    Ok(NormFieldMap {
        kind: MapKind::Compromise,
        component: compress_component(&map.component, &grid)?,
        provenance: Provenance {
            grid: Some(*spec),
            ..map.provenance.clone()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(p: &Point3) -> Point3 {
        [
            20.0 + (1.3 * p[0]).sin() + 0.3 * p[2],
            -1.5 + (0.9 * p[1]).cos(),
            49.0 + 0.5 * p[0] * p[1],
        ]
    }

    fn observations(n: usize, seed: u64, source: &str) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locations: Vec<Point3> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-2.25..-0.5),
                ]
            })
            .collect();
        let measurements = locations
            .iter()
            .map(|p| field(p).map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)))
            .collect();
        let timestamps = (0..n).map(|i| i as f64 * 0.5).collect();
        ObservationSet::new(locations, measurements, timestamps, vec![source.into()]).unwrap()
    }

    #[test]
    fn empty_and_small_sets_rejected() {
        assert!(build_intermediate(&ObservationSet::default(), &MapConfig::default()).is_err());
        assert!(build_intermediate(&observations(5, 1, "t1_01"), &MapConfig::default()).is_err());
    }

    #[test]
    fn kinds_follow_sources() {
        let a = observations(60, 1, "t1_01");
        let b = observations(60, 2, "t1_02");
        assert_eq!(
            build_intermediate(&a, &MapConfig::default()).unwrap().kind,
            MapKind::SingleFlight
        );
        let merged = ObservationSet::merge([&a, &b]);
        let m = build_intermediate(&merged, &MapConfig::default()).unwrap();
        assert_eq!(m.kind, MapKind::Intermediate);
        assert_eq!(m.provenance.source_flights, vec!["t1_01", "t1_02"]);
    }

    #[test]
    fn compromise_copies_hyperparameters_and_offsets() {
        let inter =
            build_intermediate(&observations(120, 3, "t1_01"), &MapConfig::default()).unwrap();
        let spec = GridSpec::new([0.5, 0.5, 0.25]);
        let comp = compress(&inter, &spec).unwrap();
        assert_eq!(comp.len(), 511);
        assert_eq!(comp.hyperparams(), inter.hyperparams());
        for a in 0..3 {
            assert_eq!(
                comp.components[a].mean_offset(),
                inter.components[a].mean_offset()
            );
        }
        assert_eq!(comp.provenance.grid, Some(spec));
        assert!(build_compromise(&comp, &[[0.0; 3]]).is_err());
        assert!(build_compromise(&inter, &[]).is_err());
    }

    #[test]
    fn self_grid_round_trip() {
        let inter =
            build_intermediate(&observations(80, 4, "t1_01"), &MapConfig::default()).unwrap();
        let locs = inter.locations().to_vec();
        let comp = build_compromise(&inter, &locs).unwrap();
        let a = inter.predict_vector(&locs);
        let b = comp.predict_vector(&locs);
        let hp = inter.hyperparams();
        for i in 0..locs.len() {
            for k in 0..3 {
                assert!(
                    (a.mean[i][k] - b.mean[i][k]).abs() <= 3.0 * hp[k].sigma_n,
                    "{i} {k}"
                );
            }
        }
    }

    #[test]
    fn single_point_grid_reverts_to_prior() {
        let inter =
            build_intermediate(&observations(60, 5, "t1_01"), &MapConfig::default()).unwrap();
        let comp = build_compromise(&inter, &[[0.0, 0.0, -1.0]]).unwrap();
        let far = comp.predict_vector(&[[500.0, 0.0, -1.0]]);
        for k in 0..3 {
            assert!((far.mean[0][k] - inter.components[k].mean_offset()).abs() < 1e-9);
            assert!((far.sd[0][k] - comp.components[k].hyperparams().sigma_f).abs() < 1e-9);
        }
    }

    #[test]
    fn compromise_is_less_certain_away_from_grid() {
        let inter =
            build_intermediate(&observations(150, 6, "t1_01"), &MapConfig::default()).unwrap();
        let comp = compress(&inter, &GridSpec::uniform(1.0)).unwrap();
        // mid-cell points far from every node
        let q = [[-1.5, -1.0, -1.75], [0.5, 0.0, -1.75]];
        let a = inter.predict_vector(&q);
        let b = comp.predict_vector(&q);
        for i in 0..q.len() {
            for k in 0..3 {
                assert!(b.sd[i][k] >= a.sd[i][k] - 1e-12);
            }
        }
    }

    #[test]
    fn norm_targets_are_row_norms() {
        let mut obs = observations(30, 7, "t1_01");
        for m in &mut obs.measurements {
            *m = [3.0, 4.0, 0.0];
        }
        let map = build_norm_map(&obs, &MapConfig::default()).unwrap();
        assert!(map.component.targets().iter().all(|&t| t == 5.0));
        let obs = observations(30, 8, "t1_01");
        let map = build_norm_map(&obs, &MapConfig::default()).unwrap();
        for (t, m) in map.component.targets().iter().zip(&obs.measurements) {
            let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
            assert_eq!(*t, n);
        }
    }
}

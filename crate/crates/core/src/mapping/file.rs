use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{MapKind, NormFieldMap, Provenance, VectorFieldMap};
use crate::error::{invalid, Result};
use crate::gpr::{GpComponent, Hyperparameters, NoisePlacement};
use crate::Point3;

const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Vector,
    Norm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    /// `x`, `y`, `z` or `norm`.
    pub axis: String,
    pub hyperparams: Hyperparameters,
    pub mean_offset: f64,
    pub targets: Vec<f64>,
}

impl ComponentRecord {
    fn from_component(axis: &str, gp: &GpComponent) -> Self {
        ComponentRecord {
            axis: axis.into(),
            hyperparams: *gp.hyperparams(),
            mean_offset: gp.mean_offset(),
            targets: gp.targets().to_vec(),
        }
    }

    fn build(&self, locations: &Arc<Vec<Point3>>, noise: NoisePlacement) -> Result<GpComponent> {
        GpComponent::with_offset(
            locations.clone(),
            self.targets.clone(),
            self.hyperparams,
            noise,
            self.mean_offset,
        )
    }
}

/// On-disk map: shared inference locations, per-component hyperparameters,
/// offsets and targets. The inference state is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub kind: MapKind,
    pub quantity: Quantity,
    #[serde(default)]
    pub noise_placement: NoisePlacement,
    pub components: Vec<ComponentRecord>,
    pub locations: Vec<Point3>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl MapFile {
    pub fn from_vector(map: &VectorFieldMap) -> Self {
        MapFile {
            kind: map.kind,
            quantity: Quantity::Vector,
            noise_placement: map.noise_placement(),
            components: (0..3)
                .map(|a| ComponentRecord::from_component(AXES[a], &map.components[a]))
                .collect(),
            locations: map.locations().to_vec(),
            provenance: map.provenance.clone(),
        }
    }

    pub fn from_norm(map: &NormFieldMap) -> Self {
        MapFile {
            kind: map.kind,
            quantity: Quantity::Norm,
            noise_placement: map.component.noise_placement(),
            components: vec![ComponentRecord::from_component("norm", &map.component)],
            locations: map.component.locations().to_vec(),
            provenance: map.provenance.clone(),
        }
    }

    pub fn into_vector(self) -> Result<VectorFieldMap> {
        if self.quantity != Quantity::Vector || self.components.len() != 3 {
            return Err(invalid("map file does not hold a vector map"));
        }
        for (rec, axis) in self.components.iter().zip(AXES) {
            if rec.axis != axis {
                return Err(invalid(format!(
                    "expected component {axis}, found {}",
                    rec.axis
                )));
            }
        }
        let locations = Arc::new(self.locations);
        let [x, y, z] =
            [0, 1, 2].map(|a| self.components[a].build(&locations, self.noise_placement));
        Ok(VectorFieldMap {
            kind: self.kind,
            components: [x?, y?, z?],
            provenance: self.provenance,
        })
    }

    pub fn into_norm(self) -> Result<NormFieldMap> {
        if self.quantity != Quantity::Norm || self.components.len() != 1 {
            return Err(invalid("map file does not hold a norm map"));
        }
        let locations = Arc::new(self.locations);
        let component = self.components[0].build(&locations, self.noise_placement)?;
        Ok(NormFieldMap {
            kind: self.kind,
            component,
            provenance: self.provenance,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

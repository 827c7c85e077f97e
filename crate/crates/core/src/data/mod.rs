//! Ingestion, joining, encoding, scaling and splitting of building datasets.

mod join;
mod scale;
mod schema;
mod split;

pub use join::{consolidate_components, join_on_cadastre, DropRecord, JoinOutcome, JoinedSample};
pub use scale::MinMaxScaler;
pub use schema::{
    aggregate_consumption, aggregate_monthly, load_dataset, read_dataset, AuditBuildingRecord,
    AuditComponentRecord, ConsumptionRecord, CsvSchema, LandRecord, MonthlyConsumptionRow, RowReader,
    CONSUMPTION_COLUMN_PREFIX,
};
pub use split::{kfold_split, train_val_split};

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{BuildingType, STATE_DIM};

/// Default construction series, one-hot encoded in this order.
pub const DEFAULT_SERIES: [&str; 12] = [
    "pre-war",
    "103",
    "104",
    "119",
    "316",
    "318",
    "464",
    "467",
    "602",
    "lithuanian",
    "small-family",
    "special",
];

/// Numeric features preceding the serie one-hot block.
pub const BASE_FEATURES: [&str; 5] = ["useful_area", "total_area", "floors", "apartments", "building_type"];

/// Input feature layout: `[useful_area, total_area, floors, apartments,
/// building_type] ++ one_hot(serie)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub series: Vec<String>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema {
            series: DEFAULT_SERIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// The building fields that feed the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildingFeatures {
    pub useful_area: f64,
    pub total_area: f64,
    pub floors: u32,
    pub apartments: u32,
    pub building_type: BuildingType,
    pub serie: String,
}

impl From<&LandRecord> for BuildingFeatures {
    fn from(r: &LandRecord) -> Self {
        BuildingFeatures {
            useful_area: r.useful_area,
            total_area: r.total_area,
            floors: r.floors,
            apartments: r.apartments,
            building_type: r.building_type,
            serie: r.serie.clone(),
        }
    }
}

impl FeatureSchema {
    pub fn dim(&self) -> usize {
        BASE_FEATURES.len() + self.series.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        BASE_FEATURES
            .iter()
            .map(|s| s.to_string())
            .chain(self.series.iter().map(|s| format!("serie_{s}")))
            .collect()
    }

    pub fn serie_index(&self, serie: &str) -> Result<usize> {
        self.series
            .iter()
            .position(|s| s == serie.trim())
            .ok_or_else(|| Error::Encoding {
                value: serie.to_string(),
                valid: self.series.join(", "),
            })
    }

    pub fn encode(&self, b: &BuildingFeatures) -> Result<Vec<f64>> {
        let serie = self.serie_index(&b.serie)?;
        let mut v = vec![0.0; self.dim()];
        v[0] = b.useful_area;
        v[1] = b.total_area;
        v[2] = b.floors as f64;
        v[3] = b.apartments as f64;
        v[4] = b.building_type.code();
        v[BASE_FEATURES.len() + serie] = 1.0;
        Ok(v)
    }
}

/// Paths of the four input CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub land: PathBuf,
    pub audit_buildings: PathBuf,
    pub audit_components: PathBuf,
    pub consumption: PathBuf,
}

pub const LAND_FILE: &str = "land.csv";
pub const AUDIT_BUILDINGS_FILE: &str = "audit_buildings.csv";
pub const AUDIT_COMPONENTS_FILE: &str = "envelope_components.csv";
pub const CONSUMPTION_FILE: &str = "energy_consumption.csv";
pub const MONTHLY_CONSUMPTION_FILE: &str = "energy_consumption_monthly.csv";

impl DatasetPaths {
    /// Standard file names inside one directory, as written by the generator.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            land: dir.join(LAND_FILE),
            audit_buildings: dir.join(AUDIT_BUILDINGS_FILE),
            audit_components: dir.join(AUDIT_COMPONENTS_FILE),
            consumption: dir.join(CONSUMPTION_FILE),
        }
    }

    pub fn check_exist(&self) -> Result<()> {
        for p in [&self.land, &self.audit_buildings, &self.audit_components, &self.consumption] {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(())
    }
}

/// Loads and joins all four datasets.
pub fn load_joined(paths: &DatasetPaths, schema: &FeatureSchema) -> Result<JoinOutcome> {
    paths.check_exist()?;
    let land: Vec<LandRecord> = load_dataset(&paths.land)?;
    let audit: Vec<AuditBuildingRecord> = load_dataset(&paths.audit_buildings)?;
    let components: Vec<AuditComponentRecord> = load_dataset(&paths.audit_components)?;
    let consumption: Vec<ConsumptionRecord> = load_dataset(&paths.consumption)?;
    Ok(join_on_cadastre(&land, &audit, &components, &consumption, schema))
}

/// Row-stacks the feature vectors of `samples[indices]`.
pub fn feature_matrix(samples: &[JoinedSample], indices: &[usize]) -> Array2<f64> {
    let width = samples.first().map(|s| s.features.len()).unwrap_or(0);
    let mut m = Array2::zeros((indices.len(), width));
    for (r, &i) in indices.iter().enumerate() {
        for (c, &v) in samples[i].features.iter().enumerate() {
            m[[r, c]] = v;
        }
    }
    m
}

/// Row-stacks the flattened target states of `samples[indices]`.
pub fn target_matrix(samples: &[JoinedSample], indices: &[usize]) -> Array2<f64> {
    let mut m = Array2::zeros((indices.len(), STATE_DIM));
    for (r, &i) in indices.iter().enumerate() {
        for (c, v) in samples[i].target_state.to_array().into_iter().enumerate() {
            m[[r, c]] = v;
        }
    }
    m
}

/// Measured energy as an `n x 1` matrix.
pub fn energy_matrix(samples: &[JoinedSample], indices: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((indices.len(), 1), |(r, _)| samples[indices[r]].measured_energy)
}

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use log::info;
use serde::{Deserialize, Serialize};

use super::schema::{AuditBuildingRecord, AuditComponentRecord, ConsumptionRecord, LandRecord};
use super::{BuildingFeatures, FeatureSchema};
use crate::physics::{self, BuildingType, Component, EnvelopeState, COMPONENT_COUNT};

/// One building ready for training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinedSample {
    pub cadastre_number: String,
    pub building: BuildingFeatures,
    pub features: Vec<f64>,
    pub target_state: EnvelopeState,
    /// Mean annual metered consumption, kWh/yr.
    pub measured_energy: f64,
    /// Useful area used by the physics model, m².
    pub useful_area: f64,
    pub building_type: BuildingType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub cadastre_number: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JoinOutcome {
    pub samples: Vec<JoinedSample>,
    pub dropped: Vec<DropRecord>,
}

impl JoinOutcome {
    /// Plain-text drop report, one building per line.
    pub fn drop_report(&self) -> String {
        let mut out = format!(
            "joined {} buildings, dropped {}\n",
            self.samples.len(),
            self.dropped.len()
        );
        for d in &self.dropped {
            let _ = writeln!(out, "{}\t{}", d.cadastre_number, d.reason);
        }
        out
    }
}

/// Summed area and heat loss coefficient of one (building, structure) pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConsolidatedComponent {
    pub area: f64,
    pub structure_heat_loss_coefficient: f64,
}

/// Merges repeated component rows: areas and coefficients are additive, so
/// the resulting U-value is the area-weighted mean.
pub fn consolidate_components(
    components: &[AuditComponentRecord],
) -> HashMap<&str, BTreeMap<Component, ConsolidatedComponent>> {
    let mut out: HashMap<&str, BTreeMap<Component, ConsolidatedComponent>> = HashMap::new();
    for c in components {
        let slot = out
            .entry(c.cadastre_number.as_str())
            .or_default()
            .entry(c.enclosing_structure)
            .or_default();
        slot.area += c.area;
        slot.structure_heat_loss_coefficient += c.structure_heat_loss_coefficient;
    }
    out
}

/// Inner join of the four datasets on cadastre number, driven by the audit
/// building list. Samples come out sorted by cadastre number; incomplete
/// buildings are dropped with a reason.
pub fn join_on_cadastre(
    land: &[LandRecord],
    audit_buildings: &[AuditBuildingRecord],
    audit_components: &[AuditComponentRecord],
    consumption: &[ConsumptionRecord],
    schema: &FeatureSchema,
) -> JoinOutcome {
    let land_by_key: HashMap<&str, &LandRecord> =
        land.iter().map(|r| (r.cadastre_number.as_str(), r)).collect();
    let consumption_by_key: HashMap<&str, &ConsumptionRecord> =
        consumption.iter().map(|r| (r.cadastre_number.as_str(), r)).collect();
    let components = consolidate_components(audit_components);

    let mut audit: Vec<&AuditBuildingRecord> = audit_buildings.iter().collect();
    audit.sort_by(|a, b| a.cadastre_number.cmp(&b.cadastre_number));

    let mut outcome = JoinOutcome::default();
    for record in audit {
        let key = record.cadastre_number.as_str();
        match assemble(record, &land_by_key, &consumption_by_key, &components, schema) {
            Ok(sample) => outcome.samples.push(sample),
            Err(reason) => {
                info!("dropping building {key}: {reason}");
                outcome.dropped.push(DropRecord {
                    cadastre_number: key.to_string(),
                    reason,
                });
            }
        }
    }
    outcome
}

fn assemble(
    audit: &AuditBuildingRecord,
    land: &HashMap<&str, &LandRecord>,
    consumption: &HashMap<&str, &ConsumptionRecord>,
    components: &HashMap<&str, BTreeMap<Component, ConsolidatedComponent>>,
    schema: &FeatureSchema,
) -> std::result::Result<JoinedSample, String> {
    let key = audit.cadastre_number.as_str();
    let land = land.get(key).ok_or("missing from land dataset")?;
    let measured_energy = consumption
        .get(key)
        .ok_or("missing consumption record")?
        .mean_annual()
        .ok_or("no consumption data for any year")?;

    let parts = components.get(key);
    let missing: Vec<&str> = Component::ALL
        .iter()
        .filter(|c| parts.is_none_or(|p| !p.contains_key(c)))
        .map(|c| c.label())
        .collect();
    if !missing.is_empty() {
        return Err(format!("missing component: {}", missing.join(", ")));
    }
    let parts = parts.unwrap();

    let mut state = EnvelopeState {
        area: [0.0; COMPONENT_COUNT],
        u_value: [0.0; COMPONENT_COUNT],
        air_exchange_rate: audit.air_exchange_rate,
        specific_heat_gains: audit.specific_heat_gains,
    };
    for c in Component::ALL {
        let part = parts[&c];
        let u = physics::u_value(part.structure_heat_loss_coefficient, part.area).map_err(|_| {
            format!(
                "component {c} has area {}; U = E/A is undefined",
                part.area
            )
        })?;
        state.area[c.index()] = part.area;
        state.u_value[c.index()] = u;
    }
    state.validate().map_err(|e| e.to_string())?;

    let building = BuildingFeatures::from(*land);
    let features = schema.encode(&building).map_err(|e| e.to_string())?;

    Ok(JoinedSample {
        cadastre_number: key.to_string(),
        building,
        features,
        target_state: state,
        measured_energy,
        useful_area: audit.useful_area,
        building_type: audit.building_type,
    })
}

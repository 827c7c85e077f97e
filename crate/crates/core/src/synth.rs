//! Seeded synthetic building cohorts.
//!
//! Ground-truth envelopes are sampled per construction series, consumption
//! is produced by the physics model and then perturbed, and everything is
//! emitted in the same CSV layouts the `data` module ingests. Serie
//! parameters are invented; they only need to give the serie feature real
//! predictive power.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    AuditBuildingRecord, AuditComponentRecord, ConsumptionRecord, LandRecord, MonthlyConsumptionRow,
    AUDIT_BUILDINGS_FILE, AUDIT_COMPONENTS_FILE, CONSUMPTION_COLUMN_PREFIX, CONSUMPTION_FILE, LAND_FILE,
    MONTHLY_CONSUMPTION_FILE,
};
use crate::error::{Error, Result};
use crate::physics::{self, BuildingType, Component, EnvelopeState, PhysicsConstants, COMPONENT_COUNT};

/// Sampling ranges for one construction series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerieProfile {
    pub name: String,
    pub floors: (u32, u32),
    /// Footprint length and width, m.
    pub length: (f64, f64),
    pub width: (f64, f64),
    /// Useful area per apartment, m².
    pub apartment_size: (f64, f64),
    pub heavy_probability: f64,
    /// Mean U-value per component, W/(m²·K), in component order.
    pub u_mean: [f64; COMPONENT_COUNT],
    /// Relative standard deviation of U-values around the mean.
    pub u_spread: f64,
    /// Glazed and door area as fractions of the gross wall area.
    pub window_fraction: (f64, f64),
    pub door_fraction: (f64, f64),
    pub air_exchange_rate: (f64, f64),
    pub specific_heat_gains: (f64, f64),
}

#[allow(clippy::too_many_arguments)]
fn profile(
    name: &str,
    floors: (u32, u32),
    length: (f64, f64),
    width: (f64, f64),
    apartment_size: (f64, f64),
    heavy_probability: f64,
    u_mean: [f64; COMPONENT_COUNT],
    window_fraction: (f64, f64),
    air_exchange_rate: (f64, f64),
    specific_heat_gains: (f64, f64),
) -> SerieProfile {
    SerieProfile {
        name: name.to_string(),
        floors,
        length,
        width,
        apartment_size,
        heavy_probability,
        u_mean,
        u_spread: 0.05,
        window_fraction,
        door_fraction: (0.008, 0.016),
        air_exchange_rate,
        specific_heat_gains,
    }
}

/// Twelve invented series with distinct geometry and insulation regimes.
pub fn default_series() -> Vec<SerieProfile> {
    vec![
        profile("pre-war", (3, 6), (20.0, 50.0), (12.0, 18.0), (55.0, 90.0), 0.9, [0.95, 0.9, 1.45, 2.9, 2.7], (0.175, 0.205), (0.675, 0.825), (11.5, 14.5)),
        profile("103", (5, 5), (60.0, 90.0), (11.0, 13.0), (42.0, 55.0), 1.0, [0.75, 0.8, 1.15, 2.5, 2.6], (0.19, 0.21), (0.5, 0.6), (15.5, 18.5)),
        profile("104", (5, 9), (60.0, 100.0), (12.0, 14.0), (45.0, 60.0), 1.0, [0.7, 0.75, 1.05, 2.4, 2.5], (0.1925, 0.2175), (0.4875, 0.5625), (16.5, 19.5)),
        profile("119", (9, 9), (70.0, 110.0), (12.0, 14.0), (48.0, 62.0), 1.0, [0.65, 0.7, 1.0, 2.3, 2.4], (0.2125, 0.2375), (0.45, 0.55), (17.5, 20.5)),
        profile("316", (5, 5), (50.0, 80.0), (11.0, 12.5), (40.0, 52.0), 1.0, [0.8, 0.85, 1.25, 2.6, 2.7], (0.18, 0.2), (0.55, 0.65), (14.5, 17.5)),
        profile("318", (5, 5), (55.0, 85.0), (11.0, 13.0), (42.0, 54.0), 1.0, [0.78, 0.82, 1.2, 2.6, 2.65], (0.18, 0.2), (0.55, 0.65), (14.5, 17.5)),
        profile("464", (5, 9), (60.0, 120.0), (11.5, 13.0), (44.0, 58.0), 1.0, [0.72, 0.78, 1.1, 2.5, 2.5], (0.2025, 0.2275), (0.5, 0.6), (16.5, 19.5)),
        profile("467", (9, 12), (70.0, 130.0), (12.0, 14.0), (46.0, 60.0), 1.0, [0.6, 0.68, 0.95, 2.3, 2.3], (0.2125, 0.2375), (0.45, 0.55), (18.5, 21.5)),
        profile("602", (9, 16), (30.0, 60.0), (14.0, 18.0), (48.0, 65.0), 1.0, [0.55, 0.62, 0.9, 2.2, 2.2], (0.2225, 0.2475), (0.4375, 0.5125), (19.5, 22.5)),
        profile("lithuanian", (5, 9), (50.0, 90.0), (12.0, 14.0), (45.0, 62.0), 0.95, [0.68, 0.72, 1.0, 2.4, 2.4], (0.1925, 0.2175), (0.4925, 0.5775), (16.5, 19.5)),
        profile("small-family", (1, 3), (10.0, 20.0), (8.0, 12.0), (70.0, 140.0), 0.35, [0.5, 0.45, 0.6, 2.0, 1.8], (0.135, 0.165), (0.625, 0.775), (9.5, 12.5)),
        profile("special", (4, 12), (25.0, 70.0), (14.0, 22.0), (55.0, 110.0), 0.7, [0.45, 0.4, 0.55, 1.6, 1.4], (0.24, 0.28), (0.4, 0.5), (20.0, 24.0)),
    ]
}

/// Heating-season share of annual consumption per calendar month.
const MONTHLY_PROFILE: [f64; 12] = [0.18, 0.16, 0.13, 0.08, 0.03, 0.0, 0.0, 0.0, 0.02, 0.08, 0.14, 0.18];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_buildings: usize,
    pub seed: u64,
    pub series: Vec<SerieProfile>,
    /// Relative std of the multiplicative noise on metered consumption.
    pub consumption_noise: f64,
    /// Relative std of the noise on audited areas and U-values.
    pub audit_noise: f64,
    pub storey_height: f64,
    /// Range of useful area as a fraction of total area.
    pub useful_fraction: (f64, f64),
    pub years: Vec<u16>,
    pub physics: PhysicsConstants,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_buildings: 256,
            seed: 0,
            series: default_series(),
            consumption_noise: 0.05,
            audit_noise: 0.02,
            storey_height: 2.7,
            useful_fraction: (0.76, 0.86),
            years: vec![2017, 2018, 2019, 2020],
            physics: PhysicsConstants::default(),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) must be non-negative and ordered")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::Config("generator needs at least one serie".into()));
        }
        if self.years.is_empty() {
            return Err(Error::Config("generator needs at least one year".into()));
        }
        if !(self.consumption_noise >= 0.0 && self.audit_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(self.storey_height > 0.0) {
            return Err(Error::Config("storey height must be positive".into()));
        }
        check_range("useful_fraction", self.useful_fraction)?;
        if self.useful_fraction.0 <= 0.0 || self.useful_fraction.1 > 1.0 {
            return Err(Error::Config("useful_fraction must lie in (0, 1]".into()));
        }
        self.physics.validate()?;
        for s in &self.series {
            let ctx = |field: &str| format!("serie {}: {field}", s.name);
            if s.floors.0 < 1 || s.floors.0 > s.floors.1 {
                return Err(Error::Config(format!("{} must be ordered and >= 1", ctx("floors"))));
            }
            for (field, r) in [
                ("length", s.length),
                ("width", s.width),
                ("apartment_size", s.apartment_size),
                ("window_fraction", s.window_fraction),
                ("door_fraction", s.door_fraction),
                ("air_exchange_rate", s.air_exchange_rate),
                ("specific_heat_gains", s.specific_heat_gains),
            ] {
                check_range(&ctx(field), r)?;
            }
            if s.length.0 <= 0.0 || s.width.0 <= 0.0 || s.apartment_size.0 <= 0.0 {
                return Err(Error::Config(format!("{} must be positive", ctx("geometry"))));
            }
            if s.window_fraction.1 + s.door_fraction.1 >= 1.0 {
                return Err(Error::Config(format!("{} leaves no opaque wall", ctx("openings"))));
            }
            if !(0.0..=1.0).contains(&s.heavy_probability) {
                return Err(Error::Config(format!("{} must lie in [0, 1]", ctx("heavy_probability"))));
            }
            if s.u_mean.iter().any(|&u| !(u > 0.0)) || !(s.u_spread >= 0.0) {
                return Err(Error::Config(format!("{} must be positive", ctx("u_mean"))));
            }
        }
        Ok(())
    }
}

/// The state and consumption a building was generated from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub cadastre_number: String,
    pub state: EnvelopeState,
    pub energy: f64,
}

/// A generated cohort in the ingestion record types.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cohort {
    pub land: Vec<LandRecord>,
    pub audit_buildings: Vec<AuditBuildingRecord>,
    pub audit_components: Vec<AuditComponentRecord>,
    pub consumption: Vec<ConsumptionRecord>,
    pub monthly: Vec<MonthlyConsumptionRow>,
    pub truth: Vec<GroundTruth>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn material(component: Component, building_type: BuildingType) -> &'static str {
    match (component, building_type) {
        (Component::Windows, _) => "double glazing",
        (Component::Doors, _) => "wood",
        (Component::Walls, BuildingType::Heavy) => "concrete panel",
        (Component::Walls, BuildingType::Light) => "timber frame",
        (Component::RoofAttic, _) => "reinforced concrete",
        (Component::BasementSlab, _) => "concrete slab",
    }
}

pub fn generate_cohort(config: &GeneratorConfig) -> Result<Cohort> {
    config.validate()?;
    let mut cohort = Cohort::default();
    let season_factor = config.physics.delta_t * config.physics.degree_hour_factor();

    for index in 0..config.n_buildings {
        // Independent stream per building keeps each building reproducible on its own.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64);

        let key = format!("0100{:07}", index + 1);
        let serie = &config.series[rng.random_range(0..config.series.len())];
        let building_type = if rng.random_bool(serie.heavy_probability) {
            BuildingType::Heavy
        } else {
            BuildingType::Light
        };
        let floors = rng.random_range(serie.floors.0..=serie.floors.1);
        let length = uniform(&mut rng, serie.length);
        let width = uniform(&mut rng, serie.width);
        let footprint = length * width;
        let total_area = footprint * floors as f64;
        let useful_area = total_area * uniform(&mut rng, config.useful_fraction);
        let apartments = ((useful_area / uniform(&mut rng, serie.apartment_size)).round() as u32).max(1);
        let perimeter = 2.0 * (length + width);

        let gross_wall = perimeter * floors as f64 * config.storey_height;
        let windows = gross_wall * uniform(&mut rng, serie.window_fraction);
        let doors = gross_wall * uniform(&mut rng, serie.door_fraction);
        let mut state = EnvelopeState {
            area: [footprint, footprint, gross_wall - windows - doors, doors, windows],
            ..EnvelopeState::default()
        };
        for (i, u) in state.u_value.iter_mut().enumerate() {
            let factor = (1.0 + serie.u_spread * gaussian(&mut rng)).max(0.3);
            *u = serie.u_mean[i] * factor;
        }
        state.air_exchange_rate = uniform(&mut rng, serie.air_exchange_rate);
        state.specific_heat_gains = uniform(&mut rng, serie.specific_heat_gains);

        let energy = physics::energy_consumption(&state, useful_area, building_type, &config.physics)?
            .energy_consumption;
        let metered = energy * (1.0 + config.consumption_noise * gaussian(&mut rng)).max(0.0);

        let mut audited = state;
        for i in 0..COMPONENT_COUNT {
            audited.area[i] *= (1.0 + config.audit_noise * gaussian(&mut rng)).max(0.05);
            audited.u_value[i] *= (1.0 + config.audit_noise * gaussian(&mut rng)).max(0.05);
        }
        let coefficients: [f64; COMPONENT_COUNT] =
            std::array::from_fn(|i| audited.u_value[i] * audited.area[i]);

        cohort.land.push(LandRecord {
            cadastre_number: key.clone(),
            floors,
            useful_area,
            total_area,
            apartments,
            serie: serie.name.clone(),
            building_type,
            address: Some(format!("Synthetic iela {}", index + 1)),
            latitude_centroid: Some(56.90 + rng.random_range(0.0..0.12)),
            longitude_centroid: Some(24.00 + rng.random_range(0.0..0.25)),
            perimeter: Some(perimeter),
            geometry: Some(format!(
                "POLYGON((0 0, {length} 0, {length} {width}, 0 {width}, 0 0))"
            )),
        });
        cohort.audit_buildings.push(AuditBuildingRecord {
            cadastre_number: key.clone(),
            floors,
            length: Some(length),
            width: Some(width),
            useful_area,
            avg_indoor_height: Some(config.storey_height - 0.2),
            apartments,
            serie: serie.name.clone(),
            total_area,
            air_exchange_rate: state.air_exchange_rate,
            specific_heat_gains: state.specific_heat_gains,
            building_type,
        });
        for c in Component::ALL {
            let i = c.index();
            cohort.audit_components.push(AuditComponentRecord {
                cadastre_number: key.clone(),
                enclosing_structure: c,
                material: Some(material(c, building_type).to_string()),
                area: audited.area[i],
                structure_heat_loss_coefficient: coefficients[i],
                energy_consumption: Some(coefficients[i] * season_factor),
            });
        }

        let mut annual_totals = BTreeMap::new();
        for &year in &config.years {
            annual_totals.insert(year, metered);
            // jitter the seasonal shape per year; the total stays fixed
            let weights: [f64; 12] =
                std::array::from_fn(|m| MONTHLY_PROFILE[m] * rng.random_range(0.85..1.15));
            let weight_sum: f64 = weights.iter().sum();
            for (m, w) in weights.iter().enumerate() {
                cohort.monthly.push(MonthlyConsumptionRow {
                    cadastre_number: key.clone(),
                    year,
                    month: m as u8 + 1,
                    energy_consumption: metered * w / weight_sum,
                });
            }
        }
        cohort.consumption.push(ConsumptionRecord {
            cadastre_number: key.clone(),
            annual_totals,
        });
        cohort.truth.push(GroundTruth {
            cadastre_number: key,
            state,
            energy,
        });
    }
    Ok(cohort)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Checkpoint(format!("csv encoding: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Checkpoint(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl Cohort {
    pub fn land_csv(&self) -> Result<String> {
        let header = [
            "cadastre_number", "floors", "latitude_centroid", "longitude_centroid", "useful_area",
            "geometry", "apartments", "serie", "total_area", "address", "perimeter", "building_type",
        ];
        csv_text(
            &header,
            self.land.iter().map(|r| {
                vec![
                    r.cadastre_number.clone(),
                    r.floors.to_string(),
                    opt(&r.latitude_centroid),
                    opt(&r.longitude_centroid),
                    r.useful_area.to_string(),
                    opt(&r.geometry),
                    r.apartments.to_string(),
                    r.serie.clone(),
                    r.total_area.to_string(),
                    opt(&r.address),
                    opt(&r.perimeter),
                    r.building_type.to_string(),
                ]
            }),
        )
    }

    pub fn audit_buildings_csv(&self) -> Result<String> {
        let header = [
            "cadastre_number", "floors", "length", "width", "useful_area", "Avg_indoor_height",
            "apartments", "serie", "total_area", "air_exchange_rate", "specific_heat_gains",
            "building_type",
        ];
        csv_text(
            &header,
            self.audit_buildings.iter().map(|r| {
                vec![
                    r.cadastre_number.clone(),
                    r.floors.to_string(),
                    opt(&r.length),
                    opt(&r.width),
                    r.useful_area.to_string(),
                    opt(&r.avg_indoor_height),
                    r.apartments.to_string(),
                    r.serie.clone(),
                    r.total_area.to_string(),
                    r.air_exchange_rate.to_string(),
                    r.specific_heat_gains.to_string(),
                    r.building_type.to_string(),
                ]
            }),
        )
    }

    pub fn audit_components_csv(&self) -> Result<String> {
        let header = [
            "cadastre_number", "enclosing_structure", "material", "energy_consumption", "area",
            "structure_heat_loss_coefficient", "type_of_heating", "total_structure_heat_loss_coefficient",
            "total_area", "total_energy_consumption",
        ];
        let mut totals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for c in &self.audit_components {
            let t = totals.entry(c.cadastre_number.as_str()).or_default();
            t.0 += c.structure_heat_loss_coefficient;
            t.1 += c.energy_consumption.unwrap_or(0.0);
        }
        let total_area: BTreeMap<&str, f64> = self
            .audit_buildings
            .iter()
            .map(|b| (b.cadastre_number.as_str(), b.total_area))
            .collect();
        csv_text(
            &header,
            self.audit_components.iter().map(|c| {
                let (coefficient_sum, energy_sum) = totals[c.cadastre_number.as_str()];
                vec![
                    c.cadastre_number.clone(),
                    c.enclosing_structure.label().to_string(),
                    opt(&c.material),
                    opt(&c.energy_consumption),
                    c.area.to_string(),
                    c.structure_heat_loss_coefficient.to_string(),
                    "district heating".to_string(),
                    coefficient_sum.to_string(),
                    opt(&total_area.get(c.cadastre_number.as_str())),
                    energy_sum.to_string(),
                ]
            }),
        )
    }

    pub fn consumption_csv(&self) -> Result<String> {
        let years: Vec<u16> = {
            let mut y: Vec<u16> = self
                .consumption
                .iter()
                .flat_map(|c| c.annual_totals.keys().copied())
                .collect();
            y.sort_unstable();
            y.dedup();
            y
        };
        let mut header = vec!["cadastre_number".to_string()];
        header.extend(years.iter().map(|y| format!("{CONSUMPTION_COLUMN_PREFIX}{y}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        csv_text(
            &header_refs,
            self.consumption.iter().map(|c| {
                let mut row = vec![c.cadastre_number.clone()];
                row.extend(years.iter().map(|y| opt(&c.annual_totals.get(y))));
                row
            }),
        )
    }

    pub fn monthly_csv(&self) -> Result<String> {
        csv_text(
            &["cadastre_number", "year", "month", "energy_consumption"],
            self.monthly.iter().map(|m| {
                vec![
                    m.cadastre_number.clone(),
                    m.year.to_string(),
                    m.month.to_string(),
                    m.energy_consumption.to_string(),
                ]
            }),
        )
    }

    /// Writes all five CSVs into `dir` under the standard file names.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (LAND_FILE, self.land_csv()?),
            (AUDIT_BUILDINGS_FILE, self.audit_buildings_csv()?),
            (AUDIT_COMPONENTS_FILE, self.audit_components_csv()?),
            (CONSUMPTION_FILE, self.consumption_csv()?),
            (MONTHLY_CONSUMPTION_FILE, self.monthly_csv()?),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} buildings, {} component rows, {} consumption rows, {} monthly rows",
            self.land.len(),
            self.audit_components.len(),
            self.consumption.len(),
            self.monthly.len()
        );
        s
    }
}

/// Constants for [`reference_energy`], kept apart from `PhysicsConstants`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceConstants {
    pub delta_t: f64,
    pub heating_days: f64,
    pub hours_per_day: f64,
    pub w_to_kw: f64,
    pub bridge_fraction: f64,
    pub vent_coefficient: f64,
    pub near_one_epsilon: f64,
}

impl Default for ReferenceConstants {
    fn default() -> Self {
        ReferenceConstants {
            delta_t: 18.9,
            heating_days: 192.0,
            hours_per_day: 24.0,
            w_to_kw: 1000.0,
            bridge_fraction: 0.03,
            vent_coefficient: 0.34,
            near_one_epsilon: 1e-6,
        }
    }
}

/// Straight-line scalar evaluation of the heating balance, independent of
/// the `physics` module, used to cross-check it.
#[allow(clippy::too_many_arguments)]
pub fn reference_energy_scalar(
    areas: &[f64; 5],
    u_values: &[f64; 5],
    air_exchange_rate: f64,
    specific_heat_gains: f64,
    useful_area: f64,
    time_constant: f64,
    k: &ReferenceConstants,
) -> f64 {
    let hours = k.heating_days * k.hours_per_day / k.w_to_kw;
    let mut conductance = 0.0;
    for i in 0..5 {
        conductance += areas[i] * u_values[i];
    }
    let envelope = conductance * k.delta_t * hours;
    let bridges = envelope * k.bridge_fraction;
    let ventilation = useful_area * air_exchange_rate * k.vent_coefficient * k.delta_t * hours;
    let losses = envelope + bridges + ventilation;
    let gains = specific_heat_gains * useful_area;
    if losses <= 0.0 {
        return 0.0;
    }
    let ratio = gains / losses;
    let usage = if (ratio - 1.0).abs() <= k.near_one_epsilon {
        time_constant / (time_constant + 1.0)
    } else {
        let c1 = ratio.powf(time_constant);
        let c2 = ratio.powf(time_constant + 1.0);
        (1.0 - c1) / (1.0 - c2)
    };
    let energy = losses - gains * usage;
    if energy < 0.0 {
        0.0
    } else {
        energy
    }
}

/// Reference consumption from one building's audit rows. U-values are
/// rederived as coefficient over area.
pub fn reference_energy(
    building: &AuditBuildingRecord,
    components: &[AuditComponentRecord],
    time_constant: f64,
    k: &ReferenceConstants,
) -> Result<f64> {
    let mut area = [0.0; 5];
    let mut coefficient = [0.0; 5];
    let mut seen = [false; 5];
    for c in components.iter().filter(|c| c.cadastre_number == building.cadastre_number) {
        let i = c.enclosing_structure.index();
        area[i] += c.area;
        coefficient[i] += c.structure_heat_loss_coefficient;
        seen[i] = true;
    }
    let mut u = [0.0; 5];
    for i in 0..5 {
        if !seen[i] || area[i] <= 0.0 {
            return Err(Error::Domain(format!(
                "building {}: incomplete audit, component {} missing or without area",
                building.cadastre_number,
                Component::ALL[i]
            )));
        }
        u[i] = coefficient[i] / area[i];
    }
    Ok(reference_energy_scalar(
        &area,
        &u,
        building.air_exchange_rate,
        building.specific_heat_gains,
        building.useful_area,
        time_constant,
        k,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> GeneratorConfig {
        GeneratorConfig {
            n_buildings: n,
            seed: 42,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn counts() {
        let c = generate_cohort(&small(40)).unwrap();
        assert_eq!(c.land.len(), 40);
        assert_eq!(c.audit_components.len(), 200);
        assert_eq!(c.consumption.len(), 40);
        assert_eq!(c.monthly.len(), 40 * 4 * 12);
    }

    #[test]
    fn deterministic_csv() {
        let a = generate_cohort(&small(25)).unwrap();
        let b = generate_cohort(&small(25)).unwrap();
        assert_eq!(a.land_csv().unwrap(), b.land_csv().unwrap());
        assert_eq!(a.audit_components_csv().unwrap(), b.audit_components_csv().unwrap());
        assert_eq!(a.consumption_csv().unwrap(), b.consumption_csv().unwrap());
        let other = generate_cohort(&GeneratorConfig { seed: 43, ..small(25) }).unwrap();
        assert_ne!(a.land_csv().unwrap(), other.land_csv().unwrap());
    }

    #[test]
    fn prefix_stability() {
        // per-building streams: a larger cohort starts with the smaller one
        let a = generate_cohort(&small(5)).unwrap();
        let b = generate_cohort(&small(9)).unwrap();
        assert_eq!(a.land[..], b.land[..5]);
    }

    #[test]
    fn reference_zero_and_worked_example() {
        let k = ReferenceConstants::default();
        assert_eq!(reference_energy_scalar(&[0.0; 5], &[0.0; 5], 0.0, 0.0, 100.0, 1.0, &k), 0.0);
        let mut a = [0.0; 5];
        let mut u = [0.0; 5];
        a[0] = 100.0;
        u[0] = 0.5;
        let e = reference_energy_scalar(&a, &u, 0.0, 20.0, 100.0, 1.0, &k);
        assert!((e - 3101.9861008273856).abs() < 1e-9);
    }

    #[test]
    fn reference_needs_complete_audit() {
        let c = generate_cohort(&small(1)).unwrap();
        let comps: Vec<_> = c.audit_components[..4].to_vec();
        assert!(reference_energy(&c.audit_buildings[0], &comps, 3.0, &ReferenceConstants::default()).is_err());
        assert!(reference_energy(&c.audit_buildings[0], &c.audit_components, 3.0, &ReferenceConstants::default()).is_ok());
    }

    #[test]
    fn invalid_config() {
        let mut cfg = small(3);
        cfg.consumption_noise = -0.1;
        assert!(matches!(generate_cohort(&cfg), Err(Error::Config(_))));
        let mut cfg = small(3);
        cfg.series[0].floors = (4, 2);
        assert!(matches!(generate_cohort(&cfg), Err(Error::Config(_))));
    }
}

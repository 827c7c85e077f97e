//! Closed-form annual heating-energy model for a residential building.
//!
//! Heat leaves through five envelope components, thermal bridges and
//! ventilation; internal gains offset part of it through the heat gain usage
//! factor (HGUF). Everything here is a pure function, and
//! [`energy_consumption_gradient`] gives the exact partial derivatives needed
//! to backpropagate through the model.
//!
//! Units: areas in m², U-values in W/(m²·K), the air exchange rate in 1/h,
//! specific heat gains in kWh/(m²·yr) and every energy figure in kWh/yr.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPONENT_COUNT: usize = 5;
/// Length of the flattened [`EnvelopeState`]: 5 areas, 5 U-values, h, Q.
pub const STATE_DIM: usize = 2 * COMPONENT_COUNT + 2;
pub const AIR_EXCHANGE_INDEX: usize = 2 * COMPONENT_COUNT;
pub const HEAT_GAINS_INDEX: usize = 2 * COMPONENT_COUNT + 1;

/// Envelope components in their fixed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "Basement/Slab")]
    BasementSlab,
    #[serde(rename = "Roof/Attic")]
    RoofAttic,
    Walls,
    Doors,
    Windows,
}

impl Component {
    pub const ALL: [Component; COMPONENT_COUNT] = [
        Component::BasementSlab,
        Component::RoofAttic,
        Component::Walls,
        Component::Doors,
        Component::Windows,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Label used in the audit CSV `enclosing_structure` column.
    pub fn label(self) -> &'static str {
        match self {
            Component::BasementSlab => "Basement/Slab",
            Component::RoofAttic => "Roof/Attic",
            Component::Walls => "Walls",
            Component::Doors => "Doors",
            Component::Windows => "Windows",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let wanted = s.trim();
        Component::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| {
                format!(
                    "unknown enclosing structure \"{wanted}\" (expected one of {})",
                    Component::ALL.map(Component::label).join(", ")
                )
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildingType {
    Heavy,
    Light,
}

impl BuildingType {
    pub fn label(self) -> &'static str {
        match self {
            BuildingType::Heavy => "heavy",
            BuildingType::Light => "light",
        }
    }

    /// Numeric code used in the feature vector.
    pub fn code(self) -> f64 {
        match self {
            BuildingType::Heavy => 0.0,
            BuildingType::Light => 1.0,
        }
    }
}

impl fmt::Display for BuildingType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BuildingType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heavy" => Ok(BuildingType::Heavy),
            "light" => Ok(BuildingType::Light),
            other => Err(format!("unknown building type \"{other}\" (expected heavy or light)")),
        }
    }
}

/// The twelve physical quantities predicted per building.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeState {
    pub area: [f64; COMPONENT_COUNT],
    pub u_value: [f64; COMPONENT_COUNT],
    pub air_exchange_rate: f64,
    pub specific_heat_gains: f64,
}

/// Variable names in flattening order, as printed in evaluation reports.
pub const VARIABLE_NAMES: [&str; STATE_DIM] = [
    "area_Basement/slab",
    "area_Roof/attic",
    "area_Walls",
    "area_doors",
    "area_windows",
    "U_Basement/slab",
    "U_Roof/attic",
    "U_Walls",
    "U_doors",
    "U_windows",
    "air_exchange_rate",
    "specific_heat_gains",
];

impl EnvelopeState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        out[..COMPONENT_COUNT].copy_from_slice(&self.area);
        out[COMPONENT_COUNT..2 * COMPONENT_COUNT].copy_from_slice(&self.u_value);
        out[AIR_EXCHANGE_INDEX] = self.air_exchange_rate;
        out[HEAT_GAINS_INDEX] = self.specific_heat_gains;
        out
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != STATE_DIM {
            return Err(Error::dimension("envelope state", STATE_DIM, values.len()));
        }
        let mut state = EnvelopeState::default();
        state.area.copy_from_slice(&values[..COMPONENT_COUNT]);
        state
            .u_value
            .copy_from_slice(&values[COMPONENT_COUNT..2 * COMPONENT_COUNT]);
        state.air_exchange_rate = values[AIR_EXCHANGE_INDEX];
        state.specific_heat_gains = values[HEAT_GAINS_INDEX];
        Ok(state)
    }

    /// Every value clamped at zero from below.
    pub fn clamped(&self) -> Self {
        let mut values = self.to_array();
        for v in &mut values {
            *v = v.max(0.0);
        }
        EnvelopeState::from_slice(&values).expect("fixed length")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in VARIABLE_NAMES.iter().zip(self.to_array()) {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        Ok(())
    }
}

fn default_time_constants() -> BTreeMap<BuildingType, f64> {
    // Uncalibrated defaults; heavy construction stores more heat.
    BTreeMap::from([(BuildingType::Heavy, 3.0), (BuildingType::Light, 1.0)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConstants {
    /// Indoor-outdoor temperature difference, K.
    pub delta_t: f64,
    pub heating_days: f64,
    pub hours_per_day: f64,
    pub w_to_kw: f64,
    /// Thermal bridges as a fraction of envelope losses.
    pub bridge_fraction: f64,
    pub vent_coefficient: f64,
    /// Building time constant (HGUF exponent) per building type.
    pub time_constants: BTreeMap<BuildingType, f64>,
    /// Half-width of the band around r = 1 where HGUF uses its limit value.
    pub near_one_epsilon: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        PhysicsConstants {
            delta_t: 18.9,
            heating_days: 192.0,
            hours_per_day: 24.0,
            w_to_kw: 1000.0,
            bridge_fraction: 0.03,
            vent_coefficient: 0.34,
            time_constants: default_time_constants(),
            near_one_epsilon: 1e-6,
        }
    }
}

impl PhysicsConstants {
    /// Heating-season hours converted to kWh per W: 4.608 with defaults.
    pub fn degree_hour_factor(&self) -> f64 {
        self.heating_days * self.hours_per_day / self.w_to_kw
    }

    /// kWh/yr lost per W/K of heat loss coefficient.
    fn season_factor(&self) -> f64 {
        self.delta_t * self.degree_hour_factor()
    }

    pub fn time_constant(&self, building_type: BuildingType) -> Result<f64> {
        self.time_constants
            .get(&building_type)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "no building time constant configured for building type \"{building_type}\""
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_t", self.delta_t),
            ("heating_days", self.heating_days),
            ("hours_per_day", self.hours_per_day),
            ("w_to_kw", self.w_to_kw),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(0.0..1.0).contains(&self.bridge_fraction) {
            return Err(Error::Config(format!(
                "bridge_fraction must lie in [0, 1), got {}",
                self.bridge_fraction
            )));
        }
        if !(self.vent_coefficient >= 0.0) {
            return Err(Error::Config("vent_coefficient must be non-negative".into()));
        }
        if !(self.near_one_epsilon >= 0.0) {
            return Err(Error::Config("near_one_epsilon must be non-negative".into()));
        }
        for (ty, tau) in &self.time_constants {
            if !(*tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!(
                    "time constant for {ty} must be positive, got {tau}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeLoss {
    pub by_component: [f64; COMPONENT_COUNT],
    pub total: f64,
}

/// Full decomposition of the annual heating balance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub envelope_by_component: [f64; COMPONENT_COUNT],
    pub envelope_total: f64,
    pub thermal_bridges: f64,
    pub ventilation: f64,
    pub heat_loss_total: f64,
    pub heat_gains_total: f64,
    pub hguf: f64,
    pub energy_consumption: f64,
}

pub fn envelope_heat_loss(state: &EnvelopeState, consts: &PhysicsConstants) -> EnvelopeLoss {
    let factor = consts.season_factor();
    let mut by_component = [0.0; COMPONENT_COUNT];
    for (i, slot) in by_component.iter_mut().enumerate() {
        *slot = state.area[i] * state.u_value[i] * factor;
    }
    EnvelopeLoss {
        by_component,
        total: by_component.iter().sum(),
    }
}

pub fn thermal_bridge_loss(envelope_total: f64, consts: &PhysicsConstants) -> f64 {
    consts.bridge_fraction * envelope_total
}

/// Ventilation losses. The published form multiplies the useful area (not a
/// volume) by the air exchange rate.
pub fn ventilation_heat_loss(useful_area: f64, air_exchange_rate: f64, consts: &PhysicsConstants) -> f64 {
    useful_area * air_exchange_rate * consts.vent_coefficient * consts.season_factor()
}

pub fn total_heat_gains(specific_heat_gains: f64, useful_area: f64) -> f64 {
    specific_heat_gains * useful_area
}

/// HGUF as a function of the gains/losses ratio `r`.
///
/// Inside `|r - 1| <= eps` the analytic limit `tau / (tau + 1)` is returned.
pub fn hguf_from_ratio(r: f64, tau: f64, eps: f64) -> f64 {
    if (r - 1.0).abs() <= eps {
        return tau / (tau + 1.0);
    }
    let p = r.powf(tau);
    (1.0 - p) / (1.0 - p * r)
}

/// `(r * dHGUF/dr, r^2 * dHGUF/dr)`, both zero inside the near-one band.
///
/// Returned premultiplied so that `r = 0` with `tau < 1` stays finite.
fn hguf_ratio_slopes(r: f64, tau: f64, eps: f64) -> (f64, f64) {
    if (r - 1.0).abs() <= eps || r == 0.0 {
        return (0.0, 0.0);
    }
    let p = r.powf(tau);
    let p1 = p * r;
    let den = 1.0 - p1;
    let r_slope = (-tau * p * den + (tau + 1.0) * p1 * (1.0 - p)) / (den * den);
    (r_slope, r * r_slope)
}

pub fn heat_gain_usage_factor(heat_gains_total: f64, heat_loss_total: f64, tau: f64, eps: f64) -> Result<f64> {
    if !(heat_loss_total > 0.0) {
        return Err(Error::Domain(format!(
            "degenerate building: total heat loss must be positive, got {heat_loss_total}"
        )));
    }
    if !(heat_gains_total >= 0.0) {
        return Err(Error::Domain(format!(
            "heat gains must be non-negative, got {heat_gains_total}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("time constant must be positive, got {tau}")));
    }
    Ok(hguf_from_ratio(heat_gains_total / heat_loss_total, tau, eps))
}

pub fn u_value(structure_heat_loss_coefficient: f64, area: f64) -> Result<f64> {
    if !(area > 0.0) {
        return Err(Error::Domain(format!(
            "U = E/A needs a positive component area, got {area}"
        )));
    }
    if !(structure_heat_loss_coefficient >= 0.0) {
        return Err(Error::Domain(format!(
            "structure heat loss coefficient must be non-negative, got {structure_heat_loss_coefficient}"
        )));
    }
    Ok(structure_heat_loss_coefficient / area)
}

fn check_inputs(state: &EnvelopeState, useful_area: f64) -> Result<()> {
    state.validate()?;
    if !(useful_area >= 0.0 && useful_area.is_finite()) {
        return Err(Error::Domain(format!(
            "useful area must be finite and non-negative, got {useful_area}"
        )));
    }
    Ok(())
}

/// Annual heating energy consumption with its full decomposition.
pub fn energy_consumption(
    state: &EnvelopeState,
    useful_area: f64,
    building_type: BuildingType,
    consts: &PhysicsConstants,
) -> Result<LossBreakdown> {
    check_inputs(state, useful_area)?;
    let tau = consts.time_constant(building_type)?;
    Ok(breakdown(state, useful_area, tau, consts))
}

fn breakdown(state: &EnvelopeState, useful_area: f64, tau: f64, consts: &PhysicsConstants) -> LossBreakdown {
    let envelope = envelope_heat_loss(state, consts);
    let thermal_bridges = thermal_bridge_loss(envelope.total, consts);
    let ventilation = ventilation_heat_loss(useful_area, state.air_exchange_rate, consts);
    let heat_loss_total = envelope.total + thermal_bridges + ventilation;
    let heat_gains_total = total_heat_gains(state.specific_heat_gains, useful_area);

    let (hguf, energy) = if heat_loss_total > 0.0 {
        let hguf = hguf_from_ratio(heat_gains_total / heat_loss_total, tau, consts.near_one_epsilon);
        (hguf, heat_loss_total - heat_gains_total * hguf)
    } else {
        (1.0, 0.0)
    };

    LossBreakdown {
        envelope_by_component: envelope.by_component,
        envelope_total: envelope.total,
        thermal_bridges,
        ventilation,
        heat_loss_total,
        heat_gains_total,
        hguf,
        energy_consumption: energy.max(0.0),
    }
}

/// Exact gradient of annual consumption with respect to the flattened state.
///
/// The zero clamp and the degenerate zero-loss building both yield the zero
/// vector; inside the near-one band HGUF is treated as locally constant.
pub fn energy_consumption_gradient(
    state: &EnvelopeState,
    useful_area: f64,
    building_type: BuildingType,
    consts: &PhysicsConstants,
) -> Result<[f64; STATE_DIM]> {
    check_inputs(state, useful_area)?;
    let tau = consts.time_constant(building_type)?;
    Ok(energy_with_gradient(state, useful_area, tau, consts).1)
}

/// Consumption and its gradient in one pass, without precondition checks.
/// The loss path feeds clamped states through here.
pub(crate) fn energy_with_gradient(
    state: &EnvelopeState,
    useful_area: f64,
    tau: f64,
    consts: &PhysicsConstants,
) -> (LossBreakdown, [f64; STATE_DIM]) {
    let parts = breakdown(state, useful_area, tau, consts);
    let mut grad = [0.0; STATE_DIM];
    let raw_energy = parts.heat_loss_total - parts.heat_gains_total * parts.hguf;
    if !(parts.heat_loss_total > 0.0) || raw_energy <= 0.0 {
        return (parts, grad);
    }

    let r = parts.heat_gains_total / parts.heat_loss_total;
    let (r_slope, r2_slope) = hguf_ratio_slopes(r, tau, consts.near_one_epsilon);
    // E = L - G * f(G / L)
    let d_energy_d_loss = 1.0 + r2_slope;
    let d_energy_d_gains = -(parts.hguf + r_slope);

    let factor = consts.season_factor();
    let envelope_scale = (1.0 + consts.bridge_fraction) * factor;
    for i in 0..COMPONENT_COUNT {
        grad[i] = d_energy_d_loss * envelope_scale * state.u_value[i];
        grad[COMPONENT_COUNT + i] = d_energy_d_loss * envelope_scale * state.area[i];
    }
    grad[AIR_EXCHANGE_INDEX] = d_energy_d_loss * useful_area * consts.vent_coefficient * factor;
    grad[HEAT_GAINS_INDEX] = d_energy_d_gains * useful_area;
    (parts, grad)
}

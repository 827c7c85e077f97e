//! Record types for the four input CSVs and a small validating loader.
//!
//! Column names follow the source datasets exactly. Extra columns are
//! ignored; required columns must be present in the header.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::physics::{BuildingType, Component};

/// A CSV row being decoded, with its origin for error messages.
pub struct RowReader<'a> {
    source: &'a str,
    line: u64,
    columns: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl<'a> RowReader<'a> {
    fn error(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.source.to_string(),
            row: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    pub fn line(&self) -> u64 {
        self.line
    }

    /// Raw trimmed cell; `None` when the column is absent from the header.
    pub fn cell(&self, column: &str) -> Option<&'a str> {
        self.columns
            .get(column)
            .map(|&i| self.record.get(i).unwrap_or("").trim())
    }

    pub fn text(&self, column: &str) -> Result<String> {
        let value = self.cell(column).ok_or_else(|| self.error(column, "missing column"))?;
        if value.is_empty() {
            return Err(self.error(column, "empty cell"));
        }
        Ok(value.to_string())
    }

    pub fn optional_text(&self, column: &str) -> Option<String> {
        self.cell(column).filter(|v| !v.is_empty()).map(str::to_string)
    }

    pub fn parse<T>(&self, column: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.text(column)?;
        raw.parse::<T>()
            .map_err(|e| self.error(column, format!("cannot parse \"{raw}\": {e}")))
    }

    pub fn optional<T>(&self, column: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.cell(column) {
            None | Some("") => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.error(column, format!("cannot parse \"{raw}\": {e}"))),
        }
    }

    pub fn finite(&self, column: &str) -> Result<f64> {
        let v: f64 = self.parse(column)?;
        if !v.is_finite() {
            return Err(self.error(column, format!("non-finite value {v}")));
        }
        Ok(v)
    }

    pub fn positive(&self, column: &str) -> Result<f64> {
        let v = self.finite(column)?;
        if v <= 0.0 {
            return Err(self.error(column, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn non_negative(&self, column: &str) -> Result<f64> {
        let v = self.finite(column)?;
        if v < 0.0 {
            return Err(self.error(column, format!("must be non-negative, got {v}")));
        }
        Ok(v)
    }
}

/// A record type that can be decoded from one CSV row.
pub trait CsvSchema: Sized {
    const REQUIRED_COLUMNS: &'static [&'static str];

    fn from_row(row: &RowReader<'_>) -> Result<Self>;

    /// Primary key, when it must be unique within the file.
    fn unique_key(&self) -> Option<&str> {
        None
    }

    /// Extra header checks beyond the fixed required set.
    fn check_header(_columns: &HashMap<String, usize>, _source: &str) -> Result<()> {
        Ok(())
    }
}

pub fn load_dataset<T: CsvSchema>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, &path.display().to_string())
}

/// Decodes every row of `reader`. Row numbers in errors are file lines, the
/// header being line 1.
pub fn read_dataset<T: CsvSchema, R: Read>(reader: R, source: &str) -> Result<Vec<T>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let header_error = |e: csv::Error| Error::Ingestion {
        path: source.to_string(),
        row: 1,
        column: String::new(),
        message: format!("unreadable header: {e}"),
    };
    let headers = csv.headers().map_err(header_error)?.clone();
    let columns: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    for &required in T::REQUIRED_COLUMNS {
        if !columns.contains_key(required) {
            return Err(Error::Ingestion {
                path: source.to_string(),
                row: 1,
                column: required.to_string(),
                message: "missing column".into(),
            });
        }
    }
    T::check_header(&columns, source)?;

    let mut out = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for result in csv.records() {
        let record = result.map_err(|e| Error::Ingestion {
            path: source.to_string(),
            row: e.position().map(|p| p.line()).unwrap_or(0),
            column: String::new(),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = RowReader {
            source,
            line,
            columns: &columns,
            record: &record,
        };
        let item = T::from_row(&row)?;
        if let Some(key) = item.unique_key() {
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(row.error(
                    "cadastre_number",
                    format!("duplicate key \"{key}\" (first seen on row {first})"),
                ));
            }
        }
        out.push(item);
    }
    Ok(out)
}

/// General building information from the state land register.
#[derive(Clone, Debug, PartialEq)]
pub struct LandRecord {
    pub cadastre_number: String,
    pub floors: u32,
    pub useful_area: f64,
    pub total_area: f64,
    pub apartments: u32,
    pub serie: String,
    pub building_type: BuildingType,
    pub address: Option<String>,
    pub latitude_centroid: Option<f64>,
    pub longitude_centroid: Option<f64>,
    pub perimeter: Option<f64>,
    /// Opaque geometry text; never parsed.
    pub geometry: Option<String>,
}

fn floors(row: &RowReader<'_>) -> Result<u32> {
    let floors: u32 = row.parse("floors")?;
    if floors < 1 {
        return Err(row.error("floors", "a building needs at least one floor"));
    }
    Ok(floors)
}

impl CsvSchema for LandRecord {
    const REQUIRED_COLUMNS: &'static [&'static str] = &[
        "cadastre_number",
        "floors",
        "useful_area",
        "apartments",
        "serie",
        "total_area",
        "building_type",
    ];

    fn from_row(row: &RowReader<'_>) -> Result<Self> {
        Ok(LandRecord {
            cadastre_number: row.text("cadastre_number")?,
            floors: floors(row)?,
            useful_area: row.positive("useful_area")?,
            total_area: row.positive("total_area")?,
            apartments: row.parse("apartments")?,
            serie: row.text("serie")?,
            building_type: row.parse("building_type")?,
            address: row.optional_text("address"),
            latitude_centroid: row.optional("latitude_centroid")?,
            longitude_centroid: row.optional("longitude_centroid")?,
            perimeter: row.optional("perimeter")?,
            geometry: row.optional_text("geometry"),
        })
    }

    fn unique_key(&self) -> Option<&str> {
        Some(&self.cadastre_number)
    }
}

/// Building-level audit data.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditBuildingRecord {
    pub cadastre_number: String,
    pub floors: u32,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub useful_area: f64,
    pub avg_indoor_height: Option<f64>,
    pub apartments: u32,
    pub serie: String,
    pub total_area: f64,
    pub air_exchange_rate: f64,
    pub specific_heat_gains: f64,
    pub building_type: BuildingType,
}

impl CsvSchema for AuditBuildingRecord {
    const REQUIRED_COLUMNS: &'static [&'static str] = &[
        "cadastre_number",
        "floors",
        "useful_area",
        "apartments",
        "serie",
        "total_area",
        "air_exchange_rate",
        "specific_heat_gains",
        "building_type",
    ];

    fn from_row(row: &RowReader<'_>) -> Result<Self> {
        Ok(AuditBuildingRecord {
            cadastre_number: row.text("cadastre_number")?,
            floors: floors(row)?,
            length: row.optional("length")?,
            width: row.optional("width")?,
            useful_area: row.positive("useful_area")?,
            avg_indoor_height: row.optional("Avg_indoor_height")?,
            apartments: row.parse("apartments")?,
            serie: row.text("serie")?,
            total_area: row.positive("total_area")?,
            air_exchange_rate: row.non_negative("air_exchange_rate")?,
            specific_heat_gains: row.non_negative("specific_heat_gains")?,
            building_type: row.parse("building_type")?,
        })
    }

    fn unique_key(&self) -> Option<&str> {
        Some(&self.cadastre_number)
    }
}

/// One audited envelope component. Several rows may describe the same
/// (building, structure) pair; see [`super::consolidate_components`].
#[derive(Clone, Debug, PartialEq)]
pub struct AuditComponentRecord {
    pub cadastre_number: String,
    pub enclosing_structure: Component,
    pub material: Option<String>,
    pub area: f64,
    /// W/K
    pub structure_heat_loss_coefficient: f64,
    /// kWh/yr, carried only.
    pub energy_consumption: Option<f64>,
}

impl CsvSchema for AuditComponentRecord {
    const REQUIRED_COLUMNS: &'static [&'static str] = &[
        "cadastre_number",
        "enclosing_structure",
        "area",
        "structure_heat_loss_coefficient",
    ];

    fn from_row(row: &RowReader<'_>) -> Result<Self> {
        Ok(AuditComponentRecord {
            cadastre_number: row.text("cadastre_number")?,
            enclosing_structure: row.parse("enclosing_structure")?,
            material: row.optional_text("material"),
            area: row.non_negative("area")?,
            structure_heat_loss_coefficient: row.non_negative("structure_heat_loss_coefficient")?,
            energy_consumption: row.optional("energy_consumption")?,
        })
    }
}

pub const CONSUMPTION_COLUMN_PREFIX: &str = "total_energy_consumption_";

/// Annual metered heating consumption per building.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionRecord {
    pub cadastre_number: String,
    /// kWh per calendar year; only years with data are present.
    pub annual_totals: BTreeMap<u16, f64>,
}

impl ConsumptionRecord {
    /// Mean over the years present; `None` when no year has data.
    pub fn mean_annual(&self) -> Option<f64> {
        if self.annual_totals.is_empty() {
            return None;
        }
        Some(self.annual_totals.values().sum::<f64>() / self.annual_totals.len() as f64)
    }
}

fn year_columns(columns: &HashMap<String, usize>) -> Vec<(u16, String)> {
    let mut years: Vec<(u16, String)> = columns
        .keys()
        .filter_map(|name| {
            name.strip_prefix(CONSUMPTION_COLUMN_PREFIX)
                .and_then(|y| y.parse::<u16>().ok())
                .map(|y| (y, name.clone()))
        })
        .collect();
    years.sort();
    years
}

impl CsvSchema for ConsumptionRecord {
    const REQUIRED_COLUMNS: &'static [&'static str] = &["cadastre_number"];

    fn check_header(columns: &HashMap<String, usize>, source: &str) -> Result<()> {
        if year_columns(columns).is_empty() {
            return Err(Error::Ingestion {
                path: source.to_string(),
                row: 1,
                column: format!("{CONSUMPTION_COLUMN_PREFIX}<year>"),
                message: "missing column".into(),
            });
        }
        Ok(())
    }

    fn from_row(row: &RowReader<'_>) -> Result<Self> {
        let mut annual_totals = BTreeMap::new();
        for (year, column) in year_columns(row.columns) {
            if let Some(v) = row.optional::<f64>(&column)? {
                if !v.is_finite() || v < 0.0 {
                    return Err(row.error(&column, format!("must be finite and non-negative, got {v}")));
                }
                annual_totals.insert(year, v);
            }
        }
        Ok(ConsumptionRecord {
            cadastre_number: row.text("cadastre_number")?,
            annual_totals,
        })
    }

    fn unique_key(&self) -> Option<&str> {
        Some(&self.cadastre_number)
    }
}

/// Monthly metered consumption, the raw form of [`ConsumptionRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyConsumptionRow {
    pub cadastre_number: String,
    pub year: u16,
    pub month: u8,
    pub energy_consumption: f64,
}

impl CsvSchema for MonthlyConsumptionRow {
    const REQUIRED_COLUMNS: &'static [&'static str] =
        &["cadastre_number", "year", "month", "energy_consumption"];

    fn from_row(row: &RowReader<'_>) -> Result<Self> {
        let month: u8 = row.parse("month")?;
        if !(1..=12).contains(&month) {
            return Err(row.error("month", format!("month must be 1..=12, got {month}")));
        }
        Ok(MonthlyConsumptionRow {
            cadastre_number: row.text("cadastre_number")?,
            year: row.parse("year")?,
            month,
            energy_consumption: row.non_negative("energy_consumption")?,
        })
    }
}

/// Sums one building's months per year. `None` when there are no months.
pub fn aggregate_consumption(cadastre_number: &str, months: &[MonthlyConsumptionRow]) -> Option<ConsumptionRecord> {
    let mut annual_totals = BTreeMap::new();
    for m in months.iter().filter(|m| m.cadastre_number == cadastre_number) {
        *annual_totals.entry(m.year).or_insert(0.0) += m.energy_consumption;
    }
    if annual_totals.is_empty() {
        return None;
    }
    Some(ConsumptionRecord {
        cadastre_number: cadastre_number.to_string(),
        annual_totals,
    })
}

/// Aggregates every building in `months`, sorted by cadastre number.
pub fn aggregate_monthly(months: &[MonthlyConsumptionRow]) -> Vec<ConsumptionRecord> {
    let mut by_building: BTreeMap<&str, BTreeMap<u16, f64>> = BTreeMap::new();
    for m in months {
        *by_building
            .entry(m.cadastre_number.as_str())
            .or_default()
            .entry(m.year)
            .or_insert(0.0) += m.energy_consumption;
    }
    by_building
        .into_iter()
        .map(|(k, annual_totals)| ConsumptionRecord {
            cadastre_number: k.to_string(),
            annual_totals,
        })
        .collect()
}

//! Observation records: dekadal series, pixel samples, yield statistics and
//! the aligned per-crop dataset built from them.

mod aggregate;
mod dataset;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::{aggregate_pixels_to_region, filter_marginal_regions, DEFAULT_AREA_THRESHOLD};
pub use dataset::{assemble_dataset, Dataset, Sample, MAX_MISSING_SEASON_DEKADS};
pub use io::{
    parse_dekadal_csv, parse_pixel_csv, parse_yield_csv, read_dekadal_str, read_pixel_str,
    read_yield_str, write_dekadal_csv, write_dekadal_string, write_yield_csv, DEKADAL_HEADER,
    PIXEL_HEADER, YIELD_HEADER,
};

/// A 10-day period; three per calendar month, 36 per year.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dekad {
    year: i32,
    index: u8,
}

impl Dekad {
    pub fn new(year: i32, index: u8) -> Result<Self> {
        if !(1..=36).contains(&index) {
            return Err(Error::Parameter(format!(
                "dekad index {index} outside 1..=36"
            )));
        }
        Ok(Dekad { year, index })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    /// Calendar month 1..=12.
    pub fn month(&self) -> u8 {
        (self.index - 1) / 3 + 1
    }

    pub fn next(&self) -> Dekad {
        if self.index == 36 {
            Dekad {
                year: self.year + 1,
                index: 1,
            }
        } else {
            Dekad {
                year: self.year,
                index: self.index + 1,
            }
        }
    }
}

impl fmt::Display for Dekad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.year, self.index)
    }
}

/// Observed variables. Variants are declared in ascending name order so the
/// derived ordering matches the canonical CSV row order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "FPAR")]
    Fpar,
    Precipitation,
    Radiation,
    SoilMoisture,
    Temperature,
}

impl Variable {
    pub const ALL: [Variable; 5] = [
        Variable::Fpar,
        Variable::Precipitation,
        Variable::Radiation,
        Variable::SoilMoisture,
        Variable::Temperature,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variable::Fpar => "FPAR",
            Variable::Precipitation => "Precipitation",
            Variable::Radiation => "Radiation",
            Variable::SoilMoisture => "SoilMoisture",
            Variable::Temperature => "Temperature",
        }
    }

    /// Checks the physical range of a value for this variable.
    pub fn check_value(&self, value: f64) -> std::result::Result<(), String> {
        if !value.is_finite() {
            return Err(format!("non-finite {} value", self.as_str()));
        }
        match self {
            Variable::Fpar if !(0.0..=1.0).contains(&value) => {
                Err(format!("FPAR value {value} outside [0, 1]"))
            }
            Variable::Precipitation if value < 0.0 => {
                Err(format!("negative precipitation {value}"))
            }
            Variable::Radiation if value < 0.0 => Err(format!("negative radiation {value}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "FPAR" | "fpar" | "FAPAR" => Ok(Variable::Fpar),
            "SoilMoisture" | "soil_moisture" | "SM" => Ok(Variable::SoilMoisture),
            "Precipitation" | "precipitation" | "Rain" => Ok(Variable::Precipitation),
            "Temperature" | "temperature" | "T" => Ok(Variable::Temperature),
            "Radiation" | "radiation" | "Rad" => Ok(Variable::Radiation),
            other => Err(Error::Unknown {
                kind: "variable",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Crop {
    Maize,
    Soybeans,
    Sunflower,
}

impl Crop {
    pub fn as_str(&self) -> &'static str {
        match self {
            Crop::Maize => "Maize",
            Crop::Soybeans => "Soybeans",
            Crop::Sunflower => "Sunflower",
        }
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Crop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "maize" | "corn" => Ok(Crop::Maize),
            "soybeans" | "soybean" | "soy" => Ok(Crop::Soybeans),
            "sunflower" | "sunflowers" => Ok(Crop::Sunflower),
            other => Err(Error::Unknown {
                kind: "crop",
                name: other.to_string(),
            }),
        }
    }
}

/// One pixel observation with its crop-area fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelSample {
    pub pixel_id: String,
    pub region_id: String,
    pub weight: f64,
    pub dekad: Dekad,
    pub variable: Variable,
    pub value: f64,
}

impl PixelSample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(format!("weight {} outside [0, 1]", self.weight));
        }
        self.variable.check_value(self.value)
    }
}

/// Region-level dekadal values of one variable. Dekads listed in `gaps` were
/// present in the source as explicit missing values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DekadalSeries {
    pub region_id: String,
    pub variable: Variable,
    pub observations: BTreeMap<Dekad, f64>,
    pub gaps: BTreeSet<Dekad>,
}

impl DekadalSeries {
    pub fn new(region_id: impl Into<String>, variable: Variable) -> Self {
        DekadalSeries {
            region_id: region_id.into(),
            variable,
            observations: BTreeMap::new(),
            gaps: BTreeSet::new(),
        }
    }

    pub fn get(&self, dekad: Dekad) -> Option<f64> {
        self.observations.get(&dekad).copied()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Dekads in `dekads` that carry no value.
    pub fn missing_among<'a>(&self, dekads: impl IntoIterator<Item = &'a Dekad>) -> Vec<Dekad> {
        dekads
            .into_iter()
            .filter(|d| !self.observations.contains_key(d))
            .copied()
            .collect()
    }
}

/// All series, keyed by (region, variable).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesCollection {
    series: BTreeMap<(String, Variable), DekadalSeries>,
}

impl SeriesCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: DekadalSeries) {
        self.series
            .insert((series.region_id.clone(), series.variable), series);
    }

    pub fn get(&self, region_id: &str, variable: Variable) -> Option<&DekadalSeries> {
        self.series.get(&(region_id.to_string(), variable))
    }

    pub fn entry(&mut self, region_id: &str, variable: Variable) -> &mut DekadalSeries {
        self.series
            .entry((region_id.to_string(), variable))
            .or_insert_with(|| DekadalSeries::new(region_id, variable))
    }

    pub fn iter(&self) -> impl Iterator<Item = &DekadalSeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn regions(&self) -> BTreeSet<String> {
        self.series.keys().map(|(r, _)| r.clone()).collect()
    }
}

/// Official yield statistic for one (region, crop, harvest year).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldRecord {
    pub region_id: String,
    pub crop: Crop,
    pub year: i32,
    pub yield_t_ha: f64,
    pub area_share: f64,
}

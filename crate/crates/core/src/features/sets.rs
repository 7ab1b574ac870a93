use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Variable;
use crate::error::{Error, Result};

const BUILTIN_SETS: &str = include_str!("../../data/feature_sets.json");

/// Name of the set holding every monthly column.
pub const FULL_SET: &str = "RS Met SM";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Avg,
    Max,
    Min,
    Sum,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Avg, Metric::Max, Metric::Min, Metric::Sum];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Avg => "avg",
            Metric::Max => "max",
            Metric::Min => "min",
            Metric::Sum => "sum",
        }
    }
}

/// Short column prefix of a variable, as used in feature names.
pub fn variable_prefix(v: Variable) -> &'static str {
    match v {
        Variable::Fpar => "FPAR",
        Variable::SoilMoisture => "SM",
        Variable::Radiation => "Rad",
        Variable::Precipitation => "Rain",
        Variable::Temperature => "T",
    }
}

/// One (variable, metric) column family of the monthly table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureMember {
    pub variable: Variable,
    pub metric: Metric,
}

impl FeatureMember {
    /// The eight admissible families.
    pub const ALLOWED: [FeatureMember; 8] = [
        FeatureMember { variable: Variable::Fpar, metric: Metric::Avg },
        FeatureMember { variable: Variable::Fpar, metric: Metric::Max },
        FeatureMember { variable: Variable::SoilMoisture, metric: Metric::Avg },
        FeatureMember { variable: Variable::Radiation, metric: Metric::Sum },
        FeatureMember { variable: Variable::Precipitation, metric: Metric::Sum },
        FeatureMember { variable: Variable::Temperature, metric: Metric::Avg },
        FeatureMember { variable: Variable::Temperature, metric: Metric::Min },
        FeatureMember { variable: Variable::Temperature, metric: Metric::Max },
    ];

    pub fn column(&self, month: u8) -> String {
        format!("{}_M{month}", self)
    }
}

impl fmt::Display for FeatureMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", variable_prefix(self.variable), self.metric.as_str())
    }
}

impl FromStr for FeatureMember {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMember::ALLOWED
            .iter()
            .find(|m| m.to_string() == s)
            .copied()
            .ok_or_else(|| Error::Unknown {
                kind: "feature member",
                name: s.to_string(),
            })
    }
}

impl Serialize for FeatureMember {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureMember {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSetSpec {
    pub name: String,
    pub members: Vec<FeatureMember>,
}

impl FeatureSetSpec {
    pub fn columns(&self, cutoff_month: u8) -> Vec<String> {
        self.members
            .iter()
            .flat_map(|m| (1..=cutoff_month).map(move |k| m.column(k)))
            .collect()
    }
}

/// The named feature sets available to a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetCatalog {
    sets: Vec<FeatureSetSpec>,
}

impl FeatureSetCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_SETS).expect("bundled feature sets are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sets: Vec<FeatureSetSpec> = serde_json::from_str(text)?;
        let catalog = FeatureSetCatalog { sets };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for s in &self.sets {
            if s.members.is_empty() {
                return Err(Error::Parameter(format!("feature set `{}` is empty", s.name)));
            }
            if !names.insert(s.name.as_str()) {
                return Err(Error::Parameter(format!("feature set `{}` defined twice", s.name)));
            }
            let unique: std::collections::BTreeSet<_> = s.members.iter().collect();
            if unique.len() != s.members.len() {
                return Err(Error::Parameter(format!("feature set `{}` repeats a member", s.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&FeatureSetSpec> {
        self.sets.iter().find(|s| s.name == name).ok_or_else(|| Error::Unknown {
            kind: "feature set",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.sets.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureSetSpec> {
        self.sets.iter()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

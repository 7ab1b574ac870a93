//! Optional feature selection and reduction stages, selected by name.

mod mrmr;
mod pca;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use mrmr::{mrmr_select, pearson};
pub use pca::{pca_fit, PcaModel};

pub const DEFAULT_MRMR_K: usize = 10;
pub const DEFAULT_PCA_FRACTION: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerKind {
    None,
    Mrmr,
    Pca,
}

impl ReducerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReducerKind::None => "none",
            ReducerKind::Mrmr => "mrmr",
            ReducerKind::Pca => "pca",
        }
    }
}

/// One reducer with its parameter: a feature count for MRMR, a variance
/// fraction for PCA, ignored otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducerChoice {
    pub kind: ReducerKind,
    pub k: f64,
}

impl ReducerChoice {
    pub fn none() -> Self {
        ReducerChoice { kind: ReducerKind::None, k: 0.0 }
    }

    pub fn mrmr(k: usize) -> Self {
        ReducerChoice { kind: ReducerKind::Mrmr, k: k as f64 }
    }

    pub fn pca(fraction: f64) -> Self {
        ReducerChoice { kind: ReducerKind::Pca, k: fraction }
    }

    pub fn default_for(kind: ReducerKind) -> Self {
        match kind {
            ReducerKind::None => Self::none(),
            ReducerKind::Mrmr => Self::mrmr(DEFAULT_MRMR_K),
            ReducerKind::Pca => Self::pca(DEFAULT_PCA_FRACTION),
        }
    }
}

impl fmt::Display for ReducerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ReducerKind::None => f.write_str("none"),
            kind => write!(f, "{}({})", kind.as_str(), self.k),
        }
    }
}

/// A reduction stage. Fitting sees training rows only.
pub trait Reducer: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Box<dyn FittedReducer>>;
}

pub trait FittedReducer: Send + Sync + fmt::Debug {
    fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix>;
    /// JSON description for the run report.
    fn audit(&self) -> serde_json::Value;
}

struct Identity;

#[derive(Debug)]
struct FittedIdentity;

impl Reducer for Identity {
    fn name(&self) -> &'static str {
        "none"
    }

    fn fit(&self, _x: &FeatureMatrix, _y: &[f64]) -> Result<Box<dyn FittedReducer>> {
        Ok(Box::new(FittedIdentity))
    }
}

impl FittedReducer for FittedIdentity {
    fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        Ok(x.clone())
    }

    fn audit(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "none" })
    }
}

struct Mrmr {
    k: usize,
}

#[derive(Debug)]
struct FittedMrmr {
    selected: Vec<String>,
}

impl Reducer for Mrmr {
    fn name(&self) -> &'static str {
        "mrmr"
    }

    fn fit(&self, x: &FeatureMatrix, y: &[f64]) -> Result<Box<dyn FittedReducer>> {
        let mut selected = mrmr_select(x, y, self.k)?;
        for j in x.indices_where(|k| k.is_categorical()) {
            selected.push(x.columns()[j].clone());
        }
        Ok(Box::new(FittedMrmr { selected }))
    }
}

impl FittedReducer for FittedMrmr {
    fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        x.select_named(&self.selected)
    }

    fn audit(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "mrmr", "selected": self.selected })
    }
}

struct Pca {
    fraction: f64,
}

impl Reducer for Pca {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn fit(&self, x: &FeatureMatrix, _y: &[f64]) -> Result<Box<dyn FittedReducer>> {
        Ok(Box::new(pca_fit(x, self.fraction)?))
    }
}

impl FittedReducer for PcaModel {
    fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.transform(x)
    }

    fn audit(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).unwrap_or_default();
        v["kind"] = "pca".into();
        v
    }
}

type Factory = fn(f64) -> Result<Box<dyn Reducer>>;

/// Name-keyed reducer constructors.
pub struct ReducerRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Default for ReducerRegistry {
    fn default() -> Self {
        let mut r = ReducerRegistry {
            factories: BTreeMap::new(),
        };
        r.register("none", |_| Ok(Box::new(Identity)));
        r.register("mrmr", |k| {
            if k < 1.0 {
                return Err(Error::Parameter(format!("mrmr k must be positive, got {k}")));
            }
            Ok(Box::new(Mrmr { k: k as usize }))
        });
        r.register("pca", |f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Parameter(format!("pca variance fraction must lie in (0,1], got {f}")));
            }
            Ok(Box::new(Pca { fraction: f }))
        });
        r
    }
}

impl ReducerRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, choice: &ReducerChoice) -> Result<Box<dyn Reducer>> {
        let name = choice.kind.as_str();
        let f = self.factories.get(name).ok_or_else(|| Error::Unknown {
            kind: "reducer",
            name: name.to_string(),
        })?;
        f(choice.k)
    }
}

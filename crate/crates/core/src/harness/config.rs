use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bridge::BackendSpec;
use crate::data::Crop;
use crate::error::{Error, Result};
use crate::features::FULL_SET;
use crate::models::{HyperParams, ModelKind};
use crate::reduce::{ReducerChoice, ReducerKind};

/// One point of the configuration cross-product. `hyperparams` is filled
/// once a grid entry has been selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub index: usize,
    pub model: ModelKind,
    pub feature_set: String,
    pub use_trend: bool,
    pub use_ohe: bool,
    pub reducer: ReducerChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<HyperParams>,
}

impl PipelineConfig {
    /// Key of the feature preparation this config needs; configs sharing a
    /// key share their design matrices.
    pub(crate) fn prep_key(&self) -> String {
        format!("{}|{}|{}|{}", self.feature_set, self.use_trend, self.use_ohe, self.reducer)
    }

    pub fn label(&self) -> String {
        if self.model.is_baseline() {
            return self.model.name().to_string();
        }
        let mut s = format!(
            "{}|{}|{}|{}|{}",
            self.model.name(),
            self.feature_set,
            if self.use_trend { "trend" } else { "notrend" },
            if self.use_ohe { "ohe" } else { "noohe" },
            self.reducer
        );
        if let Some(h) = &self.hyperparams {
            s.push('|');
            s.push_str(&h.to_string());
        }
        s
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}", self.index, self.label())
    }
}

/// Option axes crossed with every regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerateOptions {
    pub feature_sets: Vec<String>,
    pub trend: Vec<bool>,
    pub ohe: Vec<bool>,
    pub reducers: Vec<ReducerChoice>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            feature_sets: vec![FULL_SET.to_string()],
            trend: vec![false, true],
            ohe: vec![false, true],
            reducers: vec![
                ReducerChoice::default_for(ReducerKind::None),
                ReducerChoice::default_for(ReducerKind::Mrmr),
                ReducerChoice::default_for(ReducerKind::Pca),
            ],
        }
    }
}

impl EnumerateOptions {
    /// Full feature set, no covariates, no reducer.
    pub fn none() -> Self {
        EnumerateOptions {
            feature_sets: vec![FULL_SET.to_string()],
            trend: vec![false],
            ohe: vec![false],
            reducers: vec![ReducerChoice::none()],
        }
    }
}

/// Cross-product of models and option axes, model-major, in a fixed order.
/// Baselines contribute one config each since they ignore every option.
pub fn enumerate_configs(models: &[ModelKind], opts: &EnumerateOptions) -> Vec<PipelineConfig> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &model in models {
        if !seen.insert(model) {
            log::warn!("event=duplicate_model model={model} action=ignored");
            continue;
        }
        if model.is_baseline() {
            out.push(PipelineConfig {
                index: out.len(),
                model,
                feature_set: String::new(),
                use_trend: false,
                use_ohe: false,
                reducer: ReducerChoice::none(),
                hyperparams: None,
            });
            continue;
        }
        for fs in &opts.feature_sets {
            for &use_trend in &opts.trend {
                for &use_ohe in &opts.ohe {
                    for &reducer in &opts.reducers {
                        out.push(PipelineConfig {
                            index: out.len(),
                            model,
                            feature_set: fs.clone(),
                            use_trend,
                            use_ohe,
                            reducer,
                            hyperparams: None,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Replicate unit of the significance tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateUnit {
    /// One rRMSEp value per outer year.
    #[default]
    PerYear,
    /// One relative absolute error per sample.
    PerSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PheConfig {
    pub pool_size: usize,
    #[serde(default)]
    pub time_budget_s: Option<f64>,
}

/// Run configuration file. Command-line flags override these values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub crop: Crop,
    #[serde(default = "default_cutoff")]
    pub cutoff_month: u8,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub options: EnumerateOptions,
    /// Per-model grid overrides keyed by model name.
    #[serde(default)]
    pub grids: BTreeMap<String, Vec<HyperParams>>,
    #[serde(default)]
    pub backend: Option<BackendSpec>,
    #[serde(default)]
    pub phe: Option<PheConfig>,
    #[serde(default)]
    pub dekadal: Option<PathBuf>,
    #[serde(default)]
    pub pixels: Option<PathBuf>,
    pub yields: Option<PathBuf>,
    #[serde(default)]
    pub feature_sets: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub replicate: ReplicateUnit,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_threshold")]
    pub area_threshold: f64,
}

fn default_cutoff() -> u8 {
    crate::features::DEFAULT_CUTOFF_MONTH
}

fn default_models() -> Vec<String> {
    ModelKind::REGRESSORS.iter().map(|m| m.name().to_string()).collect()
}

fn default_baselines() -> Vec<String> {
    ModelKind::BASELINES.iter().map(|m| m.name().to_string()).collect()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    0.05
}

fn default_threshold() -> f64 {
    crate::data::DEFAULT_AREA_THRESHOLD
}

impl RunConfig {
    pub fn new(crop: Crop) -> Self {
        serde_json::from_value(serde_json::json!({ "crop": crop, "yields": null })).expect("defaults deserialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.cutoff_month) {
            return Err(Error::Parameter(format!("cutoff_month must lie in 1..=8, got {}", self.cutoff_month)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        self.model_kinds()?;
        self.baseline_kinds()?;
        for name in self.grids.keys() {
            name.parse::<ModelKind>()?;
        }
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        let kinds = self.models.iter().map(|m| m.parse()).collect::<Result<Vec<ModelKind>>>()?;
        if let Some(b) = kinds.iter().find(|k| k.is_baseline()) {
            return Err(Error::Parameter(format!("`{b}` is a baseline; list it under `baselines`")));
        }
        Ok(kinds)
    }

    pub fn baseline_kinds(&self) -> Result<Vec<ModelKind>> {
        let kinds = self.baselines.iter().map(|m| m.parse()).collect::<Result<Vec<ModelKind>>>()?;
        if let Some(b) = kinds.iter().find(|k| !k.is_baseline()) {
            return Err(Error::Parameter(format!("`{b}` is not a baseline")));
        }
        Ok(kinds)
    }

    pub fn grid_overrides(&self) -> Result<BTreeMap<ModelKind, Vec<HyperParams>>> {
        self.grids
            .iter()
            .map(|(k, v)| {
                if v.is_empty() {
                    return Err(Error::Parameter(format!("empty grid for `{k}`")));
                }
                Ok((k.parse()?, v.clone()))
            })
            .collect()
    }
}

//! Configuration enumeration, nested LOYO hindcasting, backend runs and
//! operational forecasts.

mod backend;
mod config;
mod explain;
mod forecast;
mod hindcast;
mod panel;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Crop;
use crate::features::{FeatureMatrix, FeatureSetCatalog, DEFAULT_CUTOFF_MONTH};
use crate::models::{HyperParams, ModelKind};
use crate::stats::{self, AnovaResult, TukeyResult};

pub use backend::{greedy_ensemble, posthoc_ensemble, run_backend_default, PheFold, PheMember, BACKEND_QUANTILES, PHE_PATIENCE};
pub use config::{enumerate_configs, EnumerateOptions, PheConfig, PipelineConfig, ReplicateUnit, RunConfig};
pub use explain::explain_pipeline;
pub use forecast::{operational_forecast, ForecastReport, RegionForecast};
pub use hindcast::{nested_loyo_hindcast, select_configs, SELECTED_LABEL};
pub use panel::{lint_leakage, BACKEND_REGION_COLUMN, LEAK_THRESHOLD};

/// Seed used when neither the run configuration nor the environment sets one.
pub const DEFAULT_SEED: u64 = 20_240_401;

#[derive(Clone, Debug)]
pub struct HindcastOptions {
    pub cutoff_month: u8,
    pub seed: u64,
    /// Grid overrides; models not listed use their default grid.
    pub grids: BTreeMap<ModelKind, Vec<HyperParams>>,
    /// Outer years to evaluate; all dataset years when `None`.
    pub outer_years: Option<Vec<i32>>,
    /// User columns aligned with the dataset samples.
    pub extra: Option<FeatureMatrix>,
    pub catalog: Option<FeatureSetCatalog>,
    pub replicate: ReplicateUnit,
    pub alpha: f64,
    /// Record every inner split in the report.
    pub audit: bool,
}

impl Default for HindcastOptions {
    fn default() -> Self {
        HindcastOptions {
            cutoff_month: DEFAULT_CUTOFF_MONTH,
            seed: DEFAULT_SEED,
            grids: BTreeMap::new(),
            outer_years: None,
            extra: None,
            catalog: None,
            replicate: ReplicateUnit::PerYear,
            alpha: 0.05,
            audit: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub region_id: String,
    pub year: i32,
    pub observed: f64,
    pub predicted: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedConfig {
    pub config_index: usize,
    pub grid_index: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_year: i32,
    pub predictions: Vec<SamplePrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<SelectedConfig>,
    /// Pooled inner validation RMSE of the selected config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FoldResult {
    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearScore {
    pub year: i32,
    pub rrmsep: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub label: String,
    /// `baseline`, `regressor`, `selected` or `backend`.
    pub role: String,
    pub folds: Vec<FoldResult>,
    #[serde(default)]
    pub pooled_rrmsep: Option<f64>,
    #[serde(default)]
    pub yearly: Vec<YearScore>,
    #[serde(default)]
    pub failed_folds: usize,
    #[serde(default)]
    pub letters: Option<String>,
}

impl ModelResult {
    pub fn new(label: &str, role: &str, folds: Vec<FoldResult>) -> Self {
        ModelResult {
            label: label.to_string(),
            role: role.to_string(),
            folds,
            pooled_rrmsep: None,
            yearly: Vec::new(),
            failed_folds: 0,
            letters: None,
        }
    }

    pub fn predictions(&self) -> impl Iterator<Item = &SamplePrediction> {
        self.folds.iter().filter(|f| !f.is_failed()).flat_map(|f| f.predictions.iter())
    }

    fn score(&mut self, crop_mean: f64) {
        self.failed_folds = self.folds.iter().filter(|f| f.is_failed()).count();
        let (p, o): (Vec<f64>, Vec<f64>) = self.predictions().map(|s| (s.predicted, s.observed)).unzip();
        self.pooled_rrmsep = stats::rrmsep(&p, &o, crop_mean).ok();
        self.yearly = self
            .folds
            .iter()
            .filter(|f| !f.is_failed() && !f.predictions.is_empty())
            .filter_map(|f| {
                let (p, o): (Vec<f64>, Vec<f64>) = f.predictions.iter().map(|s| (s.predicted, s.observed)).unzip();
                stats::rrmsep(&p, &o, crop_mean).ok().map(|r| YearScore {
                    year: f.test_year,
                    rrmsep: r,
                })
            })
            .collect();
    }

    /// Significance-test replicates under `unit`.
    pub fn replicates(&self, unit: ReplicateUnit, crop_mean: f64) -> Vec<f64> {
        match unit {
            ReplicateUnit::PerYear => self.yearly.iter().map(|y| y.rrmsep).collect(),
            ReplicateUnit::PerSample => self
                .predictions()
                .map(|s| 100.0 * (s.predicted - s.observed).abs() / crop_mean)
                .collect(),
        }
    }

    pub fn mean_sd(&self) -> Option<(f64, f64)> {
        if self.yearly.is_empty() {
            return None;
        }
        let n = self.yearly.len() as f64;
        let m = self.yearly.iter().map(|y| y.rrmsep).sum::<f64>() / n;
        let sd = if self.yearly.len() > 1 {
            (self.yearly.iter().map(|y| (y.rrmsep - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some((m, sd))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsBlock {
    pub replicate: ReplicateUnit,
    pub groups: Vec<String>,
    #[serde(default)]
    pub anova: Option<AnovaResult>,
    #[serde(default)]
    pub tukey: Option<TukeyResult>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

impl Provenance {
    fn new(opts: &HindcastOptions, configs: &[PipelineConfig]) -> Self {
        let fingerprint = serde_json::json!({
            "configs": configs,
            "grids": opts.grids.iter().map(|(k, v)| (k.name(), v)).collect::<BTreeMap<_, _>>(),
            "cutoff": opts.cutoff_month,
            "outer": opts.outer_years,
            "seed": opts.seed,
            "extra": opts.extra.as_ref().map(|x| x.columns().to_vec()),
            "catalog": opts.catalog,
        });
        let digest = Sha256::digest(fingerprint.to_string().as_bytes());
        Provenance {
            seed: opts.seed,
            config_hash: hex::encode(digest),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// One inner split as seen by the leakage audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub held_out: [i32; 2],
    pub train_ids: Vec<u64>,
    pub eval_ids: Vec<u64>,
    /// Years whose labels the split could read.
    pub label_years: Vec<i32>,
}

/// Wall-clock figures, kept out of the report so it stays reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_s: f64,
    pub inner_pairs_s: f64,
    pub outer_folds_s: f64,
    pub n_pairs: usize,
    pub backend_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindcastReport {
    pub crop: Crop,
    pub cutoff_month: u8,
    pub crop_mean: f64,
    pub years: Vec<i32>,
    pub n_configs: usize,
    pub models: Vec<ModelResult>,
    pub stats: Option<StatsBlock>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<SplitAudit>,
    #[serde(skip)]
    pub timings: Timings,
}

impl HindcastReport {
    pub fn model(&self, label: &str) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.label == label)
    }

    /// Adds a backend's folds and refreshes scores and tests.
    pub fn add_model(&mut self, label: &str, role: &str, folds: Vec<FoldResult>) {
        self.models.retain(|m| m.label != label);
        self.models.push(ModelResult::new(label, role, folds));
        let unit = self.stats.as_ref().map_or(ReplicateUnit::PerYear, |s| s.replicate);
        let alpha = self.stats.as_ref().and_then(|s| s.tukey.as_ref()).map_or(0.05, |t| t.alpha);
        self.score_and_test(unit, alpha);
    }

    /// Scores every model, then runs ANOVA and Tukey HSD on the replicates.
    pub fn score_and_test(&mut self, unit: ReplicateUnit, alpha: f64) {
        for m in &mut self.models {
            m.score(self.crop_mean);
            m.letters = None;
        }
        let groups: Vec<(usize, Vec<f64>)> = self
            .models
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.replicates(unit, self.crop_mean)))
            .filter(|(_, r)| r.len() >= 2)
            .collect();
        let mut block = StatsBlock {
            replicate: unit,
            groups: groups.iter().map(|(i, _)| self.models[*i].label.clone()).collect(),
            anova: None,
            tukey: None,
            note: None,
        };
        let values: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
        match stats::anova_oneway(&values).and_then(|a| Ok((a, stats::tukey_hsd(&values, alpha)?))) {
            Ok((a, t)) => {
                for ((i, _), l) in groups.iter().zip(&t.letters) {
                    self.models[*i].letters = Some(l.clone());
                }
                block.anova = Some(a);
                block.tukey = Some(t);
            }
            Err(e) => {
                log::warn!("event=stats_skipped reason={e}");
                block.note = Some(e.to_string());
            }
        }
        self.stats = Some(block);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

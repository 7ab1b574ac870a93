//! Operational forecasts for an unlabelled season.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hindcast::{baseline_predict, baseline_records, refit_predict};
use super::panel::Panel;
use super::{HindcastOptions, PipelineConfig, BACKEND_QUANTILES};
use crate::bridge::{fit_predict, Backend, RequestOptions, TestBlock, TrainBlock};
use crate::data::{Crop, Dataset, Variable, MAX_MISSING_SEASON_DEKADS};
use crate::error::{Error, Result};
use crate::features::FeatureSetCatalog;
use crate::models::Prediction;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionForecast {
    pub region_id: String,
    pub model: String,
    pub mean: f64,
    #[serde(default)]
    pub interval: Option<(f64, f64)>,
    /// Externally published estimate for comparison.
    #[serde(default)]
    pub external: Option<f64>,
    /// 100·(mean − external)/external.
    #[serde(default)]
    pub pct_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub crop: Crop,
    pub target_year: i32,
    pub cutoff_month: u8,
    /// (label, resolved pipeline) per model.
    pub pipelines: Vec<(String, String)>,
    pub rows: Vec<RegionForecast>,
}

impl ForecastReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("region_id,model,mean,low,high,external,pct_diff\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.region_id,
                r.model,
                r.mean,
                opt(r.interval.map(|i| i.0)),
                opt(r.interval.map(|i| i.1)),
                opt(r.external),
                opt(r.pct_diff)
            ));
        }
        out
    }
}

/// The target season needs data through the cutoff; gaps up to the exclusion
/// limit are climatology-filled as for labelled samples.
fn check_target_coverage(dataset: &Dataset, keys: &[(String, i32)], cutoff: u8) -> Result<()> {
    let mut problems = Vec::new();
    for (region, year) in keys {
        let season = dataset.window.dekads(*year, cutoff);
        let short: Vec<&str> = Variable::ALL
            .iter()
            .filter(|v| {
                let gaps = dataset.series.get(region, **v).map_or(season.len(), |s| s.missing_among(&season).len());
                gaps > MAX_MISSING_SEASON_DEKADS
            })
            .map(|v| v.as_str())
            .collect();
        if !short.is_empty() {
            problems.push(format!("{region}/{year} ({})", short.join(", ")));
        }
    }
    match problems.len() {
        0 => Ok(()),
        n => {
            let shown = problems.iter().take(4).cloned().collect::<Vec<_>>().join("; ");
            let more = if n > 4 { format!(" and {} more", n - 4) } else { String::new() };
            Err(Error::Coverage(format!(
                "more than {MAX_MISSING_SEASON_DEKADS} dekads missing through month {cutoff} for {shown}{more}"
            )))
        }
    }
}

/// Refits each chosen pipeline on every labelled year and predicts each
/// region of `target_year`. A backend, when given, is called once in default
/// mode under the label "backend".
pub fn operational_forecast(
    dataset: &Dataset,
    chosen: &[(String, PipelineConfig)],
    target_year: i32,
    opts: &HindcastOptions,
    backend: Option<&mut dyn Backend>,
    external: &BTreeMap<String, f64>,
) -> Result<ForecastReport> {
    if dataset.years.contains(&target_year) {
        return Err(Error::AlreadyLabelled(target_year));
    }
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let keys: Vec<(String, i32)> = dataset.regions.iter().map(|r| (r.clone(), target_year)).collect();
    check_target_coverage(dataset, &keys, opts.cutoff_month)?;
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &keys)?;
    let train = panel.train_rows(&[]);
    let target: Vec<usize> = (dataset.len()..panel.n()).collect();
    let table = panel.table(&train)?;
    let fit_seed = seed::derive(opts.seed, &[0x464f_5245, target_year as u64]);

    let mut rows = Vec::new();
    let mut pipelines = Vec::new();
    let mut push = |label: &str, preds: &[Prediction]| {
        for (&i, p) in target.iter().zip(preds) {
            let region = &panel.keys[i].0;
            let ext = external.get(region).copied();
            rows.push(RegionForecast {
                region_id: region.clone(),
                model: label.to_string(),
                mean: p.mean,
                interval: p.interval,
                external: ext,
                pct_diff: ext.filter(|e| *e != 0.0).map(|e| 100.0 * (p.mean - e) / e),
            });
        }
    };
    for (label, cfg) in chosen {
        let preds = if cfg.model.is_baseline() {
            baseline_predict(cfg.model, &baseline_records(&panel, &table, &train), &baseline_records(&panel, &table, &target))?
        } else {
            let params = cfg
                .hyperparams
                .as_ref()
                .ok_or_else(|| Error::Parameter(format!("pipeline {} has no selected hyperparameters", cfg.label())))?;
            refit_predict(&panel, &table, cfg, params, &train, &target, fit_seed)?
        };
        pipelines.push((label.clone(), cfg.label()));
        push(label, &preds);
    }
    if let Some(b) = backend {
        let rows_all: Vec<usize> = train.iter().chain(&target).copied().collect();
        let m = panel.backend_block(&table, &train, &rows_all)?;
        let labels: Vec<f64> = train.iter().map(|&i| panel.labels[i]).collect();
        let row = |i: usize| m.row(i).to_vec();
        let tr = TrainBlock {
            x: (0..train.len()).map(row).collect(),
            y: labels,
            column_names: m.columns().to_vec(),
            categorical_columns: m.indices_where(|k| k.is_categorical()).iter().map(|&j| m.columns()[j].clone()).collect(),
        };
        let te = TestBlock {
            x: (train.len()..m.n_rows()).map(row).collect(),
        };
        let p = fit_predict(
            b,
            tr,
            te,
            RequestOptions {
                quantiles: BACKEND_QUANTILES.to_vec(),
                seed: fit_seed,
                time_budget_s: None,
            },
        )?;
        let lo = p.quantiles.first().map(|q| q.1.clone());
        let hi = p.quantiles.last().map(|q| q.1.clone());
        let preds: Vec<Prediction> = p
            .mean
            .iter()
            .enumerate()
            .map(|(k, &mean)| Prediction {
                mean,
                interval: lo.as_ref().zip(hi.as_ref()).map(|(l, h)| (l[k], h[k])),
                quantiles: None,
            })
            .collect();
        pipelines.push(("backend".into(), format!("{} default", b.name())));
        push("backend", &preds);
    }
    Ok(ForecastReport {
        crop: dataset.crop,
        target_year,
        cutoff_month: opts.cutoff_month,
        pipelines,
        rows,
    })
}

//! Attributions for a resolved pipeline refitted on every labelled year.

use super::panel::Panel;
use super::{HindcastOptions, PipelineConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{shapley_auto, Attribution};
use crate::features::FeatureSetCatalog;
use crate::models::{Matrix, ModelRegistry};
use crate::seed;

/// Attributions for every labelled sample, over the pipeline's model inputs
/// (after scaling and reduction), with region indicators summed into one
/// `adm_name` value. The background set is the training matrix.
pub fn explain_pipeline(dataset: &Dataset, cfg: &PipelineConfig, opts: &HindcastOptions, n_permutations: usize) -> Result<Vec<Attribution>> {
    if cfg.model.is_baseline() {
        return Err(Error::Parameter("baselines read no features to attribute".into()));
    }
    let params = cfg
        .hyperparams
        .as_ref()
        .ok_or_else(|| Error::Parameter(format!("pipeline {} has no selected hyperparameters", cfg.label())))?;
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &[])?;
    let train = panel.train_rows(&[]);
    let table = panel.table(&train)?;
    let p = panel.prepare(&table, cfg, &train, &train)?;
    log::debug!("event=explain_inputs audit={}", p.audit);
    let fit_seed = seed::derive(opts.seed, &[0x4558_504c]);
    let model = ModelRegistry::default().get(cfg.model.name())?.fit(&p.train, params, fit_seed)?;
    let f = |x: &Matrix| model.predict_mean(x);
    let names = p.columns.clone();
    let grouped = p.kinds.iter().any(|k| k.is_categorical());
    train
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let id = format!("{}/{}", panel.keys[i].0, panel.keys[i].1);
            let a = shapley_auto(&f, p.eval.row(k), &p.train.x, &names, &id, n_permutations, seed::derive(fit_seed, &[i as u64]))?;
            Ok(if grouped { a.with_regions_grouped() } else { a })
        })
        .collect()
}

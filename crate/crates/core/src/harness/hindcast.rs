//! Nested leave-one-year-out hindcasting.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use super::panel::{Panel, Prepared};
use super::{
    FoldResult, HindcastOptions, HindcastReport, ModelResult, PipelineConfig, Provenance, SamplePrediction,
    SelectedConfig, SplitAudit, Timings,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{FeatureSetCatalog, MonthlyTable};
use crate::models::{BaselineRecord, BaselineRegistry, HyperParams, ModelKind, ModelRegistry, Prediction};
use crate::seed;

/// Label of the overall inner-loop winner.
pub const SELECTED_LABEL: &str = "ML (selected)";

/// Predictions of every (config, grid entry) on one split's evaluation rows.
/// `None` marks a failed fit.
pub(crate) struct SplitPredictions {
    pub eval: Vec<usize>,
    pub preds: Vec<Vec<Option<Vec<f64>>>>,
}

pub(crate) fn grid_for(opts: &HindcastOptions, registry: &ModelRegistry, kind: ModelKind) -> Result<Vec<HyperParams>> {
    if let Some(g) = opts.grids.get(&kind) {
        return Ok(g.clone());
    }
    Ok(registry.get(kind.name())?.default_grid())
}

/// Fits every regressor config on `train` and predicts `eval`.
pub(crate) fn evaluate_split(
    panel: &Panel,
    configs: &[PipelineConfig],
    grids: &[Vec<HyperParams>],
    train: &[usize],
    eval: &[usize],
    split_seed: u64,
) -> Result<SplitPredictions> {
    let registry = ModelRegistry::default();
    let table = panel.table(train)?;
    let mut prepared: BTreeMap<String, Option<Prepared>> = BTreeMap::new();
    let mut preds = Vec::with_capacity(configs.len());
    for (cfg, grid) in configs.iter().zip(grids) {
        let key = cfg.prep_key();
        if !prepared.contains_key(&key) {
            let p = match panel.prepare(&table, cfg, train, eval) {
                Ok(p) => Some(p),
                Err(e @ Error::Leakage { .. }) => return Err(e),
                Err(e) => {
                    log::warn!("event=prepare_failed config={} error={e}", cfg.label());
                    None
                }
            };
            prepared.insert(key.clone(), p);
        }
        let Some(p) = &prepared[&key] else {
            preds.push(vec![None; grid.len()]);
            continue;
        };
        let model = registry.get(cfg.model.name())?;
        let fits = model.fit_grid(&p.train, grid, seed::derive(split_seed, &[cfg.index as u64]));
        preds.push(
            fits.into_iter()
                .zip(grid)
                .map(|(f, h)| match f {
                    Ok(m) => {
                        let v = m.predict_mean(&p.eval);
                        v.iter().all(|x| x.is_finite()).then_some(v)
                    }
                    Err(e) => {
                        log::debug!("event=fit_failed config={} params={h} error={e}", cfg.label());
                        None
                    }
                })
                .collect(),
        );
    }
    Ok(SplitPredictions { eval: eval.to_vec(), preds })
}

fn pair_seed(base: u64, a: i32, b: i32) -> u64 {
    seed::derive(base, &[0x5041_4952, a as u64, b as u64])
}

fn refit_seed(base: u64, year: i32) -> u64 {
    seed::derive(base, &[0x5245_4649, year as u64])
}

/// Inner selection scores: pooled RMSE over validation years, per (config, grid entry).
pub(crate) struct InnerScores {
    pub scores: Vec<Vec<f64>>,
}

impl InnerScores {
    /// Lowest score among configs accepted by `filter`; ties go to the lower
    /// config index, then the lower grid index.
    pub fn best(&self, filter: impl Fn(usize) -> bool) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (c, row) in self.scores.iter().enumerate() {
            if !filter(c) {
                continue;
            }
            for (g, &s) in row.iter().enumerate() {
                if s.is_finite() && best.is_none_or(|(_, _, b)| s < b) {
                    best = Some((c, g, s));
                }
            }
        }
        best
    }
}

fn rmse(p: &[f64], o: &[f64]) -> f64 {
    (p.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
}

/// Pools validation predictions per (config, grid) across `splits`, each
/// contributing only its rows in `validation_rows`.
pub(crate) fn inner_scores(panel: &Panel, splits: &[(&SplitPredictions, Vec<usize>)], shape: &[usize]) -> InnerScores {
    let mut scores = Vec::with_capacity(shape.len());
    for (c, &n_grid) in shape.iter().enumerate() {
        let mut row = Vec::with_capacity(n_grid);
        for g in 0..n_grid {
            let mut p = Vec::new();
            let mut o = Vec::new();
            let mut ok = true;
            for (sp, rows) in splits {
                let Some(v) = &sp.preds[c][g] else {
                    ok = false;
                    break;
                };
                for &r in rows {
                    let pos = sp.eval.iter().position(|&e| e == r).expect("validation row in eval set");
                    p.push(v[pos]);
                    o.push(panel.labels[r]);
                }
            }
            row.push(if ok && !p.is_empty() { rmse(&p, &o) } else { f64::INFINITY });
        }
        scores.push(row);
    }
    InnerScores { scores }
}

/// Fits one resolved config on `train` and predicts `eval` with intervals.
pub(crate) fn refit_predict(
    panel: &Panel,
    table: &MonthlyTable,
    cfg: &PipelineConfig,
    params: &HyperParams,
    train: &[usize],
    eval: &[usize],
    fit_seed: u64,
) -> Result<Vec<Prediction>> {
    let p = panel.prepare(table, cfg, train, eval)?;
    let model = ModelRegistry::default().get(cfg.model.name())?.fit(&p.train, params, seed::derive(fit_seed, &[cfg.index as u64]))?;
    let out = model.predict(&p.eval);
    if out.iter().any(|q| !q.mean.is_finite()) {
        return Err(Error::Numeric(format!("non-finite prediction from {}", cfg.label())));
    }
    Ok(out)
}

pub(crate) fn baseline_records(panel: &Panel, table: &MonthlyTable, rows: &[usize]) -> Vec<BaselineRecord> {
    let peak = table.peak_fpar();
    rows.iter()
        .map(|&i| BaselineRecord {
            region_id: panel.keys[i].0.clone(),
            year: panel.keys[i].1,
            yield_t_ha: panel.labels[i],
            peak_fpar: peak[i],
        })
        .collect()
}

pub(crate) fn baseline_predict(kind: ModelKind, train: &[BaselineRecord], query: &[BaselineRecord]) -> Result<Vec<Prediction>> {
    let fitted = BaselineRegistry::default().get(kind.name())?.fit(train)?;
    Ok(query.iter().map(|q| fitted.predict(q)).collect())
}

fn samples(panel: &Panel, rows: &[usize], preds: &[Prediction]) -> Vec<SamplePrediction> {
    rows.iter()
        .zip(preds)
        .map(|(&i, p)| SamplePrediction {
            region_id: panel.keys[i].0.clone(),
            year: panel.keys[i].1,
            observed: panel.labels[i],
            predicted: p.mean,
            interval: p.interval,
        })
        .collect()
}

fn failed(year: i32, e: &Error) -> FoldResult {
    log::warn!("event=fold_failed year={year} error={e}");
    FoldResult {
        test_year: year,
        predictions: Vec::new(),
        selected: None,
        inner_score: None,
        error: Some(e.to_string()),
    }
}

/// Nested LOYO hindcast over `configs`. For each outer year every other year
/// serves once as inner validation year; the fit that holds out both years
/// serves the outer folds of either, so inner fits are shared per year pair.
pub fn nested_loyo_hindcast(dataset: &Dataset, configs: &[PipelineConfig], opts: &HindcastOptions) -> Result<HindcastReport> {
    let t0 = Instant::now();
    let years = dataset.years.clone();
    if years.len() < 3 {
        return Err(Error::InsufficientData(format!("nested LOYO needs at least 3 years, got {}", years.len())));
    }
    let outer: Vec<i32> = match &opts.outer_years {
        Some(o) => {
            if let Some(y) = o.iter().find(|y| !years.contains(y)) {
                return Err(Error::Parameter(format!("outer year {y} has no samples")));
            }
            o.clone()
        }
        None => years.clone(),
    };
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &[])?;
    let registry = ModelRegistry::default();
    for cfg in configs {
        if !cfg.model.is_baseline() {
            catalog.get(&cfg.feature_set)?;
        }
    }
    let regressors: Vec<PipelineConfig> = configs.iter().filter(|c| !c.model.is_baseline()).cloned().collect();
    let baselines: Vec<ModelKind> = configs.iter().filter(|c| c.model.is_baseline()).map(|c| c.model).collect();
    let grids: Vec<Vec<HyperParams>> = regressors.iter().map(|c| grid_for(opts, &registry, c.model)).collect::<Result<_>>()?;
    let shape: Vec<usize> = grids.iter().map(Vec::len).collect();

    // every unordered pair with at least one outer year
    let pairs: Vec<(i32, i32)> = years
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| years[i + 1..].iter().map(move |&b| (a, b)))
        .filter(|(a, b)| outer.contains(a) || outer.contains(b))
        .collect();
    let t_pairs = Instant::now();
    let split_results: Vec<Result<((i32, i32), SplitPredictions, Option<SplitAudit>)>> = if regressors.is_empty() {
        Vec::new()
    } else {
        pairs
            .par_iter()
            .map(|&(a, b)| {
                let train = panel.train_rows(&[a, b]);
                let mut eval = panel.rows_in_year(a);
                eval.extend(panel.rows_in_year(b));
                assert_disjoint(&panel, &train, &[a, b])?;
                let sp = evaluate_split(&panel, &regressors, &grids, &train, &eval, pair_seed(opts.seed, a, b))?;
                let audit = opts.audit.then(|| SplitAudit::new(&panel, (a, b), &train, &eval));
                log::debug!("event=pair_done years={a},{b}");
                Ok(((a, b), sp, audit))
            })
            .collect()
    };
    let mut by_pair: BTreeMap<(i32, i32), SplitPredictions> = BTreeMap::new();
    let mut audits = Vec::new();
    for r in split_results {
        let (k, sp, audit) = r?;
        by_pair.insert(k, sp);
        audits.extend(audit);
    }
    let pair_secs = t_pairs.elapsed().as_secs_f64();

    let t_outer = Instant::now();
    let kinds: Vec<ModelKind> = {
        let mut seen = BTreeSet::new();
        regressors.iter().map(|c| c.model).filter(|k| seen.insert(*k)).collect()
    };
    let fold_outputs: Vec<Result<OuterFold>> = outer
        .par_iter()
        .map(|&y| outer_fold(&panel, &regressors, &grids, &shape, &kinds, &baselines, &by_pair, y, opts))
        .collect();
    let mut folds = Vec::new();
    for f in fold_outputs {
        folds.push(f?);
    }
    let outer_secs = t_outer.elapsed().as_secs_f64();

    // assemble per-model results in display order
    let mut models: Vec<ModelResult> = Vec::new();
    for (bi, kind) in baselines.iter().enumerate() {
        models.push(ModelResult::new(kind.label(), "baseline", folds.iter().map(|f| f.baselines[bi].clone()).collect()));
    }
    for (ki, kind) in kinds.iter().enumerate() {
        models.push(ModelResult::new(kind.label(), "regressor", folds.iter().map(|f| f.per_kind[ki].clone()).collect()));
    }
    if !kinds.is_empty() {
        models.push(ModelResult::new(SELECTED_LABEL, "selected", folds.iter().map(|f| f.overall.clone().expect("regressors present")).collect()));
    }
    let mut report = HindcastReport {
        crop: dataset.crop,
        cutoff_month: opts.cutoff_month,
        crop_mean: dataset.crop_mean(),
        years: outer.clone(),
        n_configs: configs.len(),
        models,
        stats: None,
        provenance: Provenance::new(opts, configs),
        audit: audits,
        timings: Timings::default(),
    };
    report.score_and_test(opts.replicate, opts.alpha);
    report.timings.inner_pairs_s = pair_secs;
    report.timings.outer_folds_s = outer_secs;
    report.timings.total_s = t0.elapsed().as_secs_f64();
    report.timings.n_pairs = pairs.len();
    log::info!(
        "event=hindcast_done configs={} pairs={} outer_years={} seconds={:.1}",
        configs.len(),
        pairs.len(),
        outer.len(),
        report.timings.total_s
    );
    Ok(report)
}

fn assert_disjoint(panel: &Panel, train: &[usize], held_out: &[i32]) -> Result<()> {
    if let Some(&i) = train.iter().find(|&&i| held_out.contains(&panel.keys[i].1)) {
        return Err(Error::Invariant(format!(
            "row {i} of held-out year {} found in a training split",
            panel.keys[i].1
        )));
    }
    Ok(())
}

struct OuterFold {
    baselines: Vec<FoldResult>,
    per_kind: Vec<FoldResult>,
    overall: Option<FoldResult>,
}

#[allow(clippy::too_many_arguments)]
fn outer_fold(
    panel: &Panel,
    regressors: &[PipelineConfig],
    grids: &[Vec<HyperParams>],
    shape: &[usize],
    kinds: &[ModelKind],
    baselines: &[ModelKind],
    by_pair: &BTreeMap<(i32, i32), SplitPredictions>,
    y: i32,
    opts: &HindcastOptions,
) -> Result<OuterFold> {
    let train = panel.train_rows(&[y]);
    let test = panel.rows_in_year(y);
    assert_disjoint(panel, &train, &[y])?;
    let table = panel.table(&train)?;

    let base_train = baseline_records(panel, &table, &train);
    let base_test = baseline_records(panel, &table, &test);
    let baseline_folds = baselines
        .iter()
        .map(|&k| match baseline_predict(k, &base_train, &base_test) {
            Ok(p) => FoldResult {
                test_year: y,
                predictions: samples(panel, &test, &p),
                selected: None,
                inner_score: None,
                error: None,
            },
            Err(e) => failed(y, &e),
        })
        .collect();

    if regressors.is_empty() {
        return Ok(OuterFold {
            baselines: baseline_folds,
            per_kind: Vec::new(),
            overall: None,
        });
    }
    let splits: Vec<(&SplitPredictions, Vec<usize>)> = panel
        .dataset
        .years
        .iter()
        .filter(|&&v| v != y)
        .map(|&v| {
            let key = (y.min(v), y.max(v));
            (&by_pair[&key], panel.rows_in_year(v))
        })
        .collect();
    let scores = inner_scores(panel, &splits, shape);

    let fit_seed = refit_seed(opts.seed, y);
    let mut cache: BTreeMap<(usize, usize), FoldResult> = BTreeMap::new();
    let mut resolve = |winner: Option<(usize, usize, f64)>| -> FoldResult {
        let Some((c, g, s)) = winner else {
            return failed(y, &Error::Convergence("no config produced finite inner predictions".into()));
        };
        cache
            .entry((c, g))
            .or_insert_with(|| {
                let cfg = &regressors[c];
                let params = &grids[c][g];
                match refit_predict(panel, &table, cfg, params, &train, &test, fit_seed) {
                    Ok(p) => {
                        let mut resolved = cfg.clone();
                        resolved.hyperparams = Some(params.clone());
                        FoldResult {
                            test_year: y,
                            predictions: samples(panel, &test, &p),
                            selected: Some(SelectedConfig {
                                config_index: cfg.index,
                                grid_index: g,
                                label: resolved.label(),
                            }),
                            inner_score: Some(s),
                            error: None,
                        }
                    }
                    Err(e) => failed(y, &e),
                }
            })
            .clone()
    };
    let overall_winner = scores.best(|_| true);
    if let Some((_, _, s)) = overall_winner {
        // the winner's score bounds every candidate's from below
        debug_assert!(scores.scores.iter().flatten().all(|&o| !(o < s)));
    }
    let overall = Some(resolve(overall_winner));
    let per_kind = kinds
        .iter()
        .map(|&k| resolve(scores.best(|c| regressors[c].model == k)))
        .collect();
    Ok(OuterFold {
        baselines: baseline_folds,
        per_kind,
        overall,
    })
}

/// Inner-loop selection over all labelled years (plain LOYO), as used before
/// an operational forecast. Returns the overall winner and each kind's winner.
pub fn select_configs(dataset: &Dataset, configs: &[PipelineConfig], opts: &HindcastOptions) -> Result<Vec<(String, PipelineConfig, f64)>> {
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &[])?;
    let registry = ModelRegistry::default();
    let regressors: Vec<PipelineConfig> = configs.iter().filter(|c| !c.model.is_baseline()).cloned().collect();
    if regressors.is_empty() {
        return Ok(Vec::new());
    }
    let grids: Vec<Vec<HyperParams>> = regressors.iter().map(|c| grid_for(opts, &registry, c.model)).collect::<Result<_>>()?;
    let shape: Vec<usize> = grids.iter().map(Vec::len).collect();
    let splits: Vec<SplitPredictions> = dataset
        .years
        .par_iter()
        .map(|&v| {
            let train = panel.train_rows(&[v]);
            let eval = panel.rows_in_year(v);
            evaluate_split(&panel, &regressors, &grids, &train, &eval, seed::derive(opts.seed, &[0x5345_4c45, v as u64]))
        })
        .collect::<Result<_>>()?;
    let with_rows: Vec<(&SplitPredictions, Vec<usize>)> = splits.iter().map(|s| (s, s.eval.clone())).collect();
    let scores = inner_scores(&panel, &with_rows, &shape);
    let pick = |(c, g, s): (usize, usize, f64)| {
        let mut cfg = regressors[c].clone();
        cfg.hyperparams = Some(grids[c][g].clone());
        (cfg, s)
    };
    let mut out = Vec::new();
    if let Some(w) = scores.best(|_| true) {
        let (cfg, s) = pick(w);
        out.push((SELECTED_LABEL.to_string(), cfg, s));
    }
    let mut seen = BTreeSet::new();
    for k in regressors.iter().map(|c| c.model).filter(|k| seen.insert(*k)) {
        if let Some(w) = scores.best(|c| regressors[c].model == k) {
            let (cfg, s) = pick(w);
            out.push((k.label().to_string(), cfg, s));
        }
    }
    Ok(out)
}

impl SplitAudit {
    fn new(panel: &Panel, held_out: (i32, i32), train: &[usize], eval: &[usize]) -> Self {
        let visible: BTreeSet<i32> = train.iter().map(|&i| panel.keys[i].1).collect();
        SplitAudit {
            held_out: [held_out.0, held_out.1],
            train_ids: train.iter().map(|&i| i as u64).collect(),
            eval_ids: eval.iter().map(|&i| i as u64).collect(),
            label_years: visible.into_iter().collect(),
        }
    }
}

//! Backend hindcasts: default single-call mode and post-hoc ensembles.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::panel::Panel;
use super::{FoldResult, HindcastOptions, PheConfig, SamplePrediction, SelectedConfig};
use crate::bridge::{into_prediction, Backend, BackendPrediction, Request, RequestOptions, TestBlock, TrainBlock};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureSetCatalog};
use crate::seed;

/// Quantiles requested from backends; the outer pair is the 95% interval.
pub const BACKEND_QUANTILES: [f64; 3] = [0.025, 0.5, 0.975];

/// Greedy ensemble selection stops after this many non-improving additions.
pub const PHE_PATIENCE: usize = 3;

const PHE_MAX_STEPS: usize = 50;
const REQUEST_CHUNK: usize = 16;

fn outer_years(dataset: &Dataset, opts: &HindcastOptions) -> Result<Vec<i32>> {
    match &opts.outer_years {
        Some(o) => {
            if let Some(y) = o.iter().find(|y| !dataset.years.contains(y)) {
                return Err(Error::Parameter(format!("outer year {y} has no samples")));
            }
            Ok(o.clone())
        }
        None => Ok(dataset.years.clone()),
    }
}

/// Train and test blocks of a backend request; `keep` selects columns.
fn blocks(m: &FeatureMatrix, n_train: usize, labels: &[f64], keep: &[usize]) -> (TrainBlock, TestBlock) {
    let rows = |r: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        r.map(|i| {
            let row = m.row(i);
            keep.iter().map(|&j| row[j]).collect()
        })
        .collect()
    };
    let names: Vec<String> = keep.iter().map(|&j| m.columns()[j].clone()).collect();
    let categorical = keep
        .iter()
        .filter(|&&j| m.kinds()[j].is_categorical())
        .map(|&j| m.columns()[j].clone())
        .collect();
    (
        TrainBlock {
            x: rows(0..n_train),
            y: labels.to_vec(),
            column_names: names,
            categorical_columns: categorical,
        },
        TestBlock {
            x: rows(n_train..m.n_rows()),
        },
    )
}

fn request_options(seed: u64) -> RequestOptions {
    RequestOptions {
        quantiles: BACKEND_QUANTILES.to_vec(),
        seed,
        time_budget_s: None,
    }
}

fn interval(p: &BackendPrediction, i: usize) -> Option<(f64, f64)> {
    let lo = p.quantiles.iter().find(|(q, _)| *q == BACKEND_QUANTILES[0])?;
    let hi = p.quantiles.iter().find(|(q, _)| *q == BACKEND_QUANTILES[2])?;
    Some((lo.1[i], hi.1[i]))
}

fn check_len(p: &BackendPrediction, n: usize) -> Result<()> {
    if p.mean.len() != n || p.mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Protocol(format!("expected {n} finite means, got {:?}", p.mean.len())));
    }
    Ok(())
}

fn fold_from(panel: &Panel, y: i32, test: &[usize], p: &BackendPrediction, label: &str) -> FoldResult {
    FoldResult {
        test_year: y,
        predictions: test
            .iter()
            .enumerate()
            .map(|(k, &i)| SamplePrediction {
                region_id: panel.keys[i].0.clone(),
                year: y,
                observed: panel.labels[i],
                predicted: p.mean[k],
                interval: interval(p, k),
            })
            .collect(),
        selected: Some(SelectedConfig {
            config_index: 0,
            grid_index: 0,
            label: label.to_string(),
        }),
        inner_score: None,
        error: None,
    }
}

fn failed(y: i32, e: &Error) -> FoldResult {
    log::warn!("event=backend_fold_failed year={y} error={e}");
    FoldResult {
        test_year: y,
        predictions: Vec::new(),
        selected: None,
        inner_score: None,
        error: Some(e.to_string()),
    }
}

/// Design matrix for a backend: rows `train` then `eval`.
fn backend_matrix(panel: &Panel, train: &[usize], eval: &[usize]) -> Result<FeatureMatrix> {
    let table = panel.table(train)?;
    let rows: Vec<usize> = train.iter().chain(eval).copied().collect();
    panel.backend_block(&table, train, &rows)
}

fn default_fold(panel: &Panel, backend: &mut dyn Backend, y: i32, opts: &HindcastOptions) -> Result<FoldResult> {
    let train = panel.train_rows(&[y]);
    let test = panel.rows_in_year(y);
    let m = backend_matrix(panel, &train, &test)?;
    let labels: Vec<f64> = train.iter().map(|&i| panel.labels[i]).collect();
    let keep: Vec<usize> = (0..m.n_cols()).collect();
    let (tr, te) = blocks(&m, train.len(), &labels, &keep);
    let p = crate::bridge::fit_predict(backend, tr, te, request_options(seed::derive(opts.seed, &[y as u64])))?;
    check_len(&p, test.len())?;
    Ok(fold_from(panel, y, &test, &p, "default"))
}

/// One fit_predict call per outer year with the full feature set, the trend
/// and the categorical region id. No inner loop.
pub fn run_backend_default(dataset: &Dataset, backend: &mut dyn Backend, opts: &HindcastOptions) -> Result<Vec<FoldResult>> {
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &[])?;
    let years = outer_years(dataset, opts)?;
    Ok(years
        .into_iter()
        .map(|y| default_fold(&panel, backend, y, opts).unwrap_or_else(|e| failed(y, &e)))
        .collect())
}

/// Greedy forward selection with replacement. Returns the chosen member
/// indices (with multiplicity) and the validation RMSE of their average.
/// Stops after `patience` additions without improvement; the returned
/// selection is the best prefix seen.
pub fn greedy_ensemble(val_preds: &[Vec<f64>], y: &[f64], patience: usize) -> (Vec<usize>, f64) {
    if val_preds.is_empty() || y.is_empty() {
        return (Vec::new(), f64::INFINITY);
    }
    let mut sum = vec![0.0; y.len()];
    let mut chosen = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_len = 0;
    let mut stale = 0;
    while chosen.len() < PHE_MAX_STEPS {
        let k = (chosen.len() + 1) as f64;
        let mut pick = (usize::MAX, f64::INFINITY);
        for (m, p) in val_preds.iter().enumerate() {
            let mse = sum.iter().zip(p).zip(y).map(|((s, v), t)| ((s + v) / k - t).powi(2)).sum::<f64>() / y.len() as f64;
            let r = mse.sqrt();
            if r < pick.1 {
                pick = (m, r);
            }
        }
        if pick.0 == usize::MAX {
            break;
        }
        for (s, v) in sum.iter_mut().zip(&val_preds[pick.0]) {
            *s += v;
        }
        chosen.push(pick.0);
        if pick.1 < best {
            best = pick.1;
            best_len = chosen.len();
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }
    chosen.truncate(best_len);
    (chosen, best)
}

/// Pool member: seed and fraction of numeric columns kept.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PheMember {
    pub seed: u64,
    pub fraction: f64,
}

/// Outcome of one ensemble fold.
#[derive(Clone, Debug, PartialEq)]
pub struct PheFold {
    pub fold: FoldResult,
    /// Inner validation RMSE of each evaluated member.
    pub member_scores: Vec<f64>,
    pub chosen: Vec<usize>,
    pub ensemble_score: Option<f64>,
    /// Budget ran out before any member was evaluated.
    pub fallback: bool,
}

fn member_columns(m: &FeatureMatrix, member: &PheMember) -> Vec<usize> {
    let numeric = m.indices_where(|k| !k.is_categorical());
    let keep_n = ((numeric.len() as f64) * member.fraction).ceil() as usize;
    let mut picked = numeric.clone();
    if keep_n < numeric.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(member.seed);
        picked.shuffle(&mut rng);
        picked.truncate(keep_n.max(1));
    }
    picked.extend(m.indices_where(|k| k.is_categorical()));
    picked.sort_unstable();
    picked
}

/// Post-hoc ensemble per outer year: a pool of backend variants (seed, column
/// fraction 1.0 or 0.8) is scored on inner LOYO folds, members are chosen
/// greedily with replacement, and their average predicts the outer year.
pub fn posthoc_ensemble(dataset: &Dataset, backend: &mut dyn Backend, phe: &PheConfig, opts: &HindcastOptions) -> Result<Vec<PheFold>> {
    if phe.pool_size < 2 {
        return Err(Error::Parameter(format!("ensemble pool needs at least 2 members, got {}", phe.pool_size)));
    }
    let catalog = opts.catalog.clone().unwrap_or_else(FeatureSetCatalog::builtin);
    let panel = Panel::new(dataset, &catalog, opts.cutoff_month, opts.extra.as_ref(), &[])?;
    let outer = outer_years(dataset, opts)?;
    let years = dataset.years.clone();
    let budget = phe.time_budget_s.map(Duration::from_secs_f64);
    let start = Instant::now();
    let members: Vec<PheMember> = (0..phe.pool_size)
        .map(|i| PheMember {
            seed: seed::derive(opts.seed, &[0x0050_4845, i as u64]),
            fraction: if i % 2 == 0 { 1.0 } else { 0.8 },
        })
        .collect();

    // shared pair splits, as in the native hindcast
    let pairs: Vec<(i32, i32)> = years
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| years[i + 1..].iter().map(move |&b| (a, b)))
        .filter(|(a, b)| outer.contains(a) || outer.contains(b))
        .collect();
    let mut pair_data = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        let train = panel.train_rows(&[a, b]);
        let mut eval = panel.rows_in_year(a);
        eval.extend(panel.rows_in_year(b));
        let m = backend_matrix(&panel, &train, &eval)?;
        let labels: Vec<f64> = train.iter().map(|&i| panel.labels[i]).collect();
        pair_data.push((train, eval, m, labels));
    }

    // member -> pair -> eval predictions
    let mut evaluated: Vec<BTreeMap<(i32, i32), Vec<f64>>> = Vec::new();
    for (mi, member) in members.iter().enumerate() {
        if budget.is_some_and(|b| start.elapsed() >= b) {
            log::warn!("event=phe_budget_exhausted evaluated_members={mi}");
            break;
        }
        let mut reqs = Vec::with_capacity(pairs.len());
        for (pi, (train, eval, m, labels)) in pair_data.iter().enumerate() {
            let keep = member_columns(m, member);
            let (tr, te) = blocks(m, train.len(), labels, &keep);
            let _ = eval;
            let id = backend.next_id();
            reqs.push(Request::fit_predict(id, tr, te, request_options(seed::derive(member.seed, &[pi as u64]))));
        }
        let mut preds = BTreeMap::new();
        let mut ok = true;
        for (chunk_i, chunk) in reqs.chunks(REQUEST_CHUNK).enumerate() {
            match backend.call_many(chunk) {
                Ok(resps) => {
                    for (k, resp) in resps.into_iter().enumerate() {
                        let pi = chunk_i * REQUEST_CHUNK + k;
                        match into_prediction(resp).and_then(|p| check_len(&p, pair_data[pi].1.len()).map(|_| p)) {
                            Ok(p) => {
                                preds.insert(pairs[pi], p.mean);
                            }
                            Err(e) => {
                                log::warn!("event=phe_member_failed member={mi} error={e}");
                                ok = false;
                            }
                        }
                    }
                }
                Err(e) => {
                    log::warn!("event=phe_member_failed member={mi} error={e}");
                    ok = false;
                }
            }
            if !ok {
                break;
            }
        }
        evaluated.push(if ok { preds } else { BTreeMap::new() });
    }
    let usable: Vec<usize> = (0..evaluated.len()).filter(|&i| !evaluated[i].is_empty()).collect();

    let mut out = Vec::with_capacity(outer.len());
    for &y in &outer {
        if usable.is_empty() {
            let fold = default_fold(&panel, backend, y, opts).unwrap_or_else(|e| failed(y, &e));
            let mut fold = fold;
            if let Some(s) = &mut fold.selected {
                s.label = "default (ensemble budget exhausted)".into();
            }
            out.push(PheFold {
                fold,
                member_scores: Vec::new(),
                chosen: Vec::new(),
                ensemble_score: None,
                fallback: true,
            });
            continue;
        }
        // validation predictions of each member over every inner year of fold y
        let mut obs = Vec::new();
        let mut val: Vec<Vec<f64>> = vec![Vec::new(); usable.len()];
        for &v in years.iter().filter(|&&v| v != y) {
            let key = (y.min(v), y.max(v));
            let pi = pairs.iter().position(|p| *p == key).expect("pair evaluated");
            let eval = &pair_data[pi].1;
            for (k, &row) in eval.iter().enumerate() {
                if panel.keys[row].1 != v {
                    continue;
                }
                obs.push(panel.labels[row]);
                for (u, &mi) in usable.iter().enumerate() {
                    val[u].push(evaluated[mi][&key][k]);
                }
            }
        }
        let member_scores: Vec<f64> = val
            .iter()
            .map(|p| (p.iter().zip(&obs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / obs.len() as f64).sqrt())
            .collect();
        let (chosen_local, score) = greedy_ensemble(&val, &obs, PHE_PATIENCE);
        let chosen: Vec<usize> = chosen_local.iter().map(|&u| usable[u]).collect();
        let fold = match phe_test(&panel, backend, y, &members, &chosen) {
            Ok(mut f) => {
                f.inner_score = Some(score);
                f
            }
            Err(e) => failed(y, &e),
        };
        out.push(PheFold {
            fold,
            member_scores,
            chosen,
            ensemble_score: Some(score),
            fallback: false,
        });
    }
    Ok(out)
}

fn phe_test(panel: &Panel, backend: &mut dyn Backend, y: i32, members: &[PheMember], chosen: &[usize]) -> Result<FoldResult> {
    let train = panel.train_rows(&[y]);
    let test = panel.rows_in_year(y);
    let m = backend_matrix(panel, &train, &test)?;
    let labels: Vec<f64> = train.iter().map(|&i| panel.labels[i]).collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in chosen {
        *counts.entry(c).or_default() += 1;
    }
    let total = chosen.len() as f64;
    let mut mean = vec![0.0; test.len()];
    let mut quant: Vec<(f64, Vec<f64>)> = BACKEND_QUANTILES.iter().map(|&q| (q, vec![0.0; test.len()])).collect();
    let mut have_quantiles = true;
    for (&mi, &count) in &counts {
        let member = &members[mi];
        let keep = member_columns(&m, member);
        let (tr, te) = blocks(&m, train.len(), &labels, &keep);
        let p = crate::bridge::fit_predict(backend, tr, te, request_options(seed::derive(member.seed, &[0x7465_7374, y as u64])))?;
        check_len(&p, test.len())?;
        let w = count as f64 / total;
        for (a, v) in mean.iter_mut().zip(&p.mean) {
            *a += w * v;
        }
        for (q, acc) in quant.iter_mut() {
            match p.quantiles.iter().find(|(pq, _)| pq == q) {
                Some((_, vals)) => {
                    for (a, v) in acc.iter_mut().zip(vals) {
                        *a += w * v;
                    }
                }
                None => have_quantiles = false,
            }
        }
    }
    let pred = BackendPrediction {
        mean,
        quantiles: if have_quantiles { quant } else { Vec::new() },
    };
    let label = counts.iter().map(|(m, c)| format!("m{m}x{c}")).collect::<Vec<_>>().join("+");
    Ok(fold_from(panel, y, &test, &pred, &format!("ensemble {label}")))
}

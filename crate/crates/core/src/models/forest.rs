use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Binning, Tree, TreeBuilder, TreeParams};
use super::{envelope, unwrap_envelope, FittedModel, HyperParams, Matrix, ModelEnvelope, ModelKind, ParamValue, Regressor, TrainSet};
use crate::error::{Error, Result};
use crate::seed;

/// Bagged regression trees with per-node feature subsampling. Each tree's
/// bootstrap is drawn from its own seed over rows in sample-id order.
pub struct RandomForest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<Tree>,
    #[serde(skip)]
    params: HyperParams,
}

impl FittedModel for RandomForestModel {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n)
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect()
    }

    fn envelope(&self) -> ModelEnvelope {
        envelope(ModelKind::RandomForest, &self.params, self)
    }
}

struct Resolved {
    n_trees: usize,
    max_features: usize,
    tree: TreeParams,
    bootstrap: bool,
}

/// Features per node from a rule name or a number.
pub(crate) fn max_features(v: Option<&ParamValue>, d: usize) -> Result<usize> {
    let d = d.max(1);
    Ok(match v {
        None => d.div_ceil(3),
        Some(ParamValue::Text(s)) => match s.as_str() {
            "sqrt" => (d as f64).sqrt().ceil() as usize,
            "third" => d.div_ceil(3),
            "all" => d,
            other => return Err(Error::Parameter(format!("unknown max_features rule `{other}`"))),
        },
        Some(ParamValue::Num(f)) if *f > 0.0 && *f <= 1.0 => ((*f * d as f64).ceil() as usize).max(1),
        Some(ParamValue::Num(f)) if *f >= 1.0 => (*f as usize).min(d),
        Some(v) => return Err(Error::Parameter(format!("invalid max_features {v}"))),
    }
    .clamp(1, d))
}

fn resolve(p: &HyperParams, d: usize) -> Result<Resolved> {
    let n_trees = p.num("n_trees", 500.0)?;
    let min_leaf = p.num("min_leaf", 1.0)?;
    let max_depth = p.num("max_depth", 0.0)?;
    if n_trees < 1.0 || min_leaf < 1.0 || max_depth < 0.0 {
        return Err(Error::Parameter(format!("invalid forest parameters {p}")));
    }
    let mf = max_features(p.get("max_features"), d)?;
    Ok(Resolved {
        n_trees: n_trees as usize,
        max_features: mf,
        tree: TreeParams {
            max_depth: if max_depth == 0.0 { usize::MAX } else { max_depth as usize },
            min_leaf: min_leaf as usize,
            lambda: 0.0,
            max_features: mf,
            scale: 1.0,
        },
        bootstrap: p.num("bootstrap", 1.0)? != 0.0,
    })
}

fn grow(train: &TrainSet, codes: &[Vec<u8>], binning: &Binning, r: &Resolved, seed: u64) -> Vec<Tree> {
    let n = train.n();
    let builder = TreeBuilder { codes, binning };
    (0..r.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[t as u64]));
            let mut w = vec![0.0; n];
            if r.bootstrap {
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
            } else {
                w.fill(1.0);
            }
            let mut rows: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
            let g: Vec<f64> = (0..n).map(|i| -w[i] * train.y[i]).collect();
            builder.build(&mut rows, &g, &w, &r.tree, &mut rng, None)
        })
        .collect()
}

const MAX_BINS: usize = 255;

impl Regressor for RandomForest {
    fn kind(&self) -> ModelKind {
        ModelKind::RandomForest
    }

    fn default_grid(&self) -> Vec<HyperParams> {
        ["sqrt", "third"]
            .iter()
            .map(|m| HyperParams::new().with("n_trees", 500.0).with_text("max_features", m))
            .collect()
    }

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, seed: u64) -> Result<Box<dyn FittedModel>> {
        self.fit_grid_sorted(train, std::slice::from_ref(params), seed).pop().expect("one entry")
    }

    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        let binning = Binning::fit(&train.x, MAX_BINS);
        let codes = binning.encode(&train.x);
        grid.iter()
            .map(|p| {
                let r = resolve(p, train.d())?;
                log::trace!("event=forest_fit trees={} max_features={}", r.n_trees, r.max_features);
                Ok(Box::new(RandomForestModel {
                    trees: grow(train, &codes, &binning, &r, seed),
                    params: p.clone(),
                }) as Box<dyn FittedModel>)
            })
            .collect()
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        let mut m: RandomForestModel = unwrap_envelope(env, ModelKind::RandomForest)?;
        m.params = env.params.clone();
        Ok(Box::new(m))
    }
}

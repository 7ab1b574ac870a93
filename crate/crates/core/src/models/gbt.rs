use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Binning, Tree, TreeBuilder, TreeParams};
use super::{envelope, unwrap_envelope, FittedModel, HyperParams, Matrix, ModelEnvelope, ModelKind, Regressor, TrainSet};
use crate::error::{Error, Result};
use crate::seed;

/// Squared-loss gradient boosting. The regularised variant penalises leaf
/// weights with an L2 term, as in second-order boosting objectives.
pub struct GradientBoosting {
    kind: ModelKind,
    default_lambda: f64,
}

impl GradientBoosting {
    pub fn gbr() -> Self {
        GradientBoosting {
            kind: ModelKind::Gbr,
            default_lambda: 0.0,
        }
    }

    pub fn regularized() -> Self {
        GradientBoosting {
            kind: ModelKind::RegularizedGbt,
            default_lambda: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel {
    pub kind: ModelKind,
    pub init: f64,
    pub trees: Vec<Tree>,
    /// Rounds tried before early stopping.
    pub rounds_run: usize,
    #[serde(skip)]
    params: HyperParams,
}

impl FittedModel for GradientBoostingModel {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n)
            .map(|i| {
                let row = x.row(i);
                self.init + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
            })
            .collect()
    }

    fn envelope(&self) -> ModelEnvelope {
        envelope(self.kind, &self.params, self)
    }
}

struct Resolved {
    rounds: usize,
    tree: TreeParams,
    validation_fraction: f64,
    patience: usize,
    max_bins: usize,
}

impl GradientBoosting {
    fn resolve(&self, p: &HyperParams) -> Result<Resolved> {
        let depth = p.num("max_depth", 3.0)?;
        let rounds = p.num("n_rounds", 500.0)?;
        let lr = p.num("learning_rate", 0.1)?;
        let lambda = p.num("lambda_leaf", self.default_lambda)?;
        let min_leaf = p.num("min_leaf", 1.0)?;
        let vf = p.num("validation_fraction", 0.2)?;
        let patience = p.num("patience", 20.0)?;
        let max_bins = p.num("max_bins", 64.0)?;
        if depth < 1.0 || rounds < 1.0 || lr < 0.0 || lambda < 0.0 || min_leaf < 1.0 || !(0.0..1.0).contains(&vf) || patience < 1.0 {
            return Err(Error::Parameter(format!("invalid boosting parameters {p}")));
        }
        Ok(Resolved {
            rounds: rounds as usize,
            tree: TreeParams {
                max_depth: depth as usize,
                min_leaf: min_leaf as usize,
                lambda,
                max_features: usize::MAX,
                scale: lr,
            },
            validation_fraction: vf,
            patience: patience as usize,
            max_bins: max_bins as usize,
        })
    }

    fn boost(&self, train: &TrainSet, codes: &[Vec<u8>], binning: &Binning, r: &Resolved, seed: u64, params: &HyperParams) -> GradientBoostingModel {
        let n = train.n();
        let init = train.y_mean();
        let n_val = (r.validation_fraction * n as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        let early = n_val >= 2 && n - n_val >= 2;
        let (fit_rows, val_rows) = if early {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[0x9b7]));
            order.shuffle(&mut rng);
            let (v, f) = order.split_at(n_val);
            let (mut f, mut v) = (f.to_vec(), v.to_vec());
            f.sort_unstable();
            v.sort_unstable();
            (f, v)
        } else {
            (order, Vec::new())
        };
        let builder = TreeBuilder { codes, binning };
        let mut f = vec![init; n];
        let h = vec![1.0; n];
        let mut g = vec![0.0; n];
        let mut leaf = vec![0.0; n];
        let mut trees = Vec::new();
        let val_mse = |f: &[f64]| val_rows.iter().map(|&i| (f[i] - train.y[i]).powi(2)).sum::<f64>() / val_rows.len().max(1) as f64;
        let mut best = (val_mse(&f), 0usize);
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[0x7ee]));
        let mut rounds_run = 0;
        for round in 1..=r.rounds {
            rounds_run = round;
            for &i in &fit_rows {
                g[i] = f[i] - train.y[i];
            }
            let mut rows = fit_rows.clone();
            let tree = builder.build(&mut rows, &g, &h, &r.tree, &mut rng, Some(&mut leaf));
            for &i in &fit_rows {
                f[i] += leaf[i];
            }
            for &i in &val_rows {
                f[i] += tree.predict_codes(codes, i);
            }
            trees.push(tree);
            if early {
                let mse = val_mse(&f);
                if mse < best.0 * (1.0 - 1e-6) {
                    best = (mse, round);
                } else if round - best.1 >= r.patience {
                    break;
                }
            }
        }
        if early {
            trees.truncate(best.1);
        }
        GradientBoostingModel {
            kind: self.kind,
            init,
            trees,
            rounds_run,
            params: params.clone(),
        }
    }
}

impl Regressor for GradientBoosting {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn default_grid(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for depth in [2.0, 3.0] {
            for lr in [0.05, 0.1] {
                out.push(HyperParams::new().with("max_depth", depth).with("learning_rate", lr).with("n_rounds", 500.0));
            }
        }
        out
    }

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, seed: u64) -> Result<Box<dyn FittedModel>> {
        self.fit_grid_sorted(train, std::slice::from_ref(params), seed).pop().expect("one entry")
    }

    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        let mut cache: Option<(usize, Binning, Vec<Vec<u8>>)> = None;
        grid.iter()
            .map(|p| {
                let r = self.resolve(p)?;
                if cache.as_ref().is_none_or(|c| c.0 != r.max_bins) {
                    let b = Binning::fit(&train.x, r.max_bins);
                    let codes = b.encode(&train.x);
                    cache = Some((r.max_bins, b, codes));
                }
                let (_, binning, codes) = cache.as_ref().expect("filled");
                Ok(Box::new(self.boost(train, codes, binning, &r, seed, p)) as Box<dyn FittedModel>)
            })
            .collect()
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        let mut m: GradientBoostingModel = unwrap_envelope(env, self.kind)?;
        m.params = env.params.clone();
        Ok(Box::new(m))
    }
}

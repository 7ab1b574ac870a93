use serde::{Deserialize, Serialize};

use super::{dot, envelope, unwrap_envelope, FittedModel, HyperParams, Matrix, ModelEnvelope, ModelKind, Regressor, TrainSet};
use crate::error::{Error, Result};

const TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;

/// L1-penalised least squares by cyclic coordinate descent on
/// `(1/2n)||y - b0 - X b||^2 + lambda ||b||_1`, intercept unpenalised.
pub struct Lasso;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    #[serde(skip)]
    params: HyperParams,
}

impl FittedModel for LassoModel {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n).map(|i| self.intercept + dot(x.row(i), &self.coef)).collect()
    }

    fn envelope(&self) -> ModelEnvelope {
        envelope(ModelKind::Lasso, &self.params, self)
    }
}

struct Centered {
    cols: Vec<Vec<f64>>,
    norms: Vec<f64>,
    xm: Vec<f64>,
    ym: f64,
    yc: Vec<f64>,
}

fn center(train: &TrainSet) -> Centered {
    let (n, d) = (train.n(), train.d());
    let xm: Vec<f64> = (0..d).map(|j| (0..n).map(|i| train.x.get(i, j)).sum::<f64>() / n as f64).collect();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| train.x.get(i, j) - xm[j]).collect()).collect();
    let norms = cols.iter().map(|c| dot(c, c) / n as f64).collect();
    let ym = train.y_mean();
    Centered {
        cols,
        norms,
        xm,
        ym,
        yc: train.y.iter().map(|v| v - ym).collect(),
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent from `beta`, updated in place.
fn descend(c: &Centered, lambda: f64, beta: &mut [f64]) -> Result<usize> {
    let n = c.yc.len() as f64;
    let mut r = c.yc.clone();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            for (ri, xi) in r.iter_mut().zip(&c.cols[j]) {
                *ri -= b * xi;
            }
        }
    }
    for sweep in 1..=MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for j in 0..beta.len() {
            if c.norms[j] <= 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = dot(&c.cols[j], &r) / n + c.norms[j] * old;
            let new = soft(rho, lambda) / c.norms[j];
            let delta = new - old;
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(&c.cols[j]) {
                    *ri -= delta * xi;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < TOL {
            return Ok(sweep);
        }
    }
    Err(Error::Convergence(format!(
        "lasso (lambda={lambda}) did not converge in {MAX_SWEEPS} sweeps"
    )))
}

fn finish(c: &Centered, beta: Vec<f64>, params: &HyperParams) -> LassoModel {
    LassoModel {
        intercept: c.ym - dot(&c.xm, &beta),
        coef: beta,
        params: params.clone(),
    }
}

fn lambda_of(p: &HyperParams) -> Result<f64> {
    let l = p.num("lambda", 1.0)?;
    if !(l >= 0.0) {
        return Err(Error::Parameter(format!("lasso lambda must be >= 0, got {l}")));
    }
    Ok(l)
}

/// Coefficients along a path of penalties, warm-started from large to small.
pub fn lasso_path(train: &TrainSet, lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let c = center(&train.canonical());
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut beta = vec![0.0; train.d()];
    let mut out = vec![Vec::new(); lambdas.len()];
    for i in order {
        descend(&c, lambdas[i], &mut beta)?;
        out[i] = beta.clone();
    }
    Ok(out)
}

impl Regressor for Lasso {
    fn kind(&self) -> ModelKind {
        ModelKind::Lasso
    }

    fn default_grid(&self) -> Vec<HyperParams> {
        [1e-3, 1e-2, 1e-1, 1.0, 10.0]
            .iter()
            .map(|&l| HyperParams::new().with("lambda", l))
            .collect()
    }

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, _seed: u64) -> Result<Box<dyn FittedModel>> {
        let lambda = lambda_of(params)?;
        let c = center(train);
        let mut beta = vec![0.0; train.d()];
        descend(&c, lambda, &mut beta)?;
        Ok(Box::new(finish(&c, beta, params)))
    }

    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], _seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        let c = center(train);
        let lambdas: Vec<Result<f64>> = grid.iter().map(lambda_of).collect();
        let mut order: Vec<usize> = (0..grid.len()).collect();
        let key = |i: usize| lambdas[i].as_ref().copied().unwrap_or(f64::NEG_INFINITY);
        order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
        let mut out: Vec<Option<Result<Box<dyn FittedModel>>>> = (0..grid.len()).map(|_| None).collect();
        let mut warm = vec![0.0; train.d()];
        for i in order {
            out[i] = Some(match &lambdas[i] {
                Err(e) => Err(Error::Parameter(e.to_string())),
                Ok(l) => {
                    let mut beta = warm.clone();
                    match descend(&c, *l, &mut beta) {
                        Ok(_) => {
                            warm = beta.clone();
                            Ok(Box::new(finish(&c, beta, &grid[i])) as Box<dyn FittedModel>)
                        }
                        Err(e) => Err(e),
                    }
                }
            });
        }
        out.into_iter().map(|o| o.expect("every entry fitted")).collect()
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        let mut m: LassoModel = unwrap_envelope(env, ModelKind::Lasso)?;
        m.params = env.params.clone();
        Ok(Box::new(m))
    }
}

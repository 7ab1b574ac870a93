use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{envelope, sq_dist, unwrap_envelope, FittedModel, HyperParams, Matrix, ModelEnvelope, ModelKind, Prediction, Regressor, TrainSet};
use crate::error::{Error, Result};

const MAX_JITTER: f64 = 1e-4;
const Z95: f64 = 1.96;

/// Gaussian process regression with a squared-exponential kernel. Targets are
/// centred by default, so the prior mean is the training mean.
pub struct Gpr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub train_x: Matrix,
    pub alpha: Vec<f64>,
    /// Lower Cholesky factor of K + noise I, row-major.
    pub chol: Vec<f64>,
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub jitter: f64,
    pub y_offset: f64,
    #[serde(skip)]
    params: HyperParams,
}

impl GprModel {
    fn kvec(&self, row: &[f64]) -> Vec<f64> {
        let s = 2.0 * self.length_scale * self.length_scale;
        (0..self.train_x.n)
            .map(|i| self.signal_var * (-sq_dist(self.train_x.row(i), row) / s).exp())
            .collect()
    }

    /// Latent predictive mean and variance.
    pub fn mean_var(&self, x: &Matrix) -> Vec<(f64, f64)> {
        let n = self.train_x.n;
        (0..x.n)
            .map(|r| {
                let k = self.kvec(x.row(r));
                let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>() + self.y_offset;
                // v = L^-1 k by forward substitution
                let mut v = vec![0.0; n];
                for i in 0..n {
                    let mut s = k[i];
                    for j in 0..i {
                        s -= self.chol[i * n + j] * v[j];
                    }
                    v[i] = s / self.chol[i * n + i];
                }
                let var = (self.signal_var - v.iter().map(|t| t * t).sum::<f64>()).max(0.0);
                (mean, var)
            })
            .collect()
    }
}

impl FittedModel for GprModel {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64> {
        (0..x.n)
            .map(|r| self.kvec(x.row(r)).iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>() + self.y_offset)
            .collect()
    }

    fn predict(&self, x: &Matrix) -> Vec<Prediction> {
        self.mean_var(x)
            .into_iter()
            .map(|(m, v)| {
                let h = Z95 * v.sqrt();
                Prediction {
                    mean: m,
                    interval: Some((m - h, m + h)),
                    quantiles: None,
                }
            })
            .collect()
    }

    fn envelope(&self) -> ModelEnvelope {
        envelope(ModelKind::Gpr, &self.params, self)
    }
}

fn sq_dists(x: &Matrix) -> Vec<f64> {
    let n = x.n;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(x.row(i), x.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

fn fit_with(train: &TrainSet, dists: &[f64], params: &HyperParams) -> Result<GprModel> {
    let n = train.n();
    let factor = params.num("length_scale_factor", 1.0)?;
    let noise_var = params.num("noise_var", 1e-2)?;
    let normalize = params.num("normalize_y", 1.0)? != 0.0;
    let signal_var = match params.get("signal_var") {
        Some(_) => params.num("signal_var", 1.0)?,
        None => train.y_var(),
    };
    if !(factor > 0.0) || !(noise_var >= 0.0) || !(signal_var >= 0.0) {
        return Err(Error::Parameter(format!("invalid gpr parameters {params}")));
    }
    let length_scale = factor * (train.d().max(1) as f64).sqrt();
    let s = 2.0 * length_scale * length_scale;
    let y_offset = if normalize { train.y_mean() } else { 0.0 };
    let yc = DVector::from_iterator(n, train.y.iter().map(|v| v - y_offset));
    let mut jitter = 0.0;
    loop {
        let k = DMatrix::from_fn(n, n, |i, j| {
            signal_var * (-dists[i * n + j] / s).exp() + if i == j { noise_var + jitter } else { 0.0 }
        });
        if let Some(ch) = k.cholesky() {
            let alpha = ch.solve(&yc);
            let l = ch.l();
            let mut chol = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    chol[i * n + j] = l[(i, j)];
                }
            }
            if jitter > 0.0 {
                log::debug!("event=gpr_jitter jitter={jitter:e}");
            }
            return Ok(GprModel {
                train_x: train.x.clone(),
                alpha: alpha.iter().copied().collect(),
                chol,
                length_scale,
                signal_var,
                noise_var,
                jitter,
                y_offset,
                params: params.clone(),
            });
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * 1.000_001 {
            return Err(Error::Conditioning(format!(
                "gpr kernel not positive definite with jitter up to {MAX_JITTER:e}"
            )));
        }
    }
}

impl Regressor for Gpr {
    fn kind(&self) -> ModelKind {
        ModelKind::Gpr
    }

    fn default_grid(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for l in [0.5, 1.0, 2.0, 4.0] {
            for nv in [1e-4, 1e-2, 1e-1] {
                out.push(HyperParams::new().with("length_scale_factor", l).with("noise_var", nv));
            }
        }
        out
    }

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, _seed: u64) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_with(train, &sq_dists(&train.x), params)?))
    }

    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], _seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        let dists = sq_dists(&train.x);
        grid.iter()
            .map(|p| fit_with(train, &dists, p).map(|m| Box::new(m) as Box<dyn FittedModel>))
            .collect()
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        let mut m: GprModel = unwrap_envelope(env, ModelKind::Gpr)?;
        m.params = env.params.clone();
        Ok(Box::new(m))
    }
}

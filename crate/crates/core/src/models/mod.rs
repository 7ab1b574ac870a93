//! Native regressors and baselines behind a common fit/predict interface.

mod baseline;
mod forest;
mod gbt;
mod gpr;
mod lasso;
mod svr;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use baseline::{
    Baseline, BaselineRecord, BaselineRegistry, FittedBaseline, NullBaseline, PeakFparBaseline, TrendBaseline,
};
pub use forest::{RandomForest, RandomForestModel};
pub use gbt::{GradientBoosting, GradientBoostingModel};
pub use gpr::{Gpr, GprModel};
pub use lasso::{lasso_path, Lasso, LassoModel};
pub use svr::{Svr, SvrKernel, SvrModel};
pub use tree::{Binning, Tree, TreeBuilder, TreeParams};

/// Envelope format version written by [`FittedModel::envelope`].
pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Null,
    TrendBaseline,
    PeakFpar,
    Lasso,
    SvrLinear,
    SvrRbf,
    Gpr,
    RandomForest,
    Gbr,
    RegularizedGbt,
}

impl ModelKind {
    pub fn is_baseline(&self) -> bool {
        matches!(self, ModelKind::Null | ModelKind::TrendBaseline | ModelKind::PeakFpar)
    }

    /// Registry name.
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Null => "null",
            ModelKind::TrendBaseline => "trend",
            ModelKind::PeakFpar => "peak_fpar",
            ModelKind::Lasso => "lasso",
            ModelKind::SvrLinear => "svr_lin",
            ModelKind::SvrRbf => "svr_rbf",
            ModelKind::Gpr => "gpr",
            ModelKind::RandomForest => "rf",
            ModelKind::Gbr => "gbr",
            ModelKind::RegularizedGbt => "xgb",
        }
    }

    /// Label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Null => "Null",
            ModelKind::TrendBaseline => "Trend",
            ModelKind::PeakFpar => "PeakFPAR",
            ModelKind::Lasso => "LASSO",
            ModelKind::SvrLinear => "SVR lin",
            ModelKind::SvrRbf => "SVR rbf",
            ModelKind::Gpr => "GPR",
            ModelKind::RandomForest => "RF",
            ModelKind::Gbr => "GBR",
            ModelKind::RegularizedGbt => "RegGBT (XGBoost-style)",
        }
    }

    pub const REGRESSORS: [ModelKind; 7] = [
        ModelKind::Lasso,
        ModelKind::SvrLinear,
        ModelKind::SvrRbf,
        ModelKind::Gpr,
        ModelKind::RandomForest,
        ModelKind::Gbr,
        ModelKind::RegularizedGbt,
    ];

    pub const BASELINES: [ModelKind; 3] = [ModelKind::Null, ModelKind::TrendBaseline, ModelKind::PeakFpar];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::BASELINES
            .iter()
            .chain(ModelKind::REGRESSORS.iter())
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::Unknown {
                kind: "model",
                name: s.to_string(),
            })
    }
}

/// Dense row-major design matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::Parameter(format!("{} values for a {n}x{d} matrix", data.len())));
        }
        Ok(Matrix { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parameter("ragged rows".into()));
        }
        Ok(Matrix {
            n: rows.len(),
            d,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { n: idx.len(), d: self.d, data }
    }
}

impl From<&FeatureMatrix> for Matrix {
    fn from(m: &FeatureMatrix) -> Self {
        Matrix {
            n: m.n_rows(),
            d: m.n_cols(),
            data: m.values().to_vec(),
        }
    }
}

/// Training rows with stable sample ids. Models see rows sorted by id, so the
/// fit does not depend on the order rows were supplied in.
#[derive(Clone, Debug)]
pub struct TrainSet {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub ids: Vec<u64>,
}

impl TrainSet {
    pub fn new(x: Matrix, y: Vec<f64>, ids: Vec<u64>) -> Result<Self> {
        if y.len() != x.n || ids.len() != x.n {
            return Err(Error::Parameter(format!(
                "{} rows, {} labels, {} ids",
                x.n,
                y.len(),
                ids.len()
            )));
        }
        if x.n == 0 {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        Ok(TrainSet { x, y, ids })
    }

    /// Row ids 0..n in the given order.
    pub fn sequential(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let ids = (0..x.n as u64).collect();
        Self::new(x, y, ids)
    }

    pub fn n(&self) -> usize {
        self.x.n
    }

    pub fn d(&self) -> usize {
        self.x.d
    }

    fn canonical(&self) -> std::borrow::Cow<'_, TrainSet> {
        if self.ids.windows(2).all(|w| w[0] < w[1]) {
            return std::borrow::Cow::Borrowed(self);
        }
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_key(|&i| self.ids[i]);
        std::borrow::Cow::Owned(TrainSet {
            x: self.x.select_rows(&order),
            y: order.iter().map(|&i| self.y[i]).collect(),
            ids: order.iter().map(|&i| self.ids[i]).collect(),
        })
    }

    pub fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }

    pub fn y_var(&self) -> f64 {
        let m = self.y_mean();
        self.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.n() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    /// 95% interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<Quantile>>,
}

impl Prediction {
    pub fn point(mean: f64) -> Self {
        Prediction {
            mean,
            interval: None,
            quantiles: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(v) => write!(f, "{v}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// Named hyperparameter values of one candidate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParams(pub BTreeMap<String, ParamValue>);

impl HyperParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.0.insert(name.to_string(), ParamValue::Num(v));
        self
    }

    pub fn with_text(mut self, name: &str, v: &str) -> Self {
        self.0.insert(name.to_string(), ParamValue::Text(v.to_string()));
        self
    }

    pub fn num(&self, name: &str, default: f64) -> Result<f64> {
        match self.0.get(name) {
            None => Ok(default),
            Some(ParamValue::Num(v)) => Ok(*v),
            Some(ParamValue::Text(s)) => Err(Error::Parameter(format!("`{name}` must be numeric, got `{s}`"))),
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    /// Cross product of per-parameter candidate lists, in lexicographic order
    /// of the parameter names.
    pub fn grid(axes: &BTreeMap<String, Vec<ParamValue>>) -> Vec<HyperParams> {
        let mut out = vec![HyperParams::new()];
        for (name, values) in axes {
            out = out
                .into_iter()
                .flat_map(|h| {
                    values.iter().map(move |v| {
                        let mut h = h.clone();
                        h.0.insert(name.clone(), v.clone());
                        h
                    })
                })
                .collect();
        }
        out
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Versioned JSON form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub version: u32,
    pub kind: ModelKind,
    pub params: HyperParams,
    pub state: serde_json::Value,
}

pub trait FittedModel: Send + Sync + fmt::Debug {
    fn predict_mean(&self, x: &Matrix) -> Vec<f64>;

    fn predict(&self, x: &Matrix) -> Vec<Prediction> {
        self.predict_mean(x).into_iter().map(Prediction::point).collect()
    }

    fn envelope(&self) -> ModelEnvelope;
}

/// A regression algorithm. Implementations see training rows in id order.
pub trait Regressor: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Default candidate grid; entries are dimension-free (scaled by `d` at fit).
    fn default_grid(&self) -> Vec<HyperParams>;

    fn fit_sorted(&self, train: &TrainSet, params: &HyperParams, seed: u64) -> Result<Box<dyn FittedModel>>;

    /// One fit per grid entry. Overridden where work can be shared.
    fn fit_grid_sorted(&self, train: &TrainSet, grid: &[HyperParams], seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        grid.iter().map(|p| self.fit_sorted(train, p, seed)).collect()
    }

    fn load(&self, envelope: &ModelEnvelope) -> Result<Box<dyn FittedModel>>;

    fn fit(&self, train: &TrainSet, params: &HyperParams, seed: u64) -> Result<Box<dyn FittedModel>> {
        self.fit_sorted(&train.canonical(), params, seed)
    }

    fn fit_grid(&self, train: &TrainSet, grid: &[HyperParams], seed: u64) -> Vec<Result<Box<dyn FittedModel>>> {
        self.fit_grid_sorted(&train.canonical(), grid, seed)
    }
}

pub(crate) fn envelope<T: Serialize>(kind: ModelKind, params: &HyperParams, state: &T) -> ModelEnvelope {
    ModelEnvelope {
        version: ENVELOPE_VERSION,
        kind,
        params: params.clone(),
        state: serde_json::to_value(state).expect("model state serialises"),
    }
}

pub(crate) fn unwrap_envelope<T: serde::de::DeserializeOwned>(env: &ModelEnvelope, kind: ModelKind) -> Result<T> {
    if env.version != ENVELOPE_VERSION {
        return Err(Error::Parameter(format!("unsupported model envelope version {}", env.version)));
    }
    if env.kind != kind {
        return Err(Error::Parameter(format!("envelope holds {}, expected {}", env.kind, kind)));
    }
    Ok(serde_json::from_value(env.state.clone())?)
}

/// Name-keyed regressors.
pub struct ModelRegistry {
    models: BTreeMap<&'static str, Box<dyn Regressor>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = ModelRegistry {
            models: BTreeMap::new(),
        };
        r.register(Box::new(Lasso));
        r.register(Box::new(Svr::new(SvrKernel::Linear)));
        r.register(Box::new(Svr::new(SvrKernel::Rbf)));
        r.register(Box::new(Gpr));
        r.register(Box::new(RandomForest));
        r.register(Box::new(GradientBoosting::gbr()));
        r.register(Box::new(GradientBoosting::regularized()));
        r
    }
}

impl ModelRegistry {
    pub fn register(&mut self, model: Box<dyn Regressor>) {
        self.models.insert(model.kind().name(), model);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Regressor> {
        self.models.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
        })
    }

    pub fn load(&self, envelope: &ModelEnvelope) -> Result<Box<dyn FittedModel>> {
        self.get(envelope.kind.name())?.load(envelope)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

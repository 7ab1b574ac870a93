use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ModelKind, Prediction};
use crate::error::{Error, Result};

/// What a baseline may see of a sample: its label, year and the season peak
/// FPAR through the cutoff. Feature columns are out of reach by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub region_id: String,
    pub year: i32,
    pub yield_t_ha: f64,
    pub peak_fpar: f64,
}

pub trait Baseline: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn fit(&self, train: &[BaselineRecord]) -> Result<Box<dyn FittedBaseline>>;
}

pub trait FittedBaseline: Send + Sync + std::fmt::Debug {
    /// `yield_t_ha` of `query` is ignored.
    fn predict(&self, query: &BaselineRecord) -> Prediction;
    /// Whether predictions for this region fall back to the region mean.
    fn is_fallback(&self, region_id: &str) -> bool;
}

/// Per-region means plus the crop-wide mean for unseen regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Means {
    by_region: BTreeMap<String, f64>,
    overall: f64,
}

impl Means {
    fn fit(train: &[BaselineRecord]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("baseline training set is empty".into()));
        }
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in train {
            let e = acc.entry(r.region_id.clone()).or_default();
            e.0 += r.yield_t_ha;
            e.1 += 1;
        }
        Ok(Means {
            by_region: acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
            overall: train.iter().map(|r| r.yield_t_ha).sum::<f64>() / train.len() as f64,
        })
    }

    fn get(&self, region_id: &str) -> f64 {
        match self.by_region.get(region_id) {
            Some(v) => *v,
            None => {
                log::warn!("event=unseen_region region={region_id} fallback=crop_mean");
                self.overall
            }
        }
    }
}

/// Ordinary least squares of `y` on `x`; `None` if `x` has no spread.
fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 * mx.abs().max(1.0).powi(2) * n {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Linear {
    means: Means,
    /// region -> (intercept, slope)
    lines: BTreeMap<String, (f64, f64)>,
}

impl Linear {
    fn fit(train: &[BaselineRecord], x: impl Fn(&BaselineRecord) -> f64, what: &str) -> Result<Self> {
        let means = Means::fit(train)?;
        let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for r in train {
            groups.entry(&r.region_id).or_default().push((x(r), r.yield_t_ha));
        }
        let mut lines = BTreeMap::new();
        for (region, pts) in groups {
            match ols(&pts) {
                Some(line) => {
                    lines.insert(region.to_string(), line);
                }
                None => log::warn!("event=baseline_fallback baseline={what} region={region} reason=degenerate"),
            }
        }
        Ok(Linear { means, lines })
    }

    fn predict(&self, region: &str, x: f64) -> f64 {
        match self.lines.get(region) {
            Some((a, b)) => a + b * x,
            None => self.means.get(region),
        }
    }

    pub(crate) fn coefficients(&self, region: &str) -> Option<(f64, f64)> {
        self.lines.get(region).copied()
    }
}

pub struct NullBaseline;
pub struct TrendBaseline;
pub struct PeakFparBaseline;

#[derive(Debug)]
struct FittedNull(Means);

impl Baseline for NullBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::Null
    }

    fn fit(&self, train: &[BaselineRecord]) -> Result<Box<dyn FittedBaseline>> {
        Ok(Box::new(FittedNull(Means::fit(train)?)))
    }
}

impl FittedBaseline for FittedNull {
    fn predict(&self, q: &BaselineRecord) -> Prediction {
        Prediction::point(self.0.get(&q.region_id))
    }

    fn is_fallback(&self, _region_id: &str) -> bool {
        false
    }
}

/// Fitted per-region line of either linear baseline.
#[derive(Debug)]
pub struct FittedLinear {
    inner: Linear,
    use_fpar: bool,
}

impl FittedLinear {
    /// (intercept, slope) of a region, if it has its own line.
    pub fn coefficients(&self, region: &str) -> Option<(f64, f64)> {
        self.inner.coefficients(region)
    }
}

impl FittedBaseline for FittedLinear {
    fn predict(&self, q: &BaselineRecord) -> Prediction {
        let x = if self.use_fpar { q.peak_fpar } else { q.year as f64 };
        Prediction::point(self.inner.predict(&q.region_id, x))
    }

    fn is_fallback(&self, region_id: &str) -> bool {
        !self.inner.lines.contains_key(region_id)
    }
}

impl TrendBaseline {
    pub fn fit_linear(&self, train: &[BaselineRecord]) -> Result<FittedLinear> {
        Ok(FittedLinear {
            inner: Linear::fit(train, |r| r.year as f64, "trend")?,
            use_fpar: false,
        })
    }
}

impl PeakFparBaseline {
    pub fn fit_linear(&self, train: &[BaselineRecord]) -> Result<FittedLinear> {
        Ok(FittedLinear {
            inner: Linear::fit(train, |r| r.peak_fpar, "peak_fpar")?,
            use_fpar: true,
        })
    }
}

impl Baseline for TrendBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::TrendBaseline
    }

    fn fit(&self, train: &[BaselineRecord]) -> Result<Box<dyn FittedBaseline>> {
        Ok(Box::new(self.fit_linear(train)?))
    }
}

impl Baseline for PeakFparBaseline {
    fn kind(&self) -> ModelKind {
        ModelKind::PeakFpar
    }

    fn fit(&self, train: &[BaselineRecord]) -> Result<Box<dyn FittedBaseline>> {
        Ok(Box::new(self.fit_linear(train)?))
    }
}

/// Name-keyed baselines.
pub struct BaselineRegistry {
    models: BTreeMap<&'static str, Box<dyn Baseline>>,
}

impl Default for BaselineRegistry {
    fn default() -> Self {
        let mut r = BaselineRegistry {
            models: BTreeMap::new(),
        };
        r.register(Box::new(NullBaseline));
        r.register(Box::new(TrendBaseline));
        r.register(Box::new(PeakFparBaseline));
        r
    }
}

impl BaselineRegistry {
    pub fn register(&mut self, b: Box<dyn Baseline>) {
        self.models.insert(b.kind().name(), b);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.models.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Baseline> {
        self.models.get(name).map(|b| b.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "baseline",
            name: name.to_string(),
        })
    }
}

//! Leakage-safe design matrices for one train/evaluate split.

use std::collections::BTreeSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{
    trend_covariate, Climatology, ColumnKind, FeatureMatrix, FeatureSetCatalog, MonthlyTable, OneHotEncoder, ZScore,
    FULL_SET, TREND_COLUMN,
};
use crate::models::{Matrix, TrainSet};
use crate::reduce::{pearson, ReducerRegistry};

use super::PipelineConfig;

/// Features with |corr(f, y)| above this on training rows abort the run.
pub const LEAK_THRESHOLD: f64 = 0.999;

/// Rows a split may touch: labelled samples of the dataset followed by any
/// unlabelled forecast rows.
pub(crate) struct Panel<'a> {
    pub dataset: &'a Dataset,
    pub keys: Vec<(String, i32)>,
    /// NaN for unlabelled rows.
    pub labels: Vec<f64>,
    pub catalog: &'a FeatureSetCatalog,
    pub cutoff: u8,
    /// User columns aligned with `keys`.
    pub extra: Option<&'a FeatureMatrix>,
    shared: Option<MonthlyTable>,
}

/// One prepared split.
pub(crate) struct Prepared {
    pub train: TrainSet,
    pub eval: Matrix,
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub audit: serde_json::Value,
}

impl<'a> Panel<'a> {
    pub fn new(
        dataset: &'a Dataset,
        catalog: &'a FeatureSetCatalog,
        cutoff: u8,
        extra: Option<&'a FeatureMatrix>,
        forecast_keys: &[(String, i32)],
    ) -> Result<Self> {
        let mut keys: Vec<(String, i32)> = dataset.samples.iter().map(|s| (s.region_id.clone(), s.year)).collect();
        let mut labels = dataset.yields();
        keys.extend(forecast_keys.iter().cloned());
        labels.extend(std::iter::repeat(f64::NAN).take(forecast_keys.len()));
        if let Some(x) = extra {
            if x.n_rows() != keys.len() {
                return Err(Error::Parameter(format!(
                    "extra columns cover {} rows, panel has {}",
                    x.n_rows(),
                    keys.len()
                )));
            }
        }
        let mut panel = Panel {
            dataset,
            keys,
            labels,
            catalog,
            cutoff,
            extra,
            shared: None,
        };
        // without gaps the climatology is never consulted, so one table serves every split
        let gappy = dataset.has_gaps() || panel.forecast_gaps(forecast_keys);
        if !gappy {
            panel.shared = Some(panel.build_table(&Climatology::none())?);
        }
        Ok(panel)
    }

    fn forecast_gaps(&self, keys: &[(String, i32)]) -> bool {
        let w = &self.dataset.window;
        keys.iter().any(|(r, y)| {
            let season = w.dekads(*y, self.cutoff);
            crate::data::Variable::ALL.iter().any(|v| match self.dataset.series.get(r, *v) {
                Some(s) => !s.missing_among(&season).is_empty(),
                None => true,
            })
        })
    }

    fn build_table(&self, clim: &Climatology) -> Result<MonthlyTable> {
        MonthlyTable::build(&self.dataset.series, &self.dataset.window, self.dataset.crop, &self.keys, self.cutoff, clim)
            .map_err(|e| match e {
                Error::MissingMonth { month, context } => {
                    Error::Coverage(format!("month M{month} has no data for {context} even after climatology fill"))
                }
                e => e,
            })
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn rows_in_year(&self, year: i32) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.keys[i].1 == year).collect()
    }

    /// Labelled rows outside `years`.
    pub fn train_rows(&self, years: &[i32]) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| !self.labels[i].is_nan() && !years.contains(&self.keys[i].1))
            .collect()
    }

    /// Monthly table with gaps filled from the climatology of `train` rows' years.
    pub fn table(&self, train: &[usize]) -> Result<std::borrow::Cow<'_, MonthlyTable>> {
        if let Some(t) = &self.shared {
            return Ok(std::borrow::Cow::Borrowed(t));
        }
        let years: BTreeSet<i32> = train.iter().map(|&i| self.keys[i].1).collect();
        let years: Vec<i32> = years.into_iter().collect();
        let clim = Climatology::from_years(&self.dataset.series, &self.dataset.window, &years);
        Ok(std::borrow::Cow::Owned(self.build_table(&clim)?))
    }

    /// Trend covariate for `rows` from the labels of `train` rows only.
    pub fn trend(&self, train: &[usize], rows: &[usize]) -> Vec<f64> {
        let visible: Vec<(String, i32, f64)> = train
            .iter()
            .map(|&i| (self.keys[i].0.clone(), self.keys[i].1, self.labels[i]))
            .collect();
        let keys: Vec<(String, i32)> = rows.iter().map(|&i| self.keys[i].clone()).collect();
        trend_covariate(&keys, &visible)
    }

    /// Monthly columns of `feature_set`, then extra columns, then the trend.
    pub fn raw(&self, table: &MonthlyTable, feature_set: &str, use_trend: bool, train: &[usize], rows: &[usize]) -> Result<FeatureMatrix> {
        let spec = self.catalog.get(feature_set)?;
        let mut m = table.matrix(spec).select_rows(rows);
        if let Some(x) = self.extra {
            m = m.hstack(&x.select_rows(rows))?;
        }
        if use_trend {
            m.push_column(TREND_COLUMN, ColumnKind::Trend, &self.trend(train, rows))?;
        }
        Ok(m)
    }

    /// Design matrices for one config: raw columns, region indicators,
    /// training-row z-scores, then the reducer fitted on training rows.
    pub fn prepare(&self, table: &MonthlyTable, cfg: &PipelineConfig, train: &[usize], eval: &[usize]) -> Result<Prepared> {
        let rows: Vec<usize> = train.iter().chain(eval).copied().collect();
        let mut m = self.raw(table, &cfg.feature_set, cfg.use_trend, train, &rows)?;
        let n_train = train.len();
        let tr: Vec<usize> = (0..n_train).collect();
        let ev: Vec<usize> = (n_train..rows.len()).collect();
        let y: Vec<f64> = train.iter().map(|&i| self.labels[i]).collect();
        lint_leakage(&m.select_rows(&tr), &y)?;
        if cfg.use_ohe {
            let enc = OneHotEncoder::fit(train.iter().map(|&i| self.keys[i].0.as_str()));
            m = enc.append(&m)?;
        }
        let (mtr, mev) = (m.select_rows(&tr), m.select_rows(&ev));
        let z = ZScore::fit(&mtr);
        let (ztr, zev) = (z.apply(&mtr)?, z.apply(&mev)?);
        let reducer = ReducerRegistry::default().build(&cfg.reducer)?.fit(&ztr, &y)?;
        let (rtr, rev) = (reducer.transform(&ztr)?, reducer.transform(&zev)?);
        if rtr.n_cols() == 0 {
            return Err(Error::InsufficientData(format!("no usable feature columns for {}", cfg.label())));
        }
        let ids = train.iter().map(|&i| i as u64).collect();
        Ok(Prepared {
            train: TrainSet::new(Matrix::from(&rtr), y, ids)?,
            eval: Matrix::from(&rev),
            columns: rtr.columns().to_vec(),
            kinds: rtr.kinds().to_vec(),
            audit: serde_json::json!({ "dropped": z.dropped, "reducer": reducer.audit() }),
        })
    }

    /// Full-set monthly columns, extras, trend and a region code for a backend.
    /// The code is the region's position among training regions; unseen is NaN.
    pub fn backend_block(&self, table: &MonthlyTable, train: &[usize], rows: &[usize]) -> Result<FeatureMatrix> {
        let mut m = self.raw(table, FULL_SET, true, train, rows)?;
        let enc = OneHotEncoder::fit(train.iter().map(|&i| self.keys[i].0.as_str()));
        let codes: Vec<f64> = rows
            .iter()
            .map(|&i| {
                enc.regions()
                    .iter()
                    .position(|r| *r == self.keys[i].0)
                    .map_or(f64::NAN, |p| p as f64)
            })
            .collect();
        m.push_column(BACKEND_REGION_COLUMN, ColumnKind::Categorical, &codes)?;
        Ok(m)
    }
}

/// Categorical region column handed to backends.
pub const BACKEND_REGION_COLUMN: &str = "adm_name";

/// Refuses training matrices holding a near-copy of the target.
pub fn lint_leakage(train: &FeatureMatrix, y: &[f64]) -> Result<()> {
    for j in train.indices_where(|k| !k.is_categorical()) {
        let col = train.column(j);
        let (a, b): (Vec<f64>, Vec<f64>) = col.iter().zip(y).filter(|(v, _)| v.is_finite()).map(|(v, t)| (*v, *t)).unzip();
        if a.len() < 3 {
            continue;
        }
        let r = pearson(&a, &b);
        if r.abs() > LEAK_THRESHOLD {
            let column = train.columns()[j].clone();
            log::warn!("event=leak_detected column={column} corr={r:.6}");
            return Err(Error::Leakage { column, corr: r });
        }
    }
    Ok(())
}

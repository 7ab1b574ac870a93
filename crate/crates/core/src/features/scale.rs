use serde::{Deserialize, Serialize};

use super::{ColumnKind, FeatureMatrix};
use crate::error::{Error, Result};

/// Column standardisation fitted on training rows. Categorical columns pass
/// through unscaled. Constant (or all-missing) columns are dropped. Missing
/// values are imputed with the training mean, which is 0 after scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub dropped: Vec<String>,
}

const CONSTANT_TOL: f64 = 1e-12;

impl ZScore {
    pub fn fit(train: &FeatureMatrix) -> Self {
        let mut out = ZScore {
            columns: Vec::new(),
            kinds: Vec::new(),
            mean: Vec::new(),
            sd: Vec::new(),
            dropped: Vec::new(),
        };
        for j in 0..train.n_cols() {
            let col: Vec<f64> = train.column(j).into_iter().filter(|v| !v.is_nan()).collect();
            let name = &train.columns()[j];
            let kind = train.kinds()[j];
            if col.is_empty() {
                out.dropped.push(name.clone());
                continue;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd <= CONSTANT_TOL * mean.abs().max(1.0) {
                log::debug!("event=constant_column_dropped column={name}");
                out.dropped.push(name.clone());
                continue;
            }
            out.columns.push(name.clone());
            out.kinds.push(kind);
            if kind.is_categorical() {
                out.mean.push(0.0);
                out.sd.push(1.0);
            } else {
                out.mean.push(mean);
                out.sd.push(sd);
            }
        }
        out
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut sel = m.select_named(&self.columns)?;
        let d = self.columns.len();
        let mut vals = sel.values().to_vec();
        for row in vals.chunks_mut(d.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                if v.is_nan() {
                    *v = if self.kinds[j].is_categorical() { 0.0 } else { self.mean[j] };
                }
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
        let mut out = FeatureMatrix::from_parts(sel.rows().to_vec(), self.columns.clone(), self.kinds.clone(), vals)?;
        std::mem::swap(&mut out.dropped, &mut sel.dropped);
        out.dropped.extend(self.dropped.iter().cloned());
        Ok(out)
    }

    pub fn inverse(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.columns() != self.columns.as_slice() {
            return Err(Error::Parameter("inverse z-score on foreign columns".into()));
        }
        let d = self.columns.len();
        let mut vals = m.values().to_vec();
        for row in vals.chunks_mut(d.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.sd[j] + self.mean[j];
            }
        }
        FeatureMatrix::from_parts(m.rows().to_vec(), self.columns.clone(), self.kinds.clone(), vals)
    }
}

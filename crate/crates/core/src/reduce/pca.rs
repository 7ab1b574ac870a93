use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ColumnKind, FeatureMatrix};

/// Principal components of the non-categorical columns. Categorical columns
/// are carried through unchanged after the components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_columns: Vec<String>,
    pub passthrough: Vec<String>,
    pub mean: Vec<f64>,
    /// Orthonormal rows, one per retained component.
    pub components: Vec<Vec<f64>>,
    /// Variance fraction of every component, retained or not, descending.
    pub explained: Vec<f64>,
    pub total_variance: f64,
}

pub fn pca_fit(x: &FeatureMatrix, fraction: f64) -> Result<PcaModel> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("pca needs 2 rows, got {n}")));
    }
    let numeric = x.indices_where(|k| !k.is_categorical());
    let d = numeric.len();
    if d == 0 {
        return Err(Error::InsufficientData("pca found no numeric columns".into()));
    }
    let mean: Vec<f64> = numeric.iter().map(|&j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, a| x.get(i, numeric[a]) - mean[a]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let total: f64 = cov.diagonal().iter().sum();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let explained: Vec<f64> = order
        .iter()
        .map(|&i| if total > 0.0 { eig.eigenvalues[i].max(0.0) / total } else { 0.0 })
        .collect();
    let mut keep = d;
    let mut cum = 0.0;
    for (i, e) in explained.iter().enumerate() {
        cum += e;
        if cum >= fraction - 1e-12 {
            keep = i + 1;
            break;
        }
    }
    let components = order[..keep]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // sign convention: largest-magnitude loading positive
            let lead = v.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() + 1e-12 { c } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            v
        })
        .collect();
    Ok(PcaModel {
        input_columns: numeric.iter().map(|&j| x.columns()[j].clone()).collect(),
        passthrough: x
            .indices_where(|k| k.is_categorical())
            .into_iter()
            .map(|j| x.columns()[j].clone())
            .collect(),
        mean,
        components,
        explained,
        total_variance: total,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += s * w;
            }
        }
        out
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let inp = x.select_named(&self.input_columns)?;
        let pass = x.select_named(&self.passthrough)?;
        let k = self.n_components();
        let mut vals = Vec::with_capacity(x.n_rows() * k);
        for i in 0..x.n_rows() {
            vals.extend(self.project(inp.row(i)));
        }
        let names = (1..=k).map(|i| format!("PC{i}")).collect();
        let pcs = FeatureMatrix::from_parts(x.rows().to_vec(), names, vec![ColumnKind::Component; k], vals)?;
        pcs.hstack(&pass)
    }
}

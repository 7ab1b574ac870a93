use serde::{Deserialize, Serialize};

use super::{ColumnKind, FeatureMatrix};
use crate::error::Result;

pub const OHE_PREFIX: &str = "adm_";

/// Region indicator columns, fixed from the training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    regions: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit<'a>(region_ids: impl IntoIterator<Item = &'a str>) -> Self {
        let set: std::collections::BTreeSet<String> = region_ids.into_iter().map(str::to_string).collect();
        OneHotEncoder {
            regions: set.into_iter().collect(),
        }
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn column_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| format!("{OHE_PREFIX}{r}")).collect()
    }

    /// Indicator rows; a region unseen at fit time encodes as all zeros.
    pub fn encode(&self, region_ids: &[&str]) -> Vec<Vec<f64>> {
        region_ids
            .iter()
            .map(|r| {
                let row: Vec<f64> = self.regions.iter().map(|k| if k == r { 1.0 } else { 0.0 }).collect();
                if !self.regions.iter().any(|k| k == r) {
                    log::warn!("event=unseen_region region={r} encoding=zeros");
                }
                row
            })
            .collect()
    }

    /// `m` with the indicator columns appended.
    pub fn append(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let ids: Vec<&str> = m.rows().iter().map(|k| k.region_id.as_str()).collect();
        let enc = self.encode(&ids);
        let mut out = m.clone();
        for (j, name) in self.column_names().into_iter().enumerate() {
            let col: Vec<f64> = enc.iter().map(|row| row[j]).collect();
            out.push_column(name, ColumnKind::Categorical, &col)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_regions_rows_sum_to_one() {
        let enc = OneHotEncoder::fit(["b", "a", "c", "a"]);
        assert_eq!(enc.column_names(), vec!["adm_a", "adm_b", "adm_c"]);
        for row in enc.encode(&["a", "b", "c"]) {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn unseen_region_is_zero_row() {
        let enc = OneHotEncoder::fit(["a"]);
        assert_eq!(enc.encode(&["z"]), vec![vec![0.0]]);
    }
}

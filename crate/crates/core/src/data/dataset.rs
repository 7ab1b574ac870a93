use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Crop, Dekad, SeriesCollection, Variable, YieldRecord};
use crate::error::{Error, Result};
use crate::features::SeasonWindow;

/// A sample with more missing season dekads than this in any variable is excluded.
pub const MAX_MISSING_SEASON_DEKADS: usize = 9;

/// One labelled (region, harvest year) sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub region_id: String,
    pub year: i32,
    pub yield_t_ha: f64,
    /// Season dekads without observations, per variable; filled by climatology later.
    pub missing: BTreeMap<Variable, Vec<Dekad>>,
}

impl Sample {
    pub fn key(&self) -> String {
        format!("{}/{}", self.region_id, self.year)
    }

    pub fn has_gaps(&self) -> bool {
        self.missing.values().any(|m| !m.is_empty())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub crop: Crop,
    pub regions: Vec<String>,
    pub years: Vec<i32>,
    /// Ordered by (year, region); a sample's position is its row id.
    pub samples: Vec<Sample>,
    pub series: SeriesCollection,
    pub window: SeasonWindow,
    /// Keys of samples dropped for excessive gaps.
    pub excluded: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn yields(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.yield_t_ha).collect()
    }

    pub fn rows_in_year(&self, year: i32) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.year == year)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn rows_excluding(&self, years: &[i32]) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !years.contains(&s.year))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_gaps(&self) -> bool {
        self.samples.iter().any(Sample::has_gaps)
    }

    /// Mean observed yield over all samples of the crop.
    pub fn crop_mean(&self) -> f64 {
        self.samples.iter().map(|s| s.yield_t_ha).sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Copy with labels replaced, row for row.
    pub fn with_yields(&self, yields: &[f64]) -> Dataset {
        assert_eq!(yields.len(), self.samples.len());
        let mut out = self.clone();
        for (s, y) in out.samples.iter_mut().zip(yields) {
            s.yield_t_ha = *y;
        }
        out
    }

    /// Label history of one region as (year, yield), ascending by year.
    pub fn history(&self, region_id: &str) -> Vec<(i32, f64)> {
        let mut h: Vec<(i32, f64)> = self
            .samples
            .iter()
            .filter(|s| s.region_id == region_id)
            .map(|s| (s.year, s.yield_t_ha))
            .collect();
        h.sort_by_key(|(y, _)| *y);
        h
    }
}

/// Inner-joins yields of `crop` with region series on (region, year).
pub fn assemble_dataset(series: &SeriesCollection, yields: &[YieldRecord], crop: Crop) -> Result<Dataset> {
    let window = SeasonWindow::standard();
    let mut samples = Vec::new();
    let mut excluded = Vec::new();
    let mut coverage_errors = Vec::new();
    for rec in yields.iter().filter(|r| r.crop == crop) {
        let season = window.dekads(rec.year, window.months());
        let mut missing = BTreeMap::new();
        let mut too_sparse = false;
        let mut uncovered = Vec::new();
        for variable in Variable::ALL {
            let gaps = match series.get(&rec.region_id, variable) {
                Some(s) => s.missing_among(&season),
                None => season.clone(),
            };
            if gaps.len() == season.len() {
                uncovered.push(variable.as_str());
            } else if gaps.len() > MAX_MISSING_SEASON_DEKADS {
                too_sparse = true;
            }
            missing.insert(variable, gaps);
        }
        let key = format!("{}/{}", rec.region_id, rec.year);
        if !uncovered.is_empty() {
            coverage_errors.push(format!("{key} has no season data for {}", uncovered.join(", ")));
            continue;
        }
        if too_sparse {
            log::warn!("event=sample_excluded sample={key} reason=more_than_{MAX_MISSING_SEASON_DEKADS}_missing_dekads");
            excluded.push(key);
            continue;
        }
        samples.push(Sample {
            region_id: rec.region_id.clone(),
            year: rec.year,
            yield_t_ha: rec.yield_t_ha,
            missing,
        });
    }
    if !coverage_errors.is_empty() {
        return Err(Error::Coverage(coverage_errors.join("; ")));
    }
    samples.sort_by(|a, b| (a.year, &a.region_id).cmp(&(b.year, &b.region_id)));
    let regions: BTreeSet<String> = samples.iter().map(|s| s.region_id.clone()).collect();
    let years: BTreeSet<i32> = samples.iter().map(|s| s.year).collect();
    Ok(Dataset {
        crop,
        regions: regions.into_iter().collect(),
        years: years.into_iter().collect(),
        samples,
        series: series.clone(),
        window,
        excluded,
    })
}

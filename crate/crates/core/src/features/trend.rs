use serde::{Deserialize, Serialize};

use crate::data::Crop;
use crate::error::{Error, Result};

/// Most recent prior years entering the trend.
pub const TREND_WINDOW: usize = 12;
/// Below this many prior years the trend falls back to the prior mean.
pub const MIN_TREND_YEARS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// `None` when the mean fallback was used.
    pub slope: Option<f64>,
    pub intercept: f64,
    pub value: f64,
    pub n_prior_years: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendEstimate {
    pub region_id: String,
    pub crop: Crop,
    pub target_year: i32,
    pub value: f64,
    pub n_prior_years: usize,
    pub fallback: bool,
}

impl TrendEstimate {
    /// Keeps only years before `target_year`, then fits.
    pub fn compute(region_id: &str, crop: Crop, history: &[(i32, f64)], target_year: i32) -> Result<Self> {
        let prior: Vec<(i32, f64)> = history.iter().copied().filter(|(y, _)| *y < target_year).collect();
        let fit = theil_sen_trend(&prior, target_year, TREND_WINDOW)?;
        Ok(TrendEstimate {
            region_id: region_id.to_string(),
            crop,
            target_year,
            value: fit.value,
            n_prior_years: fit.n_prior_years,
            fallback: fit.fallback,
        })
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Theil-Sen line through the most recent `max_window` years of `history`,
/// evaluated at `target_year`. Every history year must precede the target.
pub fn theil_sen_trend(history: &[(i32, f64)], target_year: i32, max_window: usize) -> Result<TrendFit> {
    if let Some((y, _)) = history.iter().find(|(y, _)| *y >= target_year) {
        return Err(Error::Invariant(format!(
            "trend for {target_year} was handed a record from {y}"
        )));
    }
    if history.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "{} prior year(s) before {target_year}, need 2",
            history.len()
        )));
    }
    let mut h = history.to_vec();
    h.sort_by_key(|(y, _)| *y);
    let h = &h[h.len().saturating_sub(max_window)..];
    let n = h.len();
    if n < MIN_TREND_YEARS {
        let mean = h.iter().map(|(_, v)| v).sum::<f64>() / n as f64;
        return Ok(TrendFit {
            slope: None,
            intercept: mean,
            value: mean,
            n_prior_years: n,
            fallback: true,
        });
    }
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (h[j].0 - h[i].0) as f64;
            if dx != 0.0 {
                slopes.push((h[j].1 - h[i].1) / dx);
            }
        }
    }
    if slopes.is_empty() {
        return Err(Error::InsufficientHistory(format!("no distinct years before {target_year}")));
    }
    let slope = median(&mut slopes);
    let mut residuals: Vec<f64> = h.iter().map(|(x, y)| y - slope * *x as f64).collect();
    let intercept = median(&mut residuals);
    Ok(TrendFit {
        slope: Some(slope),
        intercept,
        value: slope * target_year as f64 + intercept,
        n_prior_years: n,
        fallback: false,
    })
}

/// Trend covariate for each `(region, year)` key, computed from the visible
/// labels of the same region in strictly earlier years. Keys with fewer than
/// two such years get NaN.
pub fn trend_covariate(keys: &[(String, i32)], visible: &[(String, i32, f64)]) -> Vec<f64> {
    let mut by_region: std::collections::BTreeMap<&str, Vec<(i32, f64)>> = Default::default();
    for (r, y, v) in visible {
        by_region.entry(r.as_str()).or_default().push((*y, *v));
    }
    keys.iter()
        .map(|(r, year)| {
            let prior: Vec<(i32, f64)> = by_region
                .get(r.as_str())
                .map(|h| h.iter().copied().filter(|(y, _)| y < year).collect())
                .unwrap_or_default();
            theil_sen_trend(&prior, *year, TREND_WINDOW).map(|f| f.value).unwrap_or(f64::NAN)
        })
        .collect()
}

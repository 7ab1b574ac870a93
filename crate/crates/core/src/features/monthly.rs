use std::collections::{BTreeMap, HashMap};

use super::{ColumnKind, FeatureMatrix, FeatureMember, FeatureSetSpec, Metric, RowKey, SeasonWindow};
use crate::data::{Crop, Dataset, Dekad, DekadalSeries, SeriesCollection, Variable};
use crate::error::{Error, Result};

/// Per-dekad means over a set of seasons, used to fill gaps. Built from
/// training years only so that a held-out season never informs its own fill.
#[derive(Clone, Debug, Default)]
pub struct Climatology {
    means: HashMap<(String, Variable, u8), f64>,
}

impl Climatology {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_years(series: &SeriesCollection, window: &SeasonWindow, years: &[i32]) -> Self {
        let mut acc: HashMap<(String, Variable, u8), (f64, usize)> = HashMap::new();
        for s in series.iter() {
            for &y in years {
                for d in window.dekads(y, window.months()) {
                    if let Some(v) = s.get(d) {
                        let e = acc.entry((s.region_id.clone(), s.variable, d.index())).or_insert((0.0, 0));
                        e.0 += v;
                        e.1 += 1;
                    }
                }
            }
        }
        Climatology {
            means: acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect(),
        }
    }

    pub fn fill(&self, region_id: &str, variable: Variable, dekad: Dekad) -> Option<f64> {
        self.means.get(&(region_id.to_string(), variable, dekad.index())).copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyAggregate {
    pub values: BTreeMap<(u8, Metric), f64>,
    /// Number of dekads filled from climatology.
    pub filled: usize,
}

impl MonthlyAggregate {
    pub fn get(&self, month: u8, metric: Metric) -> Option<f64> {
        self.values.get(&(month, metric)).copied()
    }
}

/// Monthly avg/max/min/sum of a dekadal series over season months 1..=cutoff.
/// A month with only some dekads available is summarised over those, with the
/// sum rescaled to three dekads.
pub fn monthly_aggregate(
    series: &DekadalSeries,
    window: &SeasonWindow,
    harvest_year: i32,
    cutoff_month: u8,
    climatology: &Climatology,
) -> Result<MonthlyAggregate> {
    if !(1..=window.months()).contains(&cutoff_month) {
        return Err(Error::Parameter(format!(
            "cutoff month {cutoff_month} outside 1..={}",
            window.months()
        )));
    }
    let mut values = BTreeMap::new();
    let mut filled = 0;
    for k in 1..=cutoff_month {
        let mut vals = Vec::with_capacity(3);
        for d in window.month_dekads(harvest_year, k) {
            match series.get(d) {
                Some(v) => vals.push(v),
                None => {
                    if let Some(v) = climatology.fill(&series.region_id, series.variable, d) {
                        filled += 1;
                        vals.push(v);
                    }
                }
            }
        }
        if vals.is_empty() {
            return Err(Error::MissingMonth {
                month: k,
                context: format!("{}/{} {}", series.region_id, harvest_year, series.variable),
            });
        }
        let n = vals.len() as f64;
        let sum: f64 = vals.iter().sum();
        let avg = sum / n;
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        values.insert((k, Metric::Avg), avg);
        values.insert((k, Metric::Max), max);
        values.insert((k, Metric::Min), min);
        values.insert((k, Metric::Sum), if vals.len() == 3 { sum } else { avg * 3.0 });
    }
    Ok(MonthlyAggregate { values, filled })
}

/// Every admissible monthly column for a list of rows; feature sets are
/// column selections from it.
#[derive(Clone, Debug)]
pub struct MonthlyTable {
    rows: Vec<RowKey>,
    cutoff: u8,
    // member -> row-major [row][month-1]
    values: BTreeMap<FeatureMember, Vec<f64>>,
    pub filled: Vec<usize>,
}

impl MonthlyTable {
    pub fn build(
        series: &SeriesCollection,
        window: &SeasonWindow,
        crop: Crop,
        keys: &[(String, i32)],
        cutoff_month: u8,
        climatology: &Climatology,
    ) -> Result<Self> {
        let c = cutoff_month as usize;
        let mut values: BTreeMap<FeatureMember, Vec<f64>> = FeatureMember::ALLOWED
            .iter()
            .map(|m| (*m, vec![f64::NAN; keys.len() * c]))
            .collect();
        let mut filled = vec![0; keys.len()];
        for (i, (region, year)) in keys.iter().enumerate() {
            for variable in Variable::ALL {
                let s = series.get(region, variable).ok_or_else(|| {
                    Error::Coverage(format!("no {variable} series for region {region}"))
                })?;
                let agg = monthly_aggregate(s, window, *year, cutoff_month, climatology)?;
                filled[i] += agg.filled;
                for m in FeatureMember::ALLOWED.iter().filter(|m| m.variable == variable) {
                    let col = values.get_mut(m).expect("allowed member");
                    for k in 1..=cutoff_month {
                        col[i * c + (k as usize - 1)] = agg.get(k, m.metric).expect("metric computed");
                    }
                }
            }
        }
        Ok(MonthlyTable {
            rows: keys
                .iter()
                .map(|(r, y)| RowKey {
                    region_id: r.clone(),
                    crop,
                    year: *y,
                })
                .collect(),
            cutoff: cutoff_month,
            values,
            filled,
        })
    }

    pub fn for_dataset(dataset: &Dataset, cutoff_month: u8, climatology: &Climatology) -> Result<Self> {
        let keys: Vec<(String, i32)> = dataset.samples.iter().map(|s| (s.region_id.clone(), s.year)).collect();
        Self::build(&dataset.series, &dataset.window, dataset.crop, &keys, cutoff_month, climatology)
    }

    pub fn cutoff(&self) -> u8 {
        self.cutoff
    }

    pub fn rows(&self) -> &[RowKey] {
        &self.rows
    }

    pub fn matrix(&self, spec: &FeatureSetSpec) -> FeatureMatrix {
        let c = self.cutoff as usize;
        let columns = spec.columns(self.cutoff);
        let d = columns.len();
        let mut vals = vec![0.0; self.rows.len() * d];
        for (mi, m) in spec.members.iter().enumerate() {
            let src = &self.values[m];
            for i in 0..self.rows.len() {
                for k in 0..c {
                    vals[i * d + mi * c + k] = src[i * c + k];
                }
            }
        }
        FeatureMatrix::from_parts(self.rows.clone(), columns, vec![ColumnKind::Monthly; d], vals)
            .expect("consistent shape")
    }

    /// Running maximum of FPAR through the cutoff month, per row.
    pub fn peak_fpar(&self) -> Vec<f64> {
        let c = self.cutoff as usize;
        let fmax = &self.values[&FeatureMember {
            variable: Variable::Fpar,
            metric: Metric::Max,
        }];
        (0..self.rows.len())
            .map(|i| fmax[i * c..(i + 1) * c].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Monthly feature columns of `spec` for every dataset sample.
pub fn build_feature_matrix(
    dataset: &Dataset,
    spec: &FeatureSetSpec,
    cutoff_month: u8,
    climatology: &Climatology,
) -> Result<FeatureMatrix> {
    Ok(MonthlyTable::for_dataset(dataset, cutoff_month, climatology)?.matrix(spec))
}

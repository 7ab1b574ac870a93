//! Synthetic panels with a planted yield model, for offline runs and tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{write_dekadal_csv, write_yield_csv, Crop, SeriesCollection, Variable, YieldRecord};
use crate::error::{Error, Result};
use crate::features::SeasonWindow;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroughtYear {
    pub year: i32,
    /// Multiplier on the seasonal FPAR peak.
    pub fpar_factor: f64,
    /// Multiplier on dekadal rainfall.
    pub rain_factor: f64,
}

/// Planted model: `yield = a + b·maxFPAR + c·(year − first_year) + offset_region + N(0, σ²)`,
/// where maxFPAR is the largest dekadal FPAR from M1 through `signal_month`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub regions: usize,
    pub years: usize,
    pub first_year: i32,
    pub seed: u64,
    pub crop: Crop,
    pub intercept: f64,
    pub fpar_slope: f64,
    pub trend_slope: f64,
    pub region_offset_sd: f64,
    pub noise_sd: f64,
    /// Last season month entering maxFPAR.
    pub signal_month: u8,
    /// Season month of the FPAR peak.
    pub peak_month: u8,
    pub drought_years: Vec<DroughtYear>,
    /// Seasons generated after the last labelled year, without yields.
    pub unlabelled_seasons: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            regions: 8,
            years: 23,
            first_year: 2001,
            seed: 7,
            crop: Crop::Maize,
            intercept: 1.0,
            fpar_slope: 6.0,
            trend_slope: 0.05,
            region_offset_sd: 0.4,
            noise_sd: 0.1,
            signal_month: 6,
            peak_month: 5,
            drought_years: vec![
                DroughtYear {
                    year: 2007,
                    fpar_factor: 0.75,
                    rain_factor: 0.4,
                },
                DroughtYear {
                    year: 2016,
                    fpar_factor: 0.7,
                    rain_factor: 0.35,
                },
            ],
            unlabelled_seasons: 1,
        }
    }
}

/// Coefficients and realised signal, written as `truth.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: SynthSpec,
    pub region_offsets: BTreeMap<String, f64>,
    /// Realised maxFPAR per `region/year`.
    pub max_fpar: BTreeMap<String, f64>,
    /// Noise-free yield per `region/year`, including unlabelled seasons.
    pub expected_yield: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct SynthPanel {
    pub series: SeriesCollection,
    pub yields: Vec<YieldRecord>,
    pub truth: SynthTruth,
}

pub fn region_name(i: usize) -> String {
    format!("R{:02}", i + 1)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regions == 0 || self.years == 0 {
            return Err(Error::Parameter("synthetic panel needs at least one region and one year".into()));
        }
        if !(1..=8).contains(&self.signal_month) || !(1..=8).contains(&self.peak_month) {
            return Err(Error::Parameter("season months must lie in 1..=8".into()));
        }
        if self.noise_sd < 0.0 || self.region_offset_sd < 0.0 {
            return Err(Error::Parameter("standard deviations must be non-negative".into()));
        }
        Ok(())
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.years as i32 - 1
    }

    pub fn generate(&self) -> Result<SynthPanel> {
        self.validate()?;
        let window = SeasonWindow::standard();
        let n_dekads = 3 * window.months() as usize;
        let signal_dekads = 3 * self.signal_month as usize;
        let peak_pos = 3.0 * (self.peak_month as f64 - 1.0) + 1.0;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut series = SeriesCollection::new();
        let mut yields = Vec::new();
        let mut truth = SynthTruth {
            spec: self.clone(),
            region_offsets: BTreeMap::new(),
            max_fpar: BTreeMap::new(),
            expected_yield: BTreeMap::new(),
        };
        let total_years = self.years + self.unlabelled_seasons;
        for r in 0..self.regions {
            let region = region_name(r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(self.seed, &[r as u64]));
            let offset = self.region_offset_sd * unit.sample(&mut rng);
            truth.region_offsets.insert(region.clone(), offset);
            let region_level = rng.random_range(0.62..0.78);
            for k in 0..total_years {
                let year = self.first_year + k as i32;
                let drought = self.drought_years.iter().find(|d| d.year == year);
                let fpar_factor = drought.map_or(1.0, |d| d.fpar_factor);
                let rain_factor = drought.map_or(1.0, |d| d.rain_factor);
                let peak = (region_level + 0.08 * unit.sample(&mut rng)).clamp(0.35, 0.95) * fpar_factor;
                let mut max_fpar = f64::NEG_INFINITY;
                for (pos, d) in window.dekads(year, window.months()).into_iter().enumerate().take(n_dekads) {
                    let shape = (-((pos as f64 - peak_pos) / 6.0).powi(2)).exp();
                    let fpar = (0.15 + (peak - 0.15).max(0.0) * shape + 0.005 * unit.sample(&mut rng)).clamp(0.0, 1.0);
                    if pos < signal_dekads {
                        max_fpar = max_fpar.max(fpar);
                    }
                    let season = (std::f64::consts::PI * pos as f64 / n_dekads as f64).sin();
                    let rain = ((30.0 + 20.0 * season + 12.0 * unit.sample(&mut rng)).max(0.0)) * rain_factor;
                    let sm = (0.12 + 0.004 * rain + 0.02 * unit.sample(&mut rng)).clamp(0.0, 1.0);
                    let temp = 19.0 + 5.0 * season + 1.2 * unit.sample(&mut rng) + if drought.is_some() { 1.5 } else { 0.0 };
                    let rad = (180.0 + 60.0 * season + 15.0 * unit.sample(&mut rng)).max(0.0);
                    for (v, value) in [
                        (Variable::Fpar, fpar),
                        (Variable::Precipitation, rain),
                        (Variable::SoilMoisture, sm),
                        (Variable::Temperature, temp),
                        (Variable::Radiation, rad),
                    ] {
                        series.entry(&region, v).observations.insert(d, value);
                    }
                }
                let key = format!("{region}/{year}");
                let expected = self.intercept
                    + self.fpar_slope * max_fpar
                    + self.trend_slope * (year - self.first_year) as f64
                    + offset;
                let noise = self.noise_sd * unit.sample(&mut rng);
                truth.max_fpar.insert(key.clone(), max_fpar);
                truth.expected_yield.insert(key, expected);
                if k < self.years {
                    let y = expected + noise;
                    if y <= 0.0 {
                        return Err(Error::Parameter(format!("planted model gives non-positive yield {y} for {region}/{year}")));
                    }
                    yields.push(YieldRecord {
                        region_id: region.clone(),
                        crop: self.crop,
                        year,
                        yield_t_ha: y,
                        area_share: 1.0 / self.regions as f64,
                    });
                }
            }
        }
        Ok(SynthPanel { series, yields, truth })
    }
}

impl SynthPanel {
    /// Writes `dekadal.csv`, `yield.csv` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let dek = dir.join("dekadal.csv");
        let yld = dir.join("yield.csv");
        let tru = dir.join("truth.json");
        write_dekadal_csv(&self.series, &dek)?;
        write_yield_csv(&self.yields, &yld)?;
        let text = serde_json::to_string_pretty(&self.truth)? + "\n";
        std::fs::write(&tru, text).map_err(|e| Error::io(&tru, e))?;
        Ok(vec![dek, yld, tru])
    }
}

/// Generates a panel and writes it to `out_dir`.
pub fn synth_generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthPanel> {
    let panel = spec.generate()?;
    panel.write(out_dir)?;
    Ok(panel)
}

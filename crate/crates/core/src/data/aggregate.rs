use std::collections::{BTreeMap, BTreeSet};

use super::{Dekad, PixelSample, SeriesCollection, Variable, YieldRecord};
use crate::error::{Error, Result};

/// Regions whose mean national area share falls strictly below this are dropped.
pub const DEFAULT_AREA_THRESHOLD: f64 = 0.005;

/// Crop-area weighted mean of pixel values per (region, variable, dekad).
pub fn aggregate_pixels_to_region(samples: &[PixelSample]) -> Result<SeriesCollection> {
    // (weighted sum, weight sum) per cell
    let mut cells: BTreeMap<(String, Variable, Dekad), (f64, f64)> = BTreeMap::new();
    for s in samples {
        s.validate().map_err(Error::Parameter)?;
        let cell = cells
            .entry((s.region_id.clone(), s.variable, s.dekad))
            .or_insert((0.0, 0.0));
        cell.0 += s.weight * s.value;
        cell.1 += s.weight;
    }
    let mut out = SeriesCollection::new();
    for ((region, variable, dekad), (wv, w)) in cells {
        if w <= 0.0 {
            return Err(Error::DegenerateWeight(format!(
                "({region}, {variable}, {dekad})"
            )));
        }
        out.entry(&region, variable).observations.insert(dekad, wv / w);
    }
    Ok(out)
}

/// Drops (crop, region) groups whose mean area share is below `threshold`.
pub fn filter_marginal_regions(records: &[YieldRecord], threshold: f64) -> Vec<YieldRecord> {
    let mut shares: BTreeMap<(super::Crop, &str), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = shares.entry((r.crop, r.region_id.as_str())).or_insert((0.0, 0));
        e.0 += r.area_share;
        e.1 += 1;
    }
    let dropped: BTreeSet<(super::Crop, &str)> = shares
        .iter()
        .filter(|(_, (sum, n))| sum / (*n as f64) < threshold)
        .map(|(k, _)| *k)
        .collect();
    for (crop, region) in &dropped {
        log::info!("event=region_filtered crop={crop} region={region} threshold={threshold}");
    }
    records
        .iter()
        .filter(|r| !dropped.contains(&(r.crop, r.region_id.as_str())))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Crop;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn px(id: &str, w: f64, v: f64) -> PixelSample {
        PixelSample {
            pixel_id: id.into(),
            region_id: "R".into(),
            weight: w,
            dekad: Dekad::new(2001, 1).unwrap(),
            variable: Variable::Temperature,
            value: v,
        }
    }

    fn value(c: &SeriesCollection) -> f64 {
        c.get("R", Variable::Temperature)
            .unwrap()
            .get(Dekad::new(2001, 1).unwrap())
            .unwrap()
    }

    #[test]
    fn weighted_mean_of_two() {
        let c = aggregate_pixels_to_region(&[px("a", 0.25, 2.0), px("b", 0.75, 4.0)]).unwrap();
        assert_eq!(value(&c), 3.5);
    }

    #[test]
    fn single_pixel_identity() {
        let c = aggregate_pixels_to_region(&[px("a", 0.3, 17.25)]).unwrap();
        assert_eq!(value(&c), 17.25);
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let err = aggregate_pixels_to_region(&[px("a", 0.0, 1.0), px("b", 0.0, 2.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeight(_)));
    }

    #[test]
    fn random_pixels_match_weighted_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pixels: Vec<PixelSample> = (0..50)
            .map(|i| px(&format!("p{i}"), rng.random_range(0.01..1.0), rng.random_range(-5.0..35.0)))
            .collect();
        let num: f64 = pixels.iter().map(|p| p.weight * p.value).sum();
        let den: f64 = pixels.iter().map(|p| p.weight).sum();
        let c = aggregate_pixels_to_region(&pixels).unwrap();
        assert!((value(&c) - num / den).abs() < 1e-12);
    }

    #[test]
    fn uniform_weights_give_arithmetic_mean_and_scaling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..30.0)).collect();
        let uniform: Vec<PixelSample> = vals.iter().enumerate().map(|(i, v)| px(&i.to_string(), 0.4, *v)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((value(&aggregate_pixels_to_region(&uniform).unwrap()) - mean).abs() < 1e-12);

        let weighted: Vec<PixelSample> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| px(&i.to_string(), 0.05 + 0.04 * i as f64 / 20.0, *v))
            .collect();
        let scaled: Vec<PixelSample> = weighted.iter().map(|p| PixelSample { weight: p.weight * 10.0, ..p.clone() }).collect();
        let a = value(&aggregate_pixels_to_region(&weighted).unwrap());
        let b = value(&aggregate_pixels_to_region(&scaled).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    fn rec(region: &str, share: f64) -> YieldRecord {
        YieldRecord {
            region_id: region.into(),
            crop: Crop::Maize,
            year: 2001,
            yield_t_ha: 3.0,
            area_share: share,
        }
    }

    #[test]
    fn marginal_regions_removed_strictly() {
        let kept = filter_marginal_regions(&[rec("A", 0.4), rec("B", 0.004)], DEFAULT_AREA_THRESHOLD);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].region_id, "A");

        let all = vec![rec("A", 0.4), rec("B", 0.1)];
        assert_eq!(filter_marginal_regions(&all, DEFAULT_AREA_THRESHOLD), all);

        let boundary = filter_marginal_regions(&[rec("C", 0.005)], DEFAULT_AREA_THRESHOLD);
        assert_eq!(boundary.len(), 1);
    }
}

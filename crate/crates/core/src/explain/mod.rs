//! Marginal Shapley attributions with mean imputation from a background set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::OHE_PREFIX;
use crate::models::Matrix;
use crate::seed;

/// Largest dimension handled by exact enumeration.
pub const MAX_EXACT_FEATURES: usize = 12;

/// Smallest permutation count accepted by the sampled estimator.
pub const MIN_PERMUTATIONS: usize = 50;

/// Name of the summed region-indicator attribution.
pub const REGION_FEATURE: &str = "adm_name";

/// A batch predictor.
pub type Predict<'a> = &'a (dyn Fn(&Matrix) -> Vec<f64> + Sync);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub instance: String,
    pub names: Vec<String>,
    /// Contribution of each feature, in prediction units.
    pub values: Vec<f64>,
    /// Prediction with every feature at its background mean.
    pub base: f64,
    pub prediction: f64,
}

impl Attribution {
    /// `|Σφ + base − f(x)|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.values.iter().sum::<f64>() + self.base - self.prediction).abs()
    }

    /// Sums columns starting with `prefix` into one attribution named `name`,
    /// placed where the first such column was.
    pub fn grouped(&self, prefix: &str, name: &str) -> Attribution {
        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut slot: Option<usize> = None;
        for (n, v) in self.names.iter().zip(&self.values) {
            if n.starts_with(prefix) {
                match slot {
                    Some(s) => values[s] += v,
                    None => {
                        slot = Some(values.len());
                        names.push(name.to_string());
                        values.push(*v);
                    }
                }
            } else {
                names.push(n.clone());
                values.push(*v);
            }
        }
        Attribution {
            instance: self.instance.clone(),
            names,
            values,
            base: self.base,
            prediction: self.prediction,
        }
    }

    /// Region indicators summed into a single `adm_name` attribution.
    pub fn with_regions_grouped(&self) -> Attribution {
        self.grouped(OHE_PREFIX, REGION_FEATURE)
    }
}

fn column_means(background: &Matrix) -> Result<Vec<f64>> {
    if background.n == 0 {
        return Err(Error::InsufficientData("empty background set".into()));
    }
    let mut m = vec![0.0; background.d];
    for i in 0..background.n {
        for (a, v) in m.iter_mut().zip(background.row(i)) {
            *a += v;
        }
    }
    Ok(m.into_iter().map(|s| s / background.n as f64).collect())
}

fn check(instance: &[f64], background: &Matrix, names: &[String]) -> Result<()> {
    if instance.len() != background.d || names.len() != background.d {
        return Err(Error::Parameter(format!(
            "instance has {} values, background {} columns, {} names",
            instance.len(),
            background.d,
            names.len()
        )));
    }
    Ok(())
}

/// Exact Shapley values over all 2^d coalitions.
pub fn shapley_exact(f: Predict, instance: &[f64], background: &Matrix, names: &[String], id: &str) -> Result<Attribution> {
    check(instance, background, names)?;
    let d = instance.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::Capacity(format!(
            "exact Shapley values enumerate 2^{d} coalitions; use sampled mode above {MAX_EXACT_FEATURES} features"
        )));
    }
    let means = column_means(background)?;
    let n_masks = 1usize << d;
    let mut data = Vec::with_capacity(n_masks * d);
    for mask in 0..n_masks {
        for j in 0..d {
            data.push(if mask >> j & 1 == 1 { instance[j] } else { means[j] });
        }
    }
    let v = f(&Matrix::new(n_masks, d, data)?);
    // weight of a coalition of size s not containing i: s!(d-s-1)!/d!
    let mut fact = vec![1.0f64; d + 1];
    for k in 1..=d {
        fact[k] = fact[k - 1] * k as f64;
    }
    let w: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                *p += w[mask.count_ones() as usize] * (v[mask | bit] - v[mask]);
            }
        }
    }
    Ok(Attribution {
        instance: id.to_string(),
        names: names.to_vec(),
        values: phi,
        base: v[0],
        prediction: v[n_masks - 1],
    })
}

/// Permutation-sampling estimate, stratified by position.
///
/// A feature's position in a uniform random ordering is uniform over `0..d`
/// and, given position `k`, its predecessors are a uniform `k`-subset of the
/// other features. So the budget of `n_permutations` orderings gives each
/// feature `n_permutations / d` (rounded up) predecessor sets per position,
/// drawn without replacement; a position with no more distinct sets than
/// that is enumerated. Deterministic per seed. Any residual against the
/// efficiency identity is spread in proportion to |φ|.
pub fn shapley_sampled(
    f: Predict,
    instance: &[f64],
    background: &Matrix,
    names: &[String],
    id: &str,
    n_permutations: usize,
    base_seed: u64,
) -> Result<Attribution> {
    check(instance, background, names)?;
    if n_permutations < MIN_PERMUTATIONS {
        return Err(Error::Parameter(format!(
            "sampled Shapley values need at least {MIN_PERMUTATIONS} permutations, got {n_permutations}"
        )));
    }
    let d = instance.len();
    let means = column_means(background)?;
    let ends = {
        let mut data = means.clone();
        data.extend_from_slice(instance);
        f(&Matrix::new(2, d, data)?)
    };
    let (base, prediction) = (ends[0], ends[1]);
    if d == 0 {
        return Ok(Attribution {
            instance: id.to_string(),
            names: Vec::new(),
            values: Vec::new(),
            base,
            prediction,
        });
    }
    let per_stratum = n_permutations.div_ceil(d);
    let mut phi: Vec<f64> = (0..d)
        .into_par_iter()
        .map(|i| {
            let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
            let mut rows = Vec::new();
            let mut weights = Vec::new();
            for k in 0..d {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base_seed, &[i as u64, k as u64]));
                let sets = predecessor_sets(&others, k, per_stratum, &mut rng);
                let w = 1.0 / (d * sets.len()) as f64;
                for set in sets {
                    let mut row = means.clone();
                    for &j in &set {
                        row[j] = instance[j];
                    }
                    rows.extend_from_slice(&row);
                    row[i] = instance[i];
                    rows.extend_from_slice(&row);
                    weights.push(w);
                }
            }
            let v = f(&Matrix::new(2 * weights.len(), d, rows).expect("shape"));
            weights.iter().enumerate().map(|(m, w)| w * (v[2 * m + 1] - v[2 * m])).sum()
        })
        .collect();
    let residual = prediction - base - phi.iter().sum::<f64>();
    let mass: f64 = phi.iter().map(|v| v.abs()).sum();
    if mass > 0.0 {
        for v in phi.iter_mut() {
            *v += residual * v.abs() / mass;
        }
    } else if residual != 0.0 {
        for v in phi.iter_mut() {
            *v += residual / d as f64;
        }
    }
    Ok(Attribution {
        instance: id.to_string(),
        names: names.to_vec(),
        values: phi,
        base,
        prediction,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c.saturating_mul((n - j) as u128) / (j + 1) as u128;
    }
    c
}

/// All `k`-subsets of `pool` in lexicographic order.
fn all_subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&t| pool[t]).collect());
        let Some(p) = (0..k).rev().find(|&p| idx[p] < pool.len() - k + p) else {
            return out;
        };
        idx[p] += 1;
        for q in p + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Up to `m` distinct uniform `k`-subsets of `pool`; all of them when there are at most `m`.
fn predecessor_sets(pool: &[usize], k: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let total = binomial(pool.len(), k);
    if total <= 2 * m as u128 {
        let mut all = all_subsets(pool, k);
        if all.len() > m {
            all.shuffle(rng);
            all.truncate(m);
        }
        return all;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(m);
    let mut scratch = pool.to_vec();
    while out.len() < m {
        let (chosen, _) = scratch.partial_shuffle(rng, k);
        let mut set = chosen.to_vec();
        set.sort_unstable();
        if seen.insert(set.clone()) {
            out.push(set);
        }
    }
    out
}

/// Exact below the capacity limit, sampled above it.
pub fn shapley_auto(
    f: Predict,
    instance: &[f64],
    background: &Matrix,
    names: &[String],
    id: &str,
    n_permutations: usize,
    base_seed: u64,
) -> Result<Attribution> {
    if instance.len() <= MAX_EXACT_FEATURES {
        shapley_exact(f, instance, background, names, id)
    } else {
        shapley_sampled(f, instance, background, names, id, n_permutations, base_seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub feature: String,
    pub mean_abs_attribution: f64,
    pub rank: usize,
}

/// Features by descending mean |φ|, ties by name; rank 1 is the most important.
pub fn rank_features(atts: &[Attribution]) -> Result<Vec<FeatureRank>> {
    if atts.is_empty() {
        return Err(Error::InsufficientData("no attributions to rank".into()));
    }
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for a in atts {
        for (n, v) in a.names.iter().zip(&a.values) {
            let e = acc.entry(n).or_default();
            e.0 += v.abs();
            e.1 += 1;
        }
    }
    let mut out: Vec<(String, f64)> = acc.into_iter().map(|(n, (s, c))| (n.to_string(), s / c as f64)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, (feature, m))| FeatureRank {
            feature,
            mean_abs_attribution: m,
            rank: i + 1,
        })
        .collect())
}

/// `feature,mean_abs_attribution,rank`
pub fn shap_csv(ranks: &[FeatureRank]) -> String {
    let mut s = String::from("feature,mean_abs_attribution,rank\n");
    for r in ranks {
        s.push_str(&format!("{},{:.6},{}\n", r.feature, r.mean_abs_attribution, r.rank));
    }
    s
}

/// Per-instance long format: `instance,feature,attribution,base,prediction`.
pub fn attributions_long_csv(atts: &[Attribution]) -> String {
    let mut s = String::from("instance,feature,attribution,base,prediction\n");
    for a in atts {
        for (n, v) in a.names.iter().zip(&a.values) {
            s.push_str(&format!("{},{},{},{},{}\n", a.instance, n, v, a.base, a.prediction));
        }
    }
    s
}

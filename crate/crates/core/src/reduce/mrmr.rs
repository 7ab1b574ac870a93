use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Pearson correlation; 0 when either side has no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Greedy max-relevance min-redundancy over the non-categorical columns.
/// Scores are |corr with y| minus mean |corr with already selected|; ties go
/// to the lexicographically smaller column name.
pub fn mrmr_select(x: &FeatureMatrix, y: &[f64], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Parameter("mrmr k must be positive".into()));
    }
    let numeric = x.indices_where(|c| !c.is_categorical());
    let cols: Vec<Vec<f64>> = numeric.iter().map(|&j| x.column(j)).collect();
    let names: Vec<&String> = numeric.iter().map(|&j| &x.columns()[j]).collect();
    let relevance: Vec<f64> = cols.iter().map(|c| pearson(c, y).abs()).collect();
    let k = k.min(cols.len());
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut redundancy_sum = vec![0.0; cols.len()];
    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for f in 0..cols.len() {
            if selected.contains(&f) {
                continue;
            }
            let score = if selected.is_empty() {
                relevance[f]
            } else {
                relevance[f] - redundancy_sum[f] / selected.len() as f64
            };
            best = match best {
                None => Some((f, score)),
                Some((b, bs)) if score > bs || (score == bs && names[f] < names[b]) => Some((f, score)),
                keep => keep,
            };
        }
        let (f, _) = best.expect("candidates remain");
        selected.push(f);
        for g in 0..cols.len() {
            if !selected.contains(&g) {
                redundancy_sum[g] += pearson(&cols[g], &cols[f]).abs();
            }
        }
    }
    Ok(selected.into_iter().map(|f| names[f].clone()).collect())
}

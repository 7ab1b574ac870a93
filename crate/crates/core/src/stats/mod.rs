//! Scores, one-way ANOVA, Tukey HSD with letter displays, and report output.

mod cld;
mod report;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use cld::{compact_letters, letters_valid};
pub use report::{emit_report, render_comparison_svg, render_forecast_svg, summary_csv, RegionBar, SummaryRow};
pub use special::{beta_inc, f_sf, ptukey, qtukey};

/// JSON numbers for finite values, strings for infinities and NaN.
mod lenient {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_str("-Infinity")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Num {
            F(f64),
            S(String),
        }
        match Num::deserialize(d)? {
            Num::F(v) => Ok(v),
            Num::S(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("bad number `{s}`"))),
            },
        }
    }
}

/// Root mean square error as a percentage of the crop mean yield.
pub fn rrmsep(predicted: &[f64], observed: &[f64], crop_mean: f64) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(Error::Parameter(format!(
            "rrmsep needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            observed.len()
        )));
    }
    if !(crop_mean > 0.0) {
        return Err(Error::Parameter(format!("crop mean must be positive, got {crop_mean}")));
    }
    let mse = predicted.iter().zip(observed).map(|(p, o)| (p - o).powi(2)).sum::<f64>() / predicted.len() as f64;
    Ok(100.0 * mse.sqrt() / crop_mean)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    #[serde(with = "lenient")]
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ms_within: f64,
    /// Set when within-group variance is zero but means differ.
    pub degenerate: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-way analysis of variance.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Parameter("anova needs at least 2 groups of at least 2 values".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ss_between: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ss_within: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum();
    let df_between = (groups.len() - 1) as f64;
    let df_within = (n - groups.len()) as f64;
    let ms_within = ss_within / df_within;
    let scale = groups.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let tiny = 1e-24 * scale * scale * n as f64;
    if ss_within <= tiny {
        if ss_between <= tiny {
            return Err(Error::Undefined("anova on identical values".into()));
        }
        log::warn!("event=anova_degenerate reason=zero_within_variance");
        return Ok(AnovaResult {
            f: f64::INFINITY,
            p: 0.0,
            df_between,
            df_within,
            ss_between,
            ss_within,
            ms_within,
            degenerate: true,
        });
    }
    let f = (ss_between / df_between) / ms_within;
    Ok(AnovaResult {
        f,
        p: f_sf(f, df_between, df_within)?,
        df_between,
        df_within,
        ss_between,
        ss_within,
        ms_within,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub q_crit: f64,
    pub means: Vec<f64>,
    /// `significant[i][j]`: groups i and j differ at `alpha`.
    pub significant: Vec<Vec<bool>>,
    pub letters: Vec<String>,
}

/// Tukey-Kramer honestly significant differences plus a compact letter display.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<TukeyResult> {
    let anova = anova_oneway(groups)?;
    let k = groups.len();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let q_crit = qtukey(alpha, k, anova.df_within)?;
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let se = (anova.ms_within / 2.0 * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let s = (means[i] - means[j]).abs() > q_crit * se;
            significant[i][j] = s;
            significant[j][i] = s;
        }
    }
    let letters = compact_letters(&means, &significant);
    Ok(TukeyResult {
        alpha,
        q_crit,
        means,
        significant,
        letters,
    })
}

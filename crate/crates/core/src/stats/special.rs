//! Special functions and quadrature used by the tests of significance.

use statrs::function::{erf::erfc, gamma::ln_gamma};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!("incomplete beta continued fraction failed for a={a}, b={b}, x={x}")))
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("incomplete beta outside domain: a={a}, b={b}, x={x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    beta_inc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))
}

/// Adaptive Gauss-Kronrod (7/15) quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut evals = 0usize;
    let v = gk_adapt(f, a, b, tol, 0, &mut evals)?;
    Ok(v)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn gk_adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize, evals: &mut usize) -> Result<f64> {
    *evals += 15;
    let (v, err) = gk15(f, a, b);
    if err <= tol || (b - a).abs() < 1e-12 {
        return Ok(v);
    }
    if depth >= 40 || *evals > 2_000_000 {
        return Err(Error::Numeric(format!(
            "quadrature on [{a}, {b}] did not reach tolerance {tol:e} (estimate {err:e}, depth {depth})"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(gk_adapt(f, a, m, tol / 2.0, depth + 1, evals)? + gk_adapt(f, m, b, tol / 2.0, depth + 1, evals)?)
}

/// `P(range of k standard normals <= w)`.
fn range_cdf(w: f64, k: usize, tol: f64) -> Result<f64> {
    if w <= 0.0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    let g = |z: f64| {
        let d = norm_cdf(z) - norm_cdf(z - w);
        if d <= 0.0 {
            0.0
        } else {
            kf * norm_pdf(z) * d.powf(kf - 1.0)
        }
    };
    // integrand support is essentially [-8, w + 8]
    let v = integrate(&g, -8.5, 0.0, tol / 4.0)? + integrate(&g, 0.0, w + 8.5, tol / 4.0)?;
    Ok(v.clamp(0.0, 1.0))
}

/// CDF of the studentized range `q` for `k` groups and `df` error degrees of
/// freedom (`f64::INFINITY` for the known-variance case).
pub fn ptukey(q: f64, k: usize, df: f64, tol: f64) -> Result<f64> {
    if k < 2 || !(df > 0.0) {
        return Err(Error::Parameter(format!("studentized range needs k >= 2 and df > 0, got k={k}, df={df}")));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    if df.is_infinite() || df > 25_000.0 {
        return range_cdf(q, k, tol);
    }
    // density of s = sqrt(chi2_df / df)
    let ln_c = (df / 2.0) * df.ln() - ln_gamma(df / 2.0) - (df / 2.0 - 1.0) * 2f64.ln();
    let dens = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (ln_c + (df - 1.0) * s.ln() - df * s * s / 2.0).exp()
        }
    };
    let sd = (1.0 / (2.0 * df)).sqrt();
    let lo = (1.0 - 12.0 * sd).max(0.0);
    let hi = 1.0 + 12.0 * sd + 1.0 / df.sqrt() * 4.0;
    let inner_tol = tol / 10.0;
    let err = std::cell::Cell::new(None);
    let outer = |s: f64| {
        let d = dens(s);
        if d < 1e-300 {
            return 0.0;
        }
        match range_cdf(q * s, k, inner_tol) {
            Ok(v) => d * v,
            Err(e) => {
                err.set(Some(e.to_string()));
                0.0
            }
        }
    };
    let mut v = 0.0;
    let cuts = [lo, 0.5 * (lo + 1.0), 1.0, 0.5 * (1.0 + hi), hi];
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            v += integrate(&outer, w[0], w[1], tol / 4.0)?;
        }
    }
    if let Some(e) = err.take() {
        return Err(Error::Numeric(e));
    }
    // density mass beyond `hi` has range CDF ~1
    let tail = integrate(&dens, hi, hi + 50.0 * sd + 10.0, tol / 4.0)?;
    Ok((v + tail).clamp(0.0, 1.0))
}

/// Upper-`alpha` critical value of the studentized range.
pub fn qtukey(alpha: f64, k: usize, df: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let target = 1.0 - alpha;
    let tol = 1e-7;
    let (mut lo, mut hi) = (0.0, 2.0);
    while ptukey(hi, k, df, tol)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Numeric(format!("studentized range quantile bracket failed (k={k}, df={df})")));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ptukey(mid, k, df, tol)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-7 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::protocol::{quantile_key, Op, Request, Response};

/// Neighbours averaged by the mock backend.
pub const MOCK_K: usize = 5;

/// Deterministic stand-in for a foundation-model backend: k-nearest-neighbour
/// mean in train-standardised feature space, quantiles from the neighbours.
/// Categorical columns enter the distance unscaled.
pub fn mock_fit_predict(req: &Request) -> Response {
    if let Err(e) = req.validate() {
        return Response::error(req.id, "bad_request", e.to_string());
    }
    let (train, test) = (req.train.as_ref().expect("validated"), req.test.as_ref().expect("validated"));
    let n = train.x.len();
    if n == 0 {
        return Response::error(req.id, "empty_train", "training set is empty");
    }
    let d = train.column_names.len();
    let categorical: Vec<bool> = train.column_names.iter().map(|c| train.categorical_columns.contains(c)).collect();
    // per-column standardisation from finite training values
    let mut mean = vec![0.0; d];
    let mut sd = vec![1.0; d];
    for j in 0..d {
        let vals: Vec<f64> = train.x.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
        if vals.is_empty() || categorical[j] {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        mean[j] = m;
        sd[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let z = |row: &[f64]| -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| if v.is_finite() { (v - mean[j]) / sd[j] } else { 0.0 })
            .collect()
    };
    let ztrain: Vec<Vec<f64>> = train.x.iter().map(|r| z(r)).collect();
    let k = MOCK_K.min(n);
    let quantiles = req.options.as_ref().map(|o| o.quantiles.clone()).unwrap_or_default();
    let mut means = Vec::with_capacity(test.x.len());
    let mut qs: BTreeMap<String, Vec<f64>> = quantiles.iter().map(|p| (quantile_key(*p), Vec::new())).collect();
    for row in &test.x {
        let zr = z(row);
        let mut dist: Vec<(f64, usize)> = ztrain
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iter().zip(&zr).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut ys: Vec<f64> = dist[..k].iter().map(|(_, i)| train.y[*i]).collect();
        means.push(ys.iter().sum::<f64>() / k as f64);
        ys.sort_by(f64::total_cmp);
        for p in &quantiles {
            qs.get_mut(&quantile_key(*p)).expect("key").push(empirical_quantile(&ys, *p));
        }
    }
    Response {
        id: req.id,
        mean: Some(means),
        quantiles: (!quantiles.is_empty()).then_some(qs),
        ..Default::default()
    }
}

/// Linear interpolation between order statistics of sorted `ys`.
pub fn empirical_quantile(ys: &[f64], p: f64) -> f64 {
    let h = (ys.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(ys.len() - 1);
    ys[lo] + (h - lo as f64) * (ys[hi] - ys[lo])
}

/// Answers one request line; `None` asks the loop to stop after replying.
pub fn handle_line(line: &str, fit_predict: &mut dyn FnMut(&Request) -> Response) -> (Response, bool) {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
                .unwrap_or(0);
            return (Response::error(id, "protocol", format!("unreadable request: {e}")), false);
        }
    };
    match req.op {
        Op::Ping => (
            Response {
                id: req.id,
                pong: Some(true),
                ..Default::default()
            },
            false,
        ),
        Op::Shutdown => (
            Response {
                id: req.id,
                ok: Some(true),
                ..Default::default()
            },
            true,
        ),
        Op::FitPredict => (fit_predict(&req), false),
    }
}

/// Serves requests line by line until shutdown or end of input.
pub fn serve_loop<R: BufRead, W: Write>(input: R, mut output: W, fit_predict: &mut dyn FnMut(&Request) -> Response) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, stop) = handle_line(&line, fit_predict);
        output.write_all(resp.to_line().as_bytes())?;
        output.flush()?;
        if stop {
            break;
        }
    }
    Ok(())
}

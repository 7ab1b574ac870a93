use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yieldcast_core::bridge::{
    fit_predict, mock_fit_predict, quantile_key, serve_loop, Backend, MockBackend, Request, RequestOptions, Response, TestBlock, TrainBlock, MOCK_K,
};
use yieldcast_core::Error;

fn wire_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => any::<f64>(),
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
        1 => Just(-0.0),
    ]
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| if x.is_nan() { f64::NAN.to_bits() } else { x.to_bits() }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn requests_round_trip_bit_for_bit(
        id in any::<u64>(),
        rows in prop::collection::vec(prop::collection::vec(wire_float(), 3), 0..6),
        y in prop::collection::vec(wire_float(), 0..6),
        seed in any::<u64>(),
        budget in prop::option::of(0.0f64..1e4),
    ) {
        let names = vec!["a".to_string(), "b".to_string(), "adm".to_string()];
        let req = Request::fit_predict(
            id,
            TrainBlock { x: rows.clone(), y: y.clone(), column_names: names, categorical_columns: vec!["adm".into()] },
            TestBlock { x: rows.clone() },
            RequestOptions { quantiles: vec![0.05, 0.5, 0.95], seed, time_budget_s: budget },
        );
        let line = req.to_line();
        prop_assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        let back: Request = serde_json::from_str(&line).unwrap();
        let (t0, t1) = (req.train.as_ref().unwrap(), back.train.as_ref().unwrap());
        prop_assert_eq!(bits(&t0.y), bits(&t1.y));
        for (a, b) in t0.x.iter().zip(&t1.x) {
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(back.id, id);
        prop_assert_eq!(&back.options, &req.options);
        prop_assert_eq!(&t1.categorical_columns, &t0.categorical_columns);
    }

    #[test]
    fn responses_round_trip_bit_for_bit(id in any::<u64>(), mean in prop::collection::vec(wire_float(), 0..8)) {
        let mut q = BTreeMap::new();
        q.insert(quantile_key(0.1), mean.clone());
        let r = Response { id, mean: Some(mean.clone()), quantiles: Some(q), ..Default::default() };
        let back = Response::from_line(&r.to_line()).unwrap();
        prop_assert_eq!(bits(back.mean.as_ref().unwrap()), bits(&mean));
        prop_assert_eq!(bits(&back.quantiles.unwrap()["0.1"]), bits(&mean));
    }
}

/// kNN by full sort of every training row, standardised with population statistics.
fn knn_oracle(train: &TrainBlock, row: &[f64]) -> (f64, Vec<f64>) {
    let n = train.x.len();
    let d = row.len();
    let stats: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            if train.categorical_columns.contains(&train.column_names[j]) {
                return (0.0, 1.0);
            }
            let m = train.x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let v = train.x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
            (m, if v > 0.0 { v.sqrt() } else { 1.0 })
        })
        .collect();
    let dist = |r: &[f64]| -> f64 { (0..d).map(|j| ((r[j] - row[j]) / stats[j].1).powi(2)).sum() };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist(&train.x[a]).partial_cmp(&dist(&train.x[b])).unwrap().then(a.cmp(&b)));
    let k = MOCK_K.min(n);
    let mut ys: Vec<f64> = order[..k].iter().map(|&i| train.y[i]).collect();
    let mean = ys.iter().sum::<f64>() / k as f64;
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (mean, ys)
}

fn random_block(r: &mut ChaCha8Rng, n: usize, m: usize) -> (TrainBlock, TestBlock) {
    let row = |r: &mut ChaCha8Rng| vec![r.random_range(-5.0..5.0), r.random_range(0.0..100.0), r.random_range(0..3) as f64];
    let x: Vec<Vec<f64>> = (0..n).map(|_| row(r)).collect();
    let y = x.iter().map(|v| v[0] + 0.02 * v[1] + r.random_range(-0.3..0.3)).collect();
    let names = vec!["a".to_string(), "b".to_string(), "region".to_string()];
    (
        TrainBlock { x, y, column_names: names, categorical_columns: vec!["region".into()] },
        TestBlock { x: (0..m).map(|_| row(r)).collect() },
    )
}

#[test]
fn mock_matches_brute_force_neighbours() {
    let mut r = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let n = r.random_range(1..40);
        let (train, test) = random_block(&mut r, n, 6);
        let mut backend = MockBackend::default();
        let opts = RequestOptions { quantiles: vec![0.1, 0.5, 0.9], seed: 1, time_budget_s: None };
        let pred = fit_predict(&mut backend, train.clone(), test.clone(), opts).unwrap();
        for (i, row) in test.x.iter().enumerate() {
            let (mean, ys) = knn_oracle(&train, row);
            assert!((pred.mean[i] - mean).abs() < 1e-12);
            // median of the neighbour labels by direct definition
            let k = ys.len();
            let med = if k % 2 == 1 { ys[k / 2] } else { 0.5 * (ys[k / 2 - 1] + ys[k / 2]) };
            assert!((pred.quantiles[1].1[i] - med).abs() < 1e-12);
            assert!(pred.quantiles[0].1[i] <= pred.quantiles[1].1[i] && pred.quantiles[1].1[i] <= pred.quantiles[2].1[i]);
            assert!(ys[0] <= pred.quantiles[0].1[i] && pred.quantiles[2].1[i] <= ys[k - 1]);
        }
        assert_eq!(backend.calls, 1);
    }
}

#[test]
fn constant_label_is_reproduced_exactly() {
    let mut r = ChaCha8Rng::seed_from_u64(51);
    let (mut train, test) = random_block(&mut r, 20, 5);
    train.y = vec![4.25; 20];
    let opts = RequestOptions { quantiles: vec![0.05, 0.95], ..Default::default() };
    let pred = fit_predict(&mut MockBackend::default(), train, test, opts).unwrap();
    assert!(pred.mean.iter().all(|v| *v == 4.25));
    assert!(pred.quantiles.iter().all(|(_, v)| v.iter().all(|q| *q == 4.25)));
}

#[test]
fn empty_train_and_malformed_requests_are_errors() {
    let (train, test) = (
        TrainBlock { x: vec![], y: vec![], column_names: vec!["a".into()], categorical_columns: vec![] },
        TestBlock { x: vec![vec![1.0]] },
    );
    let err = fit_predict(&mut MockBackend::default(), train.clone(), test.clone(), RequestOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Backend { ref code, .. } if code == "empty_train"), "{err}");

    let bad = TrainBlock { y: vec![1.0], ..train.clone() };
    assert!(matches!(fit_predict(&mut MockBackend::default(), bad, test.clone(), RequestOptions::default()), Err(Error::Protocol(_))));

    let crossing = RequestOptions { quantiles: vec![0.9, 0.1], ..Default::default() };
    let ok_train = TrainBlock { x: vec![vec![0.0]], y: vec![1.0], ..train };
    assert!(fit_predict(&mut MockBackend::default(), ok_train.clone(), test.clone(), crossing).is_err());

    // responses that disagree with their request are rejected
    let req = Request::fit_predict(9, ok_train, test, RequestOptions::default());
    let good = mock_fit_predict(&req);
    good.validate_for(&req).unwrap();
    assert!(Response { id: 8, ..good.clone() }.validate_for(&req).is_err());
    assert!(Response { mean: Some(vec![]), ..good.clone() }.validate_for(&req).is_err());
    assert!(Response { mean: None, ..good }.validate_for(&req).is_err());
}

#[test]
fn serve_loop_answers_ping_garbage_and_stops_on_shutdown() {
    let mut r = ChaCha8Rng::seed_from_u64(52);
    let (train, test) = random_block(&mut r, 10, 2);
    let input = [
        Request::ping(1).to_line(),
        "{not json\n".to_string(),
        "\n".to_string(),
        Request::fit_predict(2, train, test, RequestOptions::default()).to_line(),
        Request::shutdown(3).to_line(),
        Request::ping(4).to_line(),
    ]
    .concat();
    let mut out = Vec::new();
    serve_loop(input.as_bytes(), &mut out, &mut mock_fit_predict).unwrap();
    let lines: Vec<Response> = String::from_utf8(out).unwrap().lines().map(|l| Response::from_line(l).unwrap()).collect();
    assert_eq!(lines.len(), 4, "stops after shutdown");
    assert_eq!(lines[0].pong, Some(true));
    assert_eq!(lines[1].error.as_ref().unwrap().code, "protocol");
    assert_eq!(lines[2].mean.as_ref().unwrap().len(), 2);
    assert_eq!((lines[3].id, lines[3].ok), (3, Some(true)));
}

#[test]
fn mock_backend_pings() {
    let mut b = MockBackend::default();
    b.ping().unwrap();
    assert_eq!(b.calls, 0);
}

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yieldcast_core::bridge::{
    fit_predict, mock_fit_predict, Backend, LaunchSpec, ProcessBackend, Request, RequestOptions, TestBlock, TrainBlock,
};
use yieldcast_core::Error;

const MOCK: &str = env!("CARGO_BIN_EXE_yieldcast-mock-backend");

fn spec(args: &[&str], timeout_s: f64) -> LaunchSpec {
    LaunchSpec {
        command: MOCK.to_string(),
        args: args.iter().map(|s| s.to_string()).collect(),
        env: vec![],
        timeout_s,
    }
}

fn random_request(r: &mut ChaCha8Rng, id: u64) -> Request {
    let d = r.random_range(1..5);
    let n = r.random_range(0..15);
    let m = r.random_range(1..4);
    let cell = |r: &mut ChaCha8Rng| match r.random_range(0..20) {
        0 => f64::NAN,
        1 => 1e-300,
        _ => r.random_range(-1e3..1e3),
    };
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| cell(r)).collect()).collect();
    let y = (0..n).map(|_| r.random_range(0.5..9.0)).collect();
    let names: Vec<String> = (0..d).map(|j| format!("c{j}")).collect();
    let categorical = if d > 1 && r.random_bool(0.5) { vec![names[d - 1].clone()] } else { vec![] };
    Request::fit_predict(
        id,
        TrainBlock { x, y, column_names: names, categorical_columns: categorical },
        TestBlock { x: (0..m).map(|_| (0..d).map(|_| cell(r)).collect()).collect() },
        RequestOptions { quantiles: vec![0.025, 0.5, 0.975], seed: r.random(), time_budget_s: None },
    )
}

#[test]
fn thousand_request_fuzz_has_no_id_mismatch() {
    let mut r = ChaCha8Rng::seed_from_u64(1000);
    for args in [&[][..], &["--reorder", "7"][..]] {
        let mut b = ProcessBackend::new(spec(args, 30.0));
        let mut mismatches = 0;
        let mut sent = 0;
        while sent < 1000 {
            let batch: Vec<Request> = (0..25).map(|_| { let id = b.next_id(); random_request(&mut r, id) }).collect();
            let resps = b.call_many(&batch).unwrap();
            for (req, resp) in batch.iter().zip(&resps) {
                if resp.id != req.id {
                    mismatches += 1;
                }
                // same answer as the in-process mock, bit for bit
                assert_eq!(resp.to_line(), mock_fit_predict(req).to_line());
            }
            sent += batch.len();
        }
        assert_eq!(mismatches, 0);
    }
}

#[test]
fn hung_backend_is_killed_and_restarted_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("hung");
    let timeout = 1.0;
    let mut b = ProcessBackend::new(spec(&["--hang-first", marker.to_str().unwrap()], timeout));
    b.ping().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let id = b.next_id();
    let req = random_request(&mut r, id);
    let start = Instant::now();
    let resp = b.call(&req).unwrap();
    let took = start.elapsed().as_secs_f64();
    assert!(marker.exists());
    assert_eq!(resp.to_line(), mock_fit_predict(&req).to_line());
    // one timeout, then a fresh process answers at once
    assert!(took >= timeout && took < 2.0 * timeout + 3.0, "{took}");
}

#[test]
fn backend_that_always_hangs_times_out_after_one_retry() {
    // the marker can never be created, so every process hangs
    let mut b = ProcessBackend::new(spec(&["--hang-first", "/nonexistent-dir/marker"], 0.5));
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let id = b.next_id();
    let start = Instant::now();
    let err = b.call(&random_request(&mut r, id)).unwrap_err();
    assert!(matches!(err, Error::BackendTimeout(_)), "{err}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn crash_reports_status_and_stderr() {
    let mut b = ProcessBackend::new(spec(&["--crash-on-fit"], 10.0));
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let id = b.next_id();
    match b.call(&random_request(&mut r, id)).unwrap_err() {
        Error::BackendCrash { status, stderr } => {
            assert!(status.contains('3'), "{status}");
            assert!(stderr.contains("crashing as requested"), "{stderr}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn constant_label_comes_back_constant() {
    let mut b = ProcessBackend::new(spec(&[], 10.0));
    let train = TrainBlock {
        x: (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect(),
        y: vec![3.5; 12],
        column_names: vec!["a".into(), "b".into()],
        categorical_columns: vec![],
    };
    let test = TestBlock { x: vec![vec![0.5, 2.0], vec![100.0, -3.0]] };
    let p = fit_predict(&mut b, train, test, RequestOptions { quantiles: vec![0.1, 0.9], ..Default::default() }).unwrap();
    assert!(p.mean.iter().all(|v| *v == 3.5));
    assert!(p.quantiles.iter().all(|(_, v)| v.iter().all(|q| *q == 3.5)));
}

#[test]
fn missing_executable_is_an_io_error() {
    let mut b = ProcessBackend::new(LaunchSpec { command: "/nonexistent/backend".into(), args: vec![], env: vec![], timeout_s: 1.0 });
    assert!(matches!(b.ping(), Err(Error::Io { .. })));
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yieldcast_core::explain::{rank_features, shap_csv, shapley_exact, shapley_sampled, Attribution, REGION_FEATURE};
use yieldcast_core::models::Matrix;
use yieldcast_core::Error;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn background(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(n, d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn means(m: &Matrix) -> Vec<f64> {
    (0..m.d).map(|j| (0..m.n).map(|i| m.get(i, j)).sum::<f64>() / m.n as f64).collect()
}

/// Random axis-aligned regression tree over `d` inputs.
#[derive(Debug)]
enum Node {
    Leaf(f64),
    Split(usize, f64, Box<Node>, Box<Node>),
}

fn random_tree(r: &mut ChaCha8Rng, d: usize, depth: usize) -> Node {
    if depth == 0 {
        return Node::Leaf(r.random_range(-3.0..3.0));
    }
    Node::Split(
        r.random_range(0..d),
        r.random_range(-0.6..0.6),
        Box::new(random_tree(r, d, depth - 1)),
        Box::new(random_tree(r, d, depth - 1)),
    )
}

fn eval(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Leaf(v) => *v,
        Node::Split(j, t, l, rt) => {
            if x[*j] <= *t {
                eval(l, x)
            } else {
                eval(rt, x)
            }
        }
    }
}

fn batch(f: impl Fn(&[f64]) -> f64 + Sync) -> impl Fn(&Matrix) -> Vec<f64> + Sync {
    move |m: &Matrix| (0..m.n).map(|i| f(m.row(i))).collect()
}

/// Average marginal contribution over every ordering of the features.
fn all_permutations_oracle(f: &dyn Fn(&[f64]) -> f64, x: &[f64], base: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut cache = vec![f64::NAN; 1 << d];
    let mut value = |mask: usize| {
        if cache[mask].is_nan() {
            let row: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { base[j] }).collect();
            cache[mask] = f(&row);
        }
        cache[mask]
    };
    let mut phi = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut count = 0usize;
    // Heap's algorithm
    let mut c = vec![0usize; d];
    let mut visit = |perm: &[usize], phi: &mut [f64]| {
        let mut mask = 0usize;
        for &j in perm {
            let before = value(mask);
            mask |= 1 << j;
            phi[j] += value(mask) - before;
        }
    };
    visit(&perm, &mut phi);
    count += 1;
    let mut i = 0;
    while i < d {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut phi);
            count += 1;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|v| v / count as f64).collect()
}

#[test]
fn exact_matches_all_permutations_on_random_trees() {
    let d = 8;
    let bg = background(40, d, 1);
    let base = means(&bg);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..3 {
        let tree = random_tree(&mut r, d, 5);
        let point = |x: &[f64]| eval(&tree, x);
        let f = batch(point);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = shapley_exact(&f, &x, &bg, &names(d), "i").unwrap();
        let oracle = all_permutations_oracle(&point, &x, &base);
        for j in 0..d {
            assert!((a.values[j] - oracle[j]).abs() < 1e-6, "trial {trial} feature {j}: {} vs {}", a.values[j], oracle[j]);
        }
        assert!(a.efficiency_gap() < 1e-6);
    }
}

#[test]
fn linear_model_attributions_are_weighted_deviations() {
    let d = 6;
    let w = [1.5, -2.0, 0.0, 0.3, 4.0, -0.7];
    let bg = background(25, d, 3);
    let m = means(&bg);
    let f = batch(|x: &[f64]| 0.5 + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
    let x = [0.2, -0.9, 5.0, 0.1, -0.4, 0.8];
    let a = shapley_exact(&f, &x, &bg, &names(d), "lin").unwrap();
    for j in 0..d {
        assert!((a.values[j] - w[j] * (x[j] - m[j])).abs() < 1e-12);
    }
    // feature 2 is never read
    assert_eq!(a.values[2], 0.0);
    let s = shapley_sampled(&f, &x, &bg, &names(d), "lin", 50, 9).unwrap();
    for j in 0..d {
        assert!((s.values[j] - a.values[j]).abs() < 1e-9);
    }
}

#[test]
fn symmetric_duplicated_features_share_credit() {
    let d = 5;
    let mut bg = background(30, d, 4);
    // x0 and x1 enter symmetrically and share a background column
    for i in 0..bg.n {
        bg.data[i * d + 1] = bg.get(i, 0);
    }
    let f = batch(|x: &[f64]| x[0].max(0.0) * (x[1] + 1.0).sin() + x[1].max(0.0) * (x[0] + 1.0).sin() + x[3]);
    let x = [0.7, 0.7, 0.1, -0.3, 0.5];
    let a = shapley_exact(&f, &x, &bg, &names(d), "sym").unwrap();
    assert!((a.values[0] - a.values[1]).abs() < 1e-12, "{:?}", a.values);
    assert!(a.values[0].abs() > 1e-3);
}

#[test]
fn constant_model_gets_zero_attributions() {
    let d = 4;
    let bg = background(10, d, 5);
    let f = batch(|_: &[f64]| 3.25);
    let x = [1.0, 2.0, 3.0, 4.0];
    for a in [
        shapley_exact(&f, &x, &bg, &names(d), "c").unwrap(),
        shapley_sampled(&f, &x, &bg, &names(d), "c", 100, 3).unwrap(),
    ] {
        assert!(a.values.iter().all(|v| *v == 0.0));
        assert_eq!(a.base, 3.25);
    }
}

#[test]
fn exact_mode_refuses_above_capacity() {
    let d = 13;
    let bg = background(5, d, 6);
    let f = batch(|x: &[f64]| x[0]);
    let err = shapley_exact(&f, &vec![0.0; d], &bg, &names(d), "big").unwrap_err();
    assert!(matches!(err, Error::Capacity(msg) if msg.contains("sampled")));
    assert!(shapley_sampled(&f, &vec![0.0; d], &bg, &names(d), "big", 49, 0).is_err());
}

fn tree_case(seed: u64) -> (Node, Vec<f64>, Matrix) {
    let d = 8;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(&mut r, d, 4);
    let x = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    (tree, x, background(60, d, seed + 100))
}

#[test]
fn sampled_is_deterministic_per_seed() {
    let (tree, x, bg) = tree_case(7);
    let f = batch(|v: &[f64]| eval(&tree, v));
    let a = shapley_sampled(&f, &x, &bg, &names(8), "t", 200, 42).unwrap();
    let b = shapley_sampled(&f, &x, &bg, &names(8), "t", 200, 42).unwrap();
    assert_eq!(a, b);
    assert!(a.efficiency_gap() < 1e-9);
}

/// Shapley values from the subset-weight formula, for widths past the exact-mode cap.
fn subset_weight_oracle(f: &dyn Fn(&[f64]) -> f64, x: &[f64], base: &[f64]) -> Vec<f64> {
    let d = x.len();
    let v: Vec<f64> = (0..1usize << d)
        .map(|mask| f(&(0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { base[j] }).collect::<Vec<_>>()))
        .collect();
    let fact = |n: usize| (1..=n).map(|t| t as f64).product::<f64>();
    let mut phi = vec![0.0; d];
    for mask in 0..1usize << d {
        let s = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *p += fact(s) * fact(d - s - 1) / fact(d) * (v[mask | 1 << j] - v[mask]);
            }
        }
    }
    phi
}

#[test]
fn sampled_mean_over_seeds_converges_toward_exact() {
    let d = 14;
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let tree = random_tree(&mut r, d, 6);
    let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let bg = background(50, d, 9);
    let point = |v: &[f64]| eval(&tree, v) + v[0] * v[1];
    let f = batch(point);
    let exact = subset_weight_oracle(&point, &x, &means(&bg));
    let err = |v: &[f64]| v.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let runs: Vec<Vec<f64>> = (0..20).map(|s| shapley_sampled(&f, &x, &bg, &names(d), "t", 100, s).unwrap().values).collect();
    let single: f64 = runs.iter().map(|v| err(v)).sum::<f64>() / runs.len() as f64;
    let avg: Vec<f64> = (0..d).map(|j| runs.iter().map(|v| v[j]).sum::<f64>() / runs.len() as f64).collect();
    // still genuinely random at this width
    assert!(single > 1e-6);
    // independent unbiased runs average toward the truth at roughly 1/√20
    assert!(err(&avg) < 0.5 * single, "averaged {} vs typical single {single}", err(&avg));
}

#[test]
fn ranking_orders_by_mean_absolute_value_then_name() {
    let mk = |vals: Vec<f64>| Attribution {
        instance: "i".into(),
        names: vec!["b".into(), "a".into(), "c".into()],
        values: vals,
        base: 0.0,
        prediction: 0.0,
    };
    let ranks = rank_features(&[mk(vec![1.0, -5.0, 1.0]), mk(vec![-1.0, 3.0, 1.0])]).unwrap();
    let order: Vec<&str> = ranks.iter().map(|r| r.feature.as_str()).collect();
    assert_eq!(order, vec!["a", "b", "c"]);
    assert_eq!(ranks[0].rank, 1);
    assert!((ranks[0].mean_abs_attribution - 4.0).abs() < 1e-12);
    assert!(shap_csv(&ranks).starts_with("feature,mean_abs_attribution,rank\na,4.000000,1\n"));
    assert!(rank_features(&[]).is_err());
}

#[test]
fn region_indicators_collapse_into_one_attribution() {
    let a = Attribution {
        instance: "i".into(),
        names: vec!["FPAR_max_M5".into(), "adm_R01".into(), "yield_trend".into(), "adm_R02".into()],
        values: vec![0.5, 0.25, 1.0, -0.5],
        base: 2.0,
        prediction: 3.25,
    };
    let g = a.with_regions_grouped();
    assert_eq!(g.names, vec!["FPAR_max_M5", REGION_FEATURE, "yield_trend"]);
    assert_eq!(g.values, vec![0.5, -0.25, 1.0]);
    assert!(g.efficiency_gap() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_mode_is_efficient_and_ignores_unread_features(
        seed in 0u64..1000,
        d in 2usize..9,
        unused in 0usize..8,
    ) {
        let unused = unused % d;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut r, d, 4);
        let f = batch(|v: &[f64]| {
            let mut w = v.to_vec();
            w[unused] = 0.0;
            eval(&tree, &w) + 0.3 * w.iter().sum::<f64>()
        });
        let bg = background(20, d, seed + 1);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = shapley_exact(&f, &x, &bg, &names(d), "p").unwrap();
        prop_assert!(a.efficiency_gap() < 1e-6);
        prop_assert_eq!(a.values[unused], 0.0);
    }
}

#[test]
fn sampled_is_within_two_percent_of_exact_at_eight_features() {
    let mut worst = 0.0f64;
    for seed in 20..26 {
        let (tree, x, bg) = tree_case(seed);
        let f = batch(|v: &[f64]| eval(&tree, v) + 0.5 * v[0] * v[1] - v[2].sin());
        let exact = shapley_exact(&f, &x, &bg, &names(8), "t").unwrap();
        let s = shapley_sampled(&f, &x, &bg, &names(8), "t", 2000, seed).unwrap();
        assert!(s.efficiency_gap() < 1e-9);
        for j in 0..8 {
            if exact.values[j].abs() > 1e-6 {
                let rel = (s.values[j] - exact.values[j]).abs() / exact.values[j].abs();
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 0.02, "worst relative error {worst}");
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use yieldcast_core::stats::{anova_oneway, beta_inc, compact_letters, f_sf, letters_valid, ptukey, qtukey, rrmsep, tukey_hsd};
use yieldcast_core::Error;

#[test]
fn anova_worked_example_gives_f_three() {
    let groups = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]];
    let a = anova_oneway(&groups).unwrap();
    assert_eq!(a.f, 3.0);
    assert_eq!((a.df_between, a.df_within), (2.0, 6.0));
    // F(2, ν) has survival (1 + 2f/ν)^(−ν/2)
    assert!((a.p - 0.125).abs() < 1e-12);
    // independent regularised incomplete beta: P(F > f) = I_{ν2/(ν2+ν1 f)}(ν2/2, ν1/2)
    let oracle = statrs::function::beta::beta_reg(3.0, 1.0, 6.0 / (6.0 + 2.0 * 3.0));
    assert!((a.p - oracle).abs() < 1e-3);
}

#[test]
fn incomplete_beta_matches_independent_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let a = rng.random_range(0.2..40.0);
        let b = rng.random_range(0.2..40.0);
        let x = rng.random_range(0.0..1.0);
        let ours = beta_inc(a, b, x).unwrap();
        let theirs = statrs::function::beta::beta_reg(a, b, x);
        assert!((ours - theirs).abs() < 1e-10, "a={a} b={b} x={x}: {ours} vs {theirs}");
    }
    for (f, d1, d2) in [(1.0, 1.0, 1.0), (4.5, 3.0, 20.0), (0.2, 10.0, 5.0)] {
        let oracle = statrs::function::beta::beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
        assert!((f_sf(f, d1, d2).unwrap() - oracle).abs() < 1e-10);
    }
}

#[test]
fn identical_groups_are_undefined_and_separated_constants_degenerate() {
    let same = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
    assert!(matches!(anova_oneway(&same), Err(Error::Undefined(_))));
    let apart = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
    let a = anova_oneway(&apart).unwrap();
    assert!(a.degenerate && a.f.is_infinite() && a.p == 0.0);
    assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
}

#[test]
fn equal_means_with_spread_give_zero_f() {
    let a = anova_oneway(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
    assert_eq!(a.f, 0.0);
    assert!((a.p - 1.0).abs() < 1e-12);
    assert!(!a.degenerate);
}

#[test]
fn tukey_q_infinite_df_reduces_to_normal_quantile() {
    // for k = 2 the range of two normals is √2·|Z|, so q = √2·z(0.975)
    let q = qtukey(0.05, 2, f64::INFINITY).unwrap();
    assert!((q - 2.772).abs() < 0.01, "{q}");
    assert!((q - std::f64::consts::SQRT_2 * 1.959_963_985).abs() < 1e-4);
}

#[test]
fn tukey_quantiles_match_published_tables() {
    for (k, df, table) in [(3, 10.0, 3.877), (4, 20.0, 3.958), (5, f64::INFINITY, 3.858), (2, 5.0, 3.635), (10, 30.0, 4.824)] {
        let q = qtukey(0.05, k, df).unwrap();
        assert!((q - table).abs() < 5e-3, "k={k} df={df}: {q} vs {table}");
    }
}

#[test]
fn studentized_range_cdf_matches_monte_carlo() {
    let (k, df, q) = (3usize, 10.0f64, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chi = ChiSquared::new(df).unwrap();
    let draws = 1_000_000;
    let mut below = 0usize;
    for _ in 0..draws {
        let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let range = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - z.iter().cloned().fold(f64::INFINITY, f64::min);
        let s = (chi.sample(&mut rng) / df).sqrt();
        if range / s <= q {
            below += 1;
        }
    }
    let mc = below as f64 / draws as f64;
    let p = ptukey(q, k, df, 1e-4).unwrap();
    assert!((p - mc).abs() < 2e-3, "quadrature {p} vs monte carlo {mc}");
}

#[test]
fn far_separated_tight_groups_get_distinct_letters() {
    let groups = vec![vec![1.0, 1.1, 0.9, 1.05], vec![9.0, 9.1, 8.9, 9.05]];
    let t = tukey_hsd(&groups, 0.05).unwrap();
    assert!(t.significant[0][1]);
    assert_eq!(t.letters, vec!["b".to_string(), "a".to_string()]);
}

#[test]
fn overlapping_chain_yields_a_ab_b() {
    // means descending 1 > 2 > 3 with only the extremes separated
    let means = [3.0, 2.0, 1.0];
    let sig = vec![vec![false, false, true], vec![false, false, false], vec![true, false, false]];
    assert_eq!(compact_letters(&means, &sig), vec!["a", "ab", "b"]);
    // the same pattern arises from data
    let groups = vec![vec![10.0, 11.0, 9.0, 10.5, 9.5], vec![9.2, 10.2, 8.2, 9.7, 8.7], vec![8.4, 9.4, 7.4, 8.9, 7.9]];
    let t = tukey_hsd(&groups, 0.05).unwrap();
    assert_eq!(t.letters, vec!["a", "ab", "b"], "{:?}", t.significant);
}

fn symmetric(k: usize, bits: &[bool]) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; k]; k];
    let mut it = bits.iter();
    for i in 0..k {
        for j in i + 1..k {
            let b = *it.next().unwrap_or(&false);
            m[i][j] = b;
            m[j][i] = b;
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn letter_display_is_valid_for_any_layout(
        k in 2usize..9,
        means in prop::collection::vec(-50.0f64..50.0, 9),
        bits in prop::collection::vec(any::<bool>(), 36),
    ) {
        let sig = symmetric(k, &bits);
        let letters = compact_letters(&means[..k], &sig);
        prop_assert_eq!(letters.len(), k);
        prop_assert!(letters.iter().all(|l| !l.is_empty()));
        prop_assert!(letters_valid(&letters, &sig));
    }

    #[test]
    fn f_is_shift_and_scale_invariant(
        groups in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3..7), 2..5),
        shift in -100.0f64..100.0,
        scale in prop_oneof![-20.0f64..-0.1, 0.1f64..20.0],
    ) {
        let Ok(base) = anova_oneway(&groups) else { return Ok(()) };
        prop_assume!(base.f.is_finite() && base.ms_within > 1e-9);
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| (v + shift) * scale).collect()).collect();
        let m = anova_oneway(&moved).unwrap();
        prop_assert!((m.f - base.f).abs() <= 1e-6 * (1.0 + base.f));
    }

    #[test]
    fn tukey_is_symmetric_and_follows_group_permutation(
        groups in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3..6), 3..6),
        rot in 1usize..5,
    ) {
        let Ok(t) = tukey_hsd(&groups, 0.05) else { return Ok(()) };
        let k = groups.len();
        for i in 0..k {
            prop_assert!(!t.significant[i][i]);
            for j in 0..k {
                prop_assert_eq!(t.significant[i][j], t.significant[j][i]);
            }
        }
        prop_assert!(letters_valid(&t.letters, &t.significant));
        let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| groups[p].clone()).collect();
        let tp = tukey_hsd(&permuted, 0.05).unwrap();
        for i in 0..k {
            prop_assert!((tp.means[i] - t.means[perm[i]]).abs() < 1e-12);
            for j in 0..k {
                prop_assert_eq!(tp.significant[i][j], t.significant[perm[i]][perm[j]]);
            }
        }
        let base = anova_oneway(&groups).unwrap();
        let moved = anova_oneway(&permuted).unwrap();
        prop_assert!((base.f - moved.f).abs() <= 1e-9 * (1.0 + base.f.abs()));
    }
}

#[test]
fn rrmsep_definition() {
    let v = rrmsep(&[2.0, 4.0], &[1.0, 5.0], 4.0).unwrap();
    assert!((v - 25.0).abs() < 1e-12);
    assert!(rrmsep(&[1.0], &[1.0, 2.0], 1.0).is_err());
    assert!(rrmsep(&[1.0], &[1.0], 0.0).is_err());
}

//! Property tests for the networks, the ensemble, the losses and the metrics.

mod common;

use common::*;
use maven::ensemble::{aggregate_mean, select_random};
use maven::losses::{
    d_fake_loss, d_real_loss, d_supervised_loss, feature_matching_loss, g_adversarial_loss, kl_loss,
};
use maven::metrics::{
    accuracy, compute_ddd, compute_fid, compute_gaussian_stats, compute_moment_summary,
    confusion_counts, f1_per_class, MomentSummary, DEFAULT_DDD_WEIGHTS,
};
use maven::networks::{class_probabilities, reparameterize, EncoderOutput, Generator, LatentCode};
use maven::nn::Mode;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        proptest::collection::vec(lo..hi, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn prob_rows() -> impl Strategy<Value = Array2<f64>> {
    matrix(1..6, 2..6, -8.0, 8.0).prop_map(|l| class_probabilities(&l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(logits in matrix(1..8, 2..8, -30.0, 30.0), shift in -50.0..50.0f64) {
        let p = class_probabilities(&logits).unwrap();
        let q = class_probabilities(&(&logits + shift)).unwrap();
        for (row, l) in p.rows().into_iter().zip(logits.rows()) {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            let oracle = softmax_row(l.as_slice().unwrap());
            for (a, b) in row.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn reparameterize_is_affine_in_epsilon(
        mu in matrix(3..4, 2..3, -2.0, 2.0),
        lv in matrix(3..4, 2..3, -3.0, 2.0),
        e1 in matrix(3..4, 2..3, -3.0, 3.0),
        e2 in matrix(3..4, 2..3, -3.0, 3.0),
    ) {
        let enc = EncoderOutput { mu, log_sigma_sq: lv };
        let z = |e: &Array2<f64>| reparameterize(&enc, e).unwrap().z;
        let zero = Array2::zeros(e1.raw_dim());
        let lhs = z(&(&e1 + &e2)) - z(&e2);
        let rhs = z(&e1) - z(&zero);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            // Exact up to the rounding of the two subtractions.
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn generator_output_stays_in_range(z in matrix(2..5, 3..4, -50.0, 50.0), seed in 0u64..1000) {
        let g = Generator::new(&tiny_dense(), &mut rng(seed)).unwrap();
        let out = g.generate(&LatentCode { z }, Mode::Eval, &mut rng(seed)).unwrap().to_flat();
        prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn aggregate_mean_is_linear_and_permutation_invariant(
        a in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 4), 1..6),
        w in proptest::collection::vec(0.0..3.0f64, 6),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
        rot in 0usize..6,
    ) {
        let k = a.len();
        let w = &w[..k];
        let outs: Vec<Array1<f64>> = a.iter().map(|v| Array1::from(v.clone())).collect();
        let other: Vec<Array1<f64>> = outs.iter().map(|o| o.mapv(|x| 1.0 - x * x)).collect();
        let agg = |o: &[Array1<f64>], w: &[f64]| aggregate_mean(o, w).unwrap().value;
        let mixed: Vec<Array1<f64>> = outs.iter().zip(&other).map(|(x, y)| x * alpha + y * beta).collect();
        let lhs = agg(&mixed, w);
        let rhs = agg(&outs, w) * alpha + agg(&other, w) * beta;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-12);
        }
        let mut idx: Vec<usize> = (0..k).collect();
        idx.rotate_left(rot % k);
        idx.swap(0, k - 1);
        let perm_o: Vec<Array1<f64>> = idx.iter().map(|&i| outs[i].clone()).collect();
        let perm_w: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
        prop_assert_eq!(agg(&perm_o, &perm_w), agg(&outs, w));
    }

    #[test]
    fn select_random_returns_an_input(a in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 3), 1..6), seed in 0u64..10_000) {
        let outs: Vec<Array1<f64>> = a.iter().map(|v| Array1::from(v.clone())).collect();
        let pick = select_random(&outs, &mut rng(seed)).unwrap().value;
        prop_assert!(outs.contains(&pick));
    }

    #[test]
    fn losses_are_non_negative(p in prob_rows(), f in matrix(1..5, 1..4, -5.0, 5.0), g in matrix(1..5, 1..4, -5.0, 5.0)) {
        let n = p.ncols() - 1;
        let labels: Vec<usize> = (0..p.nrows()).map(|i| i % n).collect();
        prop_assert!(d_supervised_loss(&p, &labels).unwrap() >= 0.0);
        prop_assert!(d_real_loss(&p).unwrap() >= 0.0);
        prop_assert!(d_fake_loss(&p).unwrap() >= 0.0);
        prop_assert!(g_adversarial_loss(p.column(n)).unwrap() >= 0.0);
        if f.ncols() == g.ncols() {
            prop_assert!(feature_matching_loss(&f, &g).unwrap() >= 0.0);
        }
        if f.dim() == g.dim() {
            let kl = kl_loss(&EncoderOutput { mu: f.clone(), log_sigma_sq: g.clone() }).unwrap();
            prop_assert!(kl >= 0.0);
        }
    }

    #[test]
    fn fake_losses_are_monotone(p in proptest::collection::vec(0.01..0.98f64, 1..6), item in 0usize..6, bump in 0.001..0.01f64) {
        let item = item % p.len();
        let col = |v: &[f64]| Array2::from_shape_fn((v.len(), 2), |(i, j)| if j == 1 { v[i] } else { 1.0 - v[i] });
        let mut q = p.clone();
        q[item] += bump;
        prop_assert!(d_fake_loss(&col(&q)).unwrap() < d_fake_loss(&col(&p)).unwrap());
        let (pa, qa) = (Array1::from(p.clone()), Array1::from(q.clone()));
        prop_assert!(g_adversarial_loss(qa.view()).unwrap() > g_adversarial_loss(pa.view()).unwrap());
    }

    #[test]
    fn feature_matching_ignores_item_order(f in matrix(2..6, 1..4, -3.0, 3.0), shift in 1usize..5) {
        let g = f.mapv(|v| v * 0.5 + 0.25);
        let mut rows: Vec<usize> = (0..g.nrows()).collect();
        rows.rotate_left(shift % g.nrows());
        let g_perm = g.select(ndarray::Axis(0), &rows);
        let f_perm = f.select(ndarray::Axis(0), &rows);
        // Reordering rows only changes the summation order of the batch means.
        let base = feature_matching_loss(&f, &g).unwrap();
        let tol = 1e-12 * (1.0 + base);
        prop_assert!((base - feature_matching_loss(&f, &g_perm).unwrap()).abs() <= tol);
        prop_assert!((base - feature_matching_loss(&f_perm, &g).unwrap()).abs() <= tol);
        prop_assert_eq!(base, feature_matching_loss(&g, &f).unwrap());
    }

    #[test]
    fn fid_is_symmetric_and_zero_on_itself(a in matrix(6..20, 1..4, -2.0, 2.0), b in matrix(6..20, 1..4, -1.0, 3.0)) {
        prop_assume!(a.ncols() == b.ncols());
        let (sa, sb) = (compute_gaussian_stats(&a).unwrap(), compute_gaussian_stats(&b).unwrap());
        let ab = compute_fid(&sa, &sb).unwrap();
        let ba = compute_fid(&sb, &sa).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab.abs()));
        prop_assert!(ab >= 0.0);
        prop_assert!(compute_fid(&sa, &sa).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn ddd_is_symmetric_and_zero_on_itself(a in proptest::collection::vec(-3.0..3.0f64, 4), b in proptest::collection::vec(-3.0..3.0f64, 4)) {
        let m = |v: &[f64]| MomentSummary { m1: v[0], m2: v[1].abs() + 0.1, m3: v[2], m4: v[3], count: 10 };
        let (ma, mb) = (m(&a), m(&b));
        prop_assert_eq!(compute_ddd(&ma, &ma, &DEFAULT_DDD_WEIGHTS).unwrap(), 0.0);
        prop_assert_eq!(
            compute_ddd(&ma, &mb, &DEFAULT_DDD_WEIGHTS).unwrap(),
            compute_ddd(&mb, &ma, &DEFAULT_DDD_WEIGHTS).unwrap()
        );
    }

    #[test]
    fn accuracy_is_trace_over_total(
        (n, pairs) in (2usize..8).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 1..100)))
    ) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let counts = confusion_counts(&preds, &labels, n).unwrap();
        let tp: usize = counts.tp.iter().sum();
        prop_assert_eq!(accuracy(&preds, &labels).unwrap(), tp as f64 / labels.len() as f64);
        let f1 = f1_per_class(&counts);
        prop_assert_eq!(f1, brute_force_f1(&preds, &labels, n));
    }
}

#[test]
fn select_random_is_uniform_over_three() {
    let outs: Vec<Array1<f64>> = (0..3).map(|k| Array1::from(vec![k as f64])).collect();
    let mut r = rng(99);
    let mut hits = [0usize; 3];
    for _ in 0..30_000 {
        hits[select_random(&outs, &mut r).unwrap().value[0] as usize] += 1;
    }
    for h in hits {
        let f = h as f64 / 30_000.0;
        assert!((0.323..=0.344).contains(&f), "frequency {f}");
    }
}

#[test]
fn moments_of_a_standard_normal() {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(7);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let m = compute_moment_summary(&xs).unwrap();
    for (got, want) in m.as_array().iter().zip([0.0, 1.0, 0.0, 0.0]) {
        assert!((got - want).abs() < 0.02, "{:?}", m.as_array());
    }
}

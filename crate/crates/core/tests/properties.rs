use cvdmh::canonical_views::{greedy_mine, h_score, SimilarityFn};
use cvdmh::dataset::ModalityFeatures;
use cvdmh::eval::average_precision;
use cvdmh::intermediate::sparse_code_one;
use cvdmh::search::{hamming, pack, query};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pool_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (4..max_n, 1usize..4).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-3.0..3.0f64, n * d).prop_map(move |v| DMatrix::from_vec(d, n, v))
    })
}

fn sign_matrix(c: usize, n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(any::<bool>(), c * n)
        .prop_map(move |b| DMatrix::from_iterator(c, n, b.into_iter().map(|x| if x { 1.0 } else { -1.0 })))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marginal_gains_diminish(data in pool_strategy(24), picks in proptest::collection::vec(any::<prop::sample::Index>(), 6), bw in 0.3..4.0f64) {
        let n = data.ncols();
        let pool = ModalityFeatures::new(0, "p", data).unwrap();
        let sim = SimilarityFn::gaussian(bw).unwrap();
        let mut big: Vec<usize> = picks.iter().map(|i| i.index(n)).collect();
        big.sort_unstable();
        big.dedup();
        let v = (0..n).find(|i| !big.contains(i));
        prop_assume!(v.is_some());
        let v = v.unwrap();
        let small = &big[..big.len() / 2];
        let gain = |s: &[usize]| {
            let mut with = s.to_vec();
            with.push(v);
            h_score(&with, &pool, &sim).unwrap() - h_score(s, &pool, &sim).unwrap()
        };
        prop_assert!(gain(small) >= gain(&big) - 1e-9);
    }

    #[test]
    fn greedy_trace_is_the_score_of_each_prefix(data in pool_strategy(20), t in 1usize..4) {
        let pool = ModalityFeatures::new(0, "p", data).unwrap();
        prop_assume!(t <= pool.len());
        let sim = SimilarityFn::auto(&pool.data, 0);
        let views = greedy_mine(&pool, t, &sim).unwrap();
        prop_assert_eq!(views.indices.len(), t);
        for k in 1..=t {
            let h = h_score(&views.indices[..k], &pool, &sim).unwrap();
            prop_assert!((h - views.score_trace[k - 1]).abs() <= 1e-9 * h.abs().max(1.0));
        }
    }

    #[test]
    fn sparse_codes_sum_to_one_on_r_entries(data in pool_strategy(9), x in proptest::collection::vec(-3.0..3.0f64, 3), r_pick in any::<prop::sample::Index>(), sigma in 1e-6..1.0f64) {
        let d = data.nrows();
        let t = data.ncols();
        let r = r_pick.index(t) + 1;
        let code = sparse_code_one(&x[..d], &data, r, sigma, 1.0).unwrap();
        prop_assert_eq!(code.len(), t);
        prop_assert!((code.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(code.iter().filter(|v| **v != 0.0).count() <= r);
    }

    #[test]
    fn hamming_is_a_metric(v in sign_matrix(40, 3)) {
        let p = pack(&v).unwrap();
        let d = |i: usize, j: usize| hamming(p.code(i), p.code(j)).unwrap();
        prop_assert_eq!(d(0, 0), 0);
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2));
        let direct = (0..40).filter(|&b| v[(b, 0)] != v[(b, 1)]).count() as u32;
        prop_assert_eq!(d(0, 1), direct);
    }

    #[test]
    fn packing_round_trips(c in 1usize..70, seed in any::<u64>()) {
        let v = DMatrix::from_fn(c, 5, |i, j| if (seed >> ((i * 5 + j) % 64)) & 1 == 1 { 1.0 } else { -1.0 });
        prop_assert_eq!(pack(&v).unwrap().unpack(), v);
    }

    #[test]
    fn query_distances_never_decrease(v in sign_matrix(16, 30), q in sign_matrix(16, 1), k in 1usize..40) {
        let index = pack(&v).unwrap();
        let qp = pack(&q).unwrap();
        let res = query(&index, qp.code(0), k).unwrap();
        prop_assert_eq!(res.hits.len(), k.min(30));
        prop_assert!(res.hits.windows(2).all(|w| (w[0].distance, w[0].id) < (w[1].distance, w[1].id)));
    }

    #[test]
    fn average_precision_is_a_fraction(labels in proptest::collection::vec(1u32..4, 1..60), cutoff in 1usize..80) {
        let cutoff = cutoff.min(labels.len());
        let ap = average_precision(&labels, 1, cutoff).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}

use cvdmh::eval::{default_scopes, evaluate_codes, precision_scope, ConfigEcho, RankedQuery};
use cvdmh::pipeline::{oracle_codes, random_codes};
use cvdmh::search::pack;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn echo(method: &str, c: usize) -> ConfigEcho {
    ConfigEcho {
        method: method.into(),
        c,
        t: 0,
        r: 0,
        seeds: vec![],
    }
}

fn balanced(n: usize) -> Vec<u32> {
    (0..n).map(|i| (i % 5) as u32 + 1).collect()
}

#[test]
fn random_codes_score_near_the_class_prior() {
    let db_labels = balanced(1500);
    let q_labels = balanced(200);
    let mut maps = Vec::new();
    for seed in 0..5 {
        let db = pack(&random_codes(32, db_labels.len(), seed)).unwrap();
        let q = pack(&random_codes(32, q_labels.len(), seed + 100)).unwrap();
        let report = evaluate_codes(
            &db,
            &db_labels,
            &q,
            &q_labels,
            100,
            &default_scopes(),
            echo("random", 32),
        )
        .unwrap();
        maps.push(report.map);
        for p in report.precision_at.values() {
            assert!((p - 0.2).abs() < 0.05, "precision {p}");
        }
    }
    let mean = maps.iter().sum::<f64>() / maps.len() as f64;
    assert!((mean - 0.2).abs() < 0.05, "mean mAP {mean}");
}

#[test]
fn oracle_codes_are_perfect() {
    let db_labels = balanced(300);
    let q_labels = balanced(25);
    let db = pack(&oracle_codes(&db_labels, 16)).unwrap();
    let q = pack(&oracle_codes(&q_labels, 16)).unwrap();
    let report = evaluate_codes(&db, &db_labels, &q, &q_labels, 50, &[50], echo("oracle", 16)).unwrap();
    assert_eq!(report.map, 1.0);
    assert_eq!(report.precision_at[&50], 1.0);
    assert_eq!(report.per_query_ap.len(), 25);
}

#[test]
fn shuffled_rankings_give_prior_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels = balanced(1000);
    let results: Vec<RankedQuery> = (0..300)
        .map(|i| {
            let mut ranked = labels.clone();
            ranked.shuffle(&mut rng);
            RankedQuery {
                query_label: (i % 5) as u32 + 1,
                ranked_labels: ranked,
            }
        })
        .collect();
    for (_, p) in precision_scope(&results, &default_scopes()).unwrap() {
        assert!((p - 0.2).abs() < 0.02, "precision {p}");
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let db = pack(&random_codes(16, 10, 0)).unwrap();
    let q = pack(&random_codes(32, 2, 0)).unwrap();
    assert!(evaluate_codes(&db, &balanced(10), &q, &balanced(2), 5, &[5], echo("x", 16)).is_err());
    assert!(evaluate_codes(&db, &balanced(9), &db, &balanced(10), 5, &[5], echo("x", 16)).is_err());
}

use cvdmh::config::{CodeLengths, RunConfig};
use cvdmh::dataset::SyntheticSpec;
use cvdmh::pipeline::{evaluate_method, train_in_memory, train_to_disk, Method, ModelDir};

fn config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        synthetic: Some(SyntheticSpec {
            num_landmarks: 5,
            images_per_landmark: 100,
            dims: vec![16, 24],
            noise: 1.0,
            correlation: 0.5,
            seed: 4,
            latent_dim: 8,
        }),
        t: 20,
        r: 10,
        c: CodeLengths::Many(vec![16]),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn trained_directory_answers_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let manifest = train_to_disk(&cfg).unwrap();
    for (name, hash) in &manifest.artifacts {
        assert_eq!(&cvdmh::pipeline::file_sha256(&tmp.path().join(name)).unwrap(), hash);
    }
    let md = ModelDir::open(tmp.path()).unwrap();
    let ds = md.dataset().unwrap();
    let id = manifest.split.database[7];
    let res = md.query(&ds.image(id), 16, 10).unwrap();
    assert_eq!(res.hits.len(), 10);
    assert_eq!(res.hits[0].distance, 0);
    assert!(res.hits.iter().any(|h| h.id == id));
    let wrong = vec![vec![0.0; 16], vec![0.0; 5]];
    assert!(md.query(&wrong, 16, 10).is_err());
    let before = md.codes(16).unwrap();
    assert_eq!(md.reindex(&ds, 16).unwrap(), before);
}

#[test]
fn stage_cache_is_reused_and_training_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    train_to_disk(&cfg).unwrap();
    let cached: Vec<_> = std::fs::read_dir(tmp.path().join("cache"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(cached.len(), 3, "{cached:?}");
    let codes = std::fs::read(tmp.path().join("codes_c16.cvdh")).unwrap();
    // a second run reads the cache and must land on the same codes
    train_to_disk(&cfg).unwrap();
    assert_eq!(std::fs::read(tmp.path().join("codes_c16.cvdh")).unwrap(), codes);
}

#[test]
fn learned_codes_beat_random_with_and_without_views() {
    let tmp = tempfile::tempdir().unwrap();
    for bypass in [false, true] {
        let cfg = RunConfig {
            bypass_canonical_views: bypass,
            ..config(tmp.path())
        };
        let trained = train_in_memory(&cfg, 0).unwrap();
        let ds = &trained.dataset;
        let t = trained.length(16).unwrap();
        let ours = evaluate_method(Method::Cvdmh, ds, 16, 0, &cfg, || {
            Ok((t.database_codes.clone(), trained.query_codes(16)?))
        })
        .unwrap();
        let random = evaluate_method(Method::Random, ds, 16, 0, &cfg, || unreachable!()).unwrap();
        assert!(
            ours.map > random.map + 0.1,
            "bypass {bypass}: {} vs {}",
            ours.map,
            random.map
        );
    }
}

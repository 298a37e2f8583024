use xvhash::codec::{hamming_distance, load_codes, rank_by_hamming, save_codes, HashModel};
use xvhash::dataset::{generate_synthetic, load_dataset, save_dataset, SemiPairedDataset, SyntheticSpec};
use xvhash::eval::{evaluate_model, run_protocol, Protocol, Task};
use xvhash::pipeline::{train, TrainConfig};
use xvhash::seed::rng_from;
use xvhash::solver::SolverConfig;

use rand::Rng;

fn reference() -> SemiPairedDataset {
    generate_synthetic(&SyntheticSpec::reference(3)).unwrap()
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        solver: SolverConfig {
            r: 32,
            max_iter: 15,
            ..SolverConfig::default()
        },
        ..TrainConfig::default()
    }
    .with_seed(seed)
}

#[test]
fn model_and_codes_survive_disk() {
    let ds = reference();
    let out = train(&ds, &config(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    out.model.save(&path).unwrap();
    let loaded = HashModel::load(&path).unwrap();
    assert_eq!(loaded, out.model);
    assert_eq!(loaded.to_bytes(), out.model.to_bytes());

    for v in [1, 2] {
        let codes = out.model.encode(ds.view(v).values(), v).unwrap();
        let again = loaded.encode(ds.view(v).values(), v).unwrap();
        assert_eq!(codes, again);
        let file = dir.path().join(format!("codes{v}.bin"));
        save_codes(&codes, &file).unwrap();
        let back = load_codes(&file).unwrap();
        assert_eq!(back, codes);
        let q = back.row(0);
        assert_eq!(
            rank_by_hamming(q, &back, 20).unwrap(),
            rank_by_hamming(codes.row(0), &codes, 20).unwrap()
        );
    }
}

#[test]
fn dataset_round_trip_trains_identically() {
    let ds = reference();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    let a = train(&ds, &config(9)).unwrap();
    let b = train(&back, &config(9)).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
}

#[test]
fn loaded_model_reproduces_in_process_evaluation() {
    let ds = reference();
    let protocol = Protocol {
        train: config(11),
        ..Protocol::default()
    };
    let (out, ev) = run_protocol(&ds, &protocol).unwrap();
    let loaded = HashModel::from_bytes(&out.model.to_bytes()).unwrap();
    let (tr, q) = protocol.split(&ds).unwrap();
    let again = evaluate_model(&loaded, &tr, &q, &protocol).unwrap();
    for t in Task::BOTH {
        assert_eq!(ev.map(t), again.map(t));
    }
}

#[test]
fn paired_codes_agree_more_than_random_cross_pairs() {
    let ds = reference();
    let out = train(&ds, &config(2)).unwrap();
    let c1 = out.model.encode(ds.view1().values(), 1).unwrap();
    let c2 = out.model.encode(ds.view2().values(), 2).unwrap();
    let r = out.model.r() as f64;
    let paired: f64 = (0..ds.n0())
        .map(|j| {
            let i = ds.view1_pair_rows().start + j;
            f64::from(hamming_distance(c1.row(i), c2.row(ds.view2_pair_rows().start + j)).unwrap()) / r
        })
        .sum::<f64>()
        / ds.n0() as f64;
    let mut rng = rng_from(77);
    let trials = 2000;
    let random: f64 = (0..trials)
        .map(|_| {
            let i = rng.random_range(0..ds.n1());
            let j = rng.random_range(0..ds.n2());
            f64::from(hamming_distance(c1.row(i), c2.row(j)).unwrap()) / r
        })
        .sum::<f64>()
        / trials as f64;
    assert!(paired + 0.1 < random, "paired {paired:.3} vs random {random:.3}");
}

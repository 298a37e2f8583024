use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use xvhash::dataset::{LabelMatrix, SemiPairedDataset, ViewMatrix};
use xvhash::graph::{build_z, select_anchors, AnchorGraph, SigmaPolicy};
use xvhash::linalg::gaussian;
use xvhash::seed::rng_from;

struct Build {
    graph: AnchorGraph,
    f: DMatrix<f64>,
}

fn build(seed: u64, n1: usize, n2: usize, n0: usize, m0: usize, k: usize) -> Build {
    let mut rng = rng_from(seed);
    let n = n1 + n2 - n0;
    let ds = SemiPairedDataset::new(
        ViewMatrix::new(gaussian(&mut rng, n1, 4)).unwrap(),
        ViewMatrix::new(gaussian(&mut rng, n2, 3)).unwrap(),
        n0,
        LabelMatrix::from_classes(&(0..n).map(|i| Some(i % 2)).collect::<Vec<_>>(), 2).unwrap(),
        None,
    )
    .unwrap();
    let anchors = select_anchors(&ds, m0, seed).unwrap();
    let graph = build_z(&ds, &anchors, k, SigmaPolicy::Auto).unwrap();
    let f = gaussian(&mut rng, n, 3);
    Build { graph, f }
}

/// `(seed, n1, n2, n0, m0, k)` with `n = n1 + n2 - n0 <= 50`. Each view keeps
/// an unpaired sample so the automatic bandwidth never collapses to zero.
fn shapes() -> impl Strategy<Value = (u64, usize, usize, usize, usize, usize)> {
    (any::<u64>(), 2usize..=25, 2usize..=25)
        .prop_flat_map(|(seed, n1, n2)| (Just(seed), Just(n1), Just(n2), 1..n1.min(n2)))
        .prop_flat_map(|(seed, n1, n2, n0)| (Just(seed), Just(n1), Just(n2), Just(n0), 1..=n0))
        .prop_flat_map(|(seed, n1, n2, n0, m0)| (Just(seed), Just(n1), Just(n2), Just(n0), Just(m0), 1..=m0))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 100,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn z_rows_are_stochastic((seed, n1, n2, n0, m0, k) in shapes()) {
        let b = build(seed, n1, n2, n0, m0, k);
        let z = b.graph.dense_z();
        for i in 0..z.nrows() {
            prop_assert!((z.row(i).sum() - 1.0).abs() < 1e-10);
            prop_assert!(z.row(i).iter().all(|&v| v >= 0.0));
            prop_assert!(z.row(i).iter().filter(|&&v| v > 0.0).count() <= k);
        }
    }

    #[test]
    fn similarity_is_symmetric_stochastic_psd((seed, n1, n2, n0, m0, k) in shapes()) {
        let b = build(seed, n1, n2, n0, m0, k);
        let s = b.graph.dense_similarity().unwrap();
        prop_assert!((&s - s.transpose()).amax() < 1e-12);
        for i in 0..s.nrows() {
            prop_assert!((s.row(i).sum() - 1.0).abs() < 1e-9);
        }
        let eig = SymmetricEigen::new(s.clone());
        prop_assert!(eig.eigenvalues.min() >= -1e-9);
        prop_assert!(eig.eigenvalues.max() <= 1.0 + 1e-9);
    }

    #[test]
    fn laplacian_quadratic_matches_pairwise_sum((seed, n1, n2, n0, m0, k) in shapes()) {
        let b = build(seed, n1, n2, n0, m0, k);
        let s = b.graph.dense_similarity().unwrap();
        let n = s.nrows();
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..n {
                oracle += s[(i, j)] * (b.f.row(i) - b.f.row(j)).norm_squared();
            }
        }
        oracle *= 0.5;
        let got = b.graph.laplacian_quadratic(&b.f).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{} vs {}", got, oracle);
    }

    #[test]
    fn factored_similarity_matches_dense((seed, n1, n2, n0, m0, k) in shapes()) {
        let b = build(seed, n1, n2, n0, m0, k);
        let s = b.graph.dense_similarity().unwrap();
        let got = b.graph.similarity_apply(&b.f).unwrap();
        prop_assert!((got - &s * &b.f).amax() < 1e-10 * (1.0 + b.f.amax()));
    }
}

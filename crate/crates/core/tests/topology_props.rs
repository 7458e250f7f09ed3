mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use platoon_core::linalg::symmetric_eigen;
use platoon_core::topology::{lambda_min, TopologyJson};
use platoon_core::Topology;

fn topology_strategy() -> impl Strategy<Value = Topology> {
    (1usize..=12, any::<u64>())
        .prop_map(|(n, seed)| common::random_connected(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn connected_topologies_have_positive_spectrum(t in topology_strategy()) {
        let l = lambda_min(&t).unwrap();
        prop_assert!(l > 0.0);
        prop_assert!(l <= 1.0 + 1e-12);
        prop_assert!(l <= t.pinned_count() as f64 / t.n() as f64 + 1e-12);
    }

    #[test]
    fn laplacian_annihilates_ones(t in topology_strategy()) {
        let m = t.assemble();
        let p = t.pinning();
        let laplacian = &m.lp - nalgebra::DMatrix::from_diagonal(&p);
        let ones = DVector::from_element(t.n(), 1.0);
        prop_assert!((laplacian * ones).amax() < 1e-12);
    }

    #[test]
    fn json_round_trip(t in topology_strategy()) {
        let text = serde_json::to_string(&t.to_json()).unwrap();
        let back: TopologyJson = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(Topology::from_json(&back).unwrap(), t);
    }

    #[test]
    fn jacobi_matches_nalgebra(t in topology_strategy()) {
        let m = t.assemble().lp;
        let ours = symmetric_eigen(&m).unwrap().values;
        let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn chain_eigenvalue_bracket() {
    for n in 2..=200 {
        let l = lambda_min(&Topology::bd(n).unwrap()).unwrap();
        let n2 = (n * n) as f64;
        assert!(
            l >= 1.0 / n2 - 1e-15 && l <= std::f64::consts::PI.powi(2) / n2,
            "n = {n}: {l}"
        );
    }
}

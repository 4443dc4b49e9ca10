//! Meta-path counting against the walk-enumeration oracle, plus structural
//! properties of the adjacency matrices.

mod common;

use common::*;
use hinfed_core::graph::{metapath_adjacency, neighbors_along, AdjacencyMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_match_enumeration(seed in any::<u64>(), n in 6usize..40) {
        let g = random_hin(seed, n, 2);
        for name in ["APA", "APPA", "APVPA", "PAPVP"] {
            let s = spec(name);
            let adj = metapath_adjacency(&g, &s, AdjacencyMode::Counts).unwrap();
            let mut oracle = enumerate_paths(&g, &s);
            for (k, row) in oracle.iter_mut().enumerate() {
                row[k] = 0;
            }
            prop_assert_eq!(adj.matrix.to_dense(), oracle, "{}", name);
        }
    }

    #[test]
    fn symmetric_palindromes_give_symmetric_counts(seed in any::<u64>(), n in 6usize..40) {
        let g = random_hin(seed, n, 2);
        for name in ["APA", "APVPA"] {
            let adj = metapath_adjacency(&g, &spec(name), AdjacencyMode::Counts).unwrap();
            prop_assert!(adj.matrix.is_symmetric());
        }
    }

    #[test]
    fn binary_mode_is_support_of_counts(seed in any::<u64>(), n in 6usize..40) {
        let g = random_hin(seed, n, 2);
        let counts = metapath_adjacency(&g, &spec("APPA"), AdjacencyMode::Counts).unwrap();
        let binary = metapath_adjacency(&g, &spec("APPA"), AdjacencyMode::Binary).unwrap();
        let (c, b) = (counts.matrix.to_dense(), binary.matrix.to_dense());
        for (rc, rb) in c.iter().zip(&b) {
            for (&x, &y) in rc.iter().zip(rb) {
                prop_assert_eq!(y, u64::from(x > 0));
            }
        }
        for i in 0..counts.size() {
            prop_assert_eq!(neighbors_along(&counts, i).unwrap(), neighbors_along(&binary, i).unwrap());
            prop_assert!(!neighbors_along(&counts, i).unwrap().contains(&i));
        }
    }
}

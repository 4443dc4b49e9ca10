//! Property tests for the server records, aggregation and dispatch.

use std::collections::BTreeMap;

use hinfed_core::fed::{ClientUpdate, DispatchMode, FedConfig, FedError, ServerState};
use hinfed_core::model::{ShapeManifest, TensorShape};
use proptest::prelude::*;

fn manifest(len: usize) -> ShapeManifest {
    ShapeManifest {
        tensors: vec![TensorShape {
            name: "w".into(),
            rows: 1,
            cols: len,
        }],
    }
}

fn update(id: usize, version: u64, weights: Vec<f64>) -> ClientUpdate {
    ClientUpdate {
        client_id: id,
        manifest: manifest(weights.len()),
        version,
        weights,
    }
}

/// Server whose client `i` sits at `versions[i]` with weights `vectors[i]`.
fn server(versions: &[u64], vectors: &[Vec<f64>], alpha: f64, threshold: u64) -> ServerState {
    let cfg = FedConfig {
        alpha,
        gap_threshold: threshold,
        ..Default::default()
    };
    let mut s = ServerState::new(0..versions.len(), manifest(vectors[0].len()), cfg).unwrap();
    for (id, (&v, w)) in versions.iter().zip(vectors).enumerate() {
        for k in 1..=v {
            s.submit(update(id, k, w.clone())).unwrap();
        }
    }
    s
}

fn records() -> impl Strategy<Value = (Vec<u64>, Vec<Vec<f64>>)> {
    (1usize..6, 1usize..8).prop_flat_map(|(n, len)| {
        (
            prop::collection::vec(1u64..20, n),
            prop::collection::vec(prop::collection::vec(-100.0f64..100.0, len), n),
        )
    })
}

proptest! {
    #[test]
    fn coefficients_are_a_convex_combination((versions, vectors) in records(), alpha in 0.0f64..4.0) {
        let s = server(&versions, &vectors, alpha, 5);
        let c = s.feddwa_coefficients().unwrap();
        prop_assert!(c.values().all(|&x| x >= 0.0));
        prop_assert!((c.values().sum::<f64>() - 1.0).abs() < 1e-12);
        let agg = s.aggregate_feddwa(0).unwrap();
        for (k, &a) in agg.iter().enumerate() {
            let lo = vectors.iter().map(|w| w[k]).fold(f64::INFINITY, f64::min);
            let hi = vectors.iter().map(|w| w[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
        }
    }

    #[test]
    fn equal_versions_match_fedavg_bitwise((versions, vectors) in records(), alpha in 0.0f64..4.0) {
        let same = vec![versions[0]; versions.len()];
        let s = server(&same, &vectors, alpha, 5);
        prop_assert_eq!(s.aggregate_feddwa(0).unwrap(), s.aggregate_fedavg().unwrap());
    }

    #[test]
    fn fresher_clients_weigh_more((versions, vectors) in records(), alpha in 0.0f64..4.0) {
        let s = server(&versions, &vectors, alpha, 5);
        let l = s.staleness_weights();
        for a in 0..versions.len() {
            for b in 0..versions.len() {
                if versions[a] >= versions[b] {
                    prop_assert!(l[&a] >= l[&b]);
                }
                if alpha > 0.0 && versions[a] > versions[b] {
                    prop_assert!(l[&a] > l[&b]);
                }
            }
        }
    }

    #[test]
    fn larger_alpha_never_helps_the_stalest((versions, vectors) in records(), a1 in 0.0f64..3.0, extra in 0.0f64..3.0) {
        let stalest = (0..versions.len()).min_by_key(|&i| versions[i]).unwrap();
        let low = server(&versions, &vectors, a1, 5).feddwa_coefficients().unwrap()[&stalest];
        let high = server(&versions, &vectors, a1 + extra, 5).feddwa_coefficients().unwrap()[&stalest];
        prop_assert!(high <= low + 1e-12);
    }

    #[test]
    fn rejected_replay_leaves_state_identical((versions, vectors) in records(), pick in 0usize..6, back in 0u64..5) {
        let mut s = server(&versions, &vectors, 0.5, 5);
        let id = pick % versions.len();
        let stale = versions[id].saturating_sub(back).max(1);
        let before = s.clone();
        let err = s.submit(update(id, stale, vec![7.0; vectors[0].len()])).unwrap_err();
        let is_stale = matches!(err, FedError::Stale { .. });
        prop_assert!(is_stale);
        prop_assert_eq!(&s, &before);
        let _ = s.submit(update(id, stale, vec![7.0; vectors[0].len()]));
        prop_assert_eq!(&s, &before);
    }

    #[test]
    fn broadcast_iff_gap_reaches_threshold((versions, vectors) in records(), threshold in 1u64..12, uploader in 0usize..6) {
        let s = server(&versions, &vectors, 0.5, threshold);
        let uploader = uploader % versions.len();
        let latest = *versions.iter().max().unwrap();
        let gap = versions.iter().map(|v| latest - v).max().unwrap();
        let d = s.dispatch(vec![0.0; vectors[0].len()], uploader);
        if gap >= threshold {
            prop_assert_eq!(d.mode, DispatchMode::Broadcast);
        } else {
            prop_assert_eq!(d.mode, DispatchMode::Targeted(uploader));
        }
    }

    #[test]
    fn interleaved_submissions_match_replay_log(order in prop::collection::vec(0usize..4, 1..40)) {
        let mut s = ServerState::new(0..4, manifest(1), FedConfig::default()).unwrap();
        let mut next = [1u64; 4];
        let mut log: Vec<(usize, u64, f64)> = Vec::new();
        for (step, &id) in order.iter().enumerate() {
            let w = step as f64 * 10.0 + id as f64;
            s.submit(update(id, next[id], vec![w])).unwrap();
            log.push((id, next[id], w));
            next[id] += 1;
        }
        // replay oracle: last entry per client wins
        let mut weights = BTreeMap::new();
        let mut versions = BTreeMap::new();
        for (id, v, w) in log {
            weights.insert(id, vec![w]);
            versions.insert(id, v);
        }
        prop_assert_eq!(s.weights(), &weights);
        prop_assert_eq!(s.versions(), &versions);
    }

    #[test]
    fn fedavg_matches_scalar_loop(vectors in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 3)) {
        let s = server(&[1, 1, 1], &vectors, 0.5, 5);
        let agg = s.aggregate_fedavg().unwrap();
        for k in 0..5 {
            let mut sum = 0.0;
            for w in &vectors {
                sum += w[k];
            }
            prop_assert!((agg[k] - sum / 3.0).abs() <= 1e-12 * sum.abs().max(1.0));
        }
    }
}

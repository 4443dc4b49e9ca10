//! Ready-made experiment configurations.

use super::{AggregatorKind, ExperimentConfig, SyntheticConfig};

/// Desk-scale setup on the synthetic preset: small embeddings, full
/// three-client federation.
pub fn desk_scale(seed: u64) -> (SyntheticConfig, ExperimentConfig) {
    let config = ExperimentConfig {
        embed_dim: 32,
        seed,
        ..ExperimentConfig::default()
    };
    (SyntheticConfig::preset(seed), config)
}

/// Local epochs {1, 3, 5} by batch size {64, 128, 256}, labelled `e{e}_B{b}`.
pub fn client_computation_grid(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let mut out = Vec::new();
    for e in [1, 3, 5] {
        for b in [64, 128, 256] {
            let cfg = ExperimentConfig {
                local_epochs: e,
                batch_size: b,
                ..base.clone()
            };
            out.push((format!("e{e}_B{b}"), cfg));
        }
    }
    out
}

/// FedDWA, FedAvg and EMA on otherwise identical runs with one slow client
/// (speeds 1, 1, 3).
pub fn aggregator_comparison(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    [AggregatorKind::FedDwa, AggregatorKind::FedAvg, AggregatorKind::Ema]
        .into_iter()
        .map(|kind| {
            let cfg = ExperimentConfig {
                aggregator: kind,
                clients: 3,
                speeds: vec![1, 1, 3],
                ..base.clone()
            };
            (serde_json::to_value(kind).unwrap().as_str().unwrap().to_string(), cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_nine_valid_cells() {
        let grid = client_computation_grid(&ExperimentConfig::default());
        assert_eq!(grid.len(), 9);
        assert!(grid.iter().all(|(_, c)| c.validate().is_ok()));
        assert_eq!(grid[0].0, "e1_B64");
    }

    #[test]
    fn comparison_names() {
        let names: Vec<String> = aggregator_comparison(&ExperimentConfig::default()).into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["feddwa", "fedavg", "ema"]);
    }
}

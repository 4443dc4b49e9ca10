use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{PartitionStrategy, SimError};

/// Disjoint per-client sets of labelled target nodes. All clients see the
/// whole graph; only these labels are private to their owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub clients: Vec<Vec<usize>>,
    pub strategy: PartitionStrategy,
    pub seed: u64,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Owning client per target index.
    pub fn owners(&self, targets: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; targets];
        for (c, nodes) in self.clients.iter().enumerate() {
            for &n in nodes {
                out[n] = Some(c);
            }
        }
        out
    }

    /// `labels` with everything not owned by `client` hidden.
    pub fn client_labels(&self, client: usize, labels: &[Option<usize>]) -> Vec<Option<usize>> {
        let mut out = vec![None; labels.len()];
        for &n in &self.clients[client] {
            out[n] = labels[n];
        }
        out
    }
}

/// Splits `nodes` (labelled target indices) across `clients`.
///
/// `Uniform` shuffles and deals round-robin. `LabelSkewed` draws, for every
/// class, client shares from a symmetric Dirichlet with the given
/// concentration; a client left empty takes one node from the largest one.
pub fn partition(
    nodes: &[usize],
    labels: &[Option<usize>],
    clients: usize,
    strategy: PartitionStrategy,
    concentration: f64,
    seed: u64,
) -> Result<Partition, SimError> {
    if clients == 0 || clients > nodes.len() {
        return Err(SimError::TooManyClients {
            clients,
            nodes: nodes.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); clients];
    match strategy {
        PartitionStrategy::Uniform => {
            let mut order = nodes.to_vec();
            order.shuffle(&mut rng);
            for (i, n) in order.into_iter().enumerate() {
                out[i % clients].push(n);
            }
        }
        PartitionStrategy::LabelSkewed => {
            let gamma = Gamma::new(concentration, 1.0)
                .map_err(|e| SimError::Synthetic(format!("dirichlet concentration: {e}")))?;
            let mut by_class: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
            for &n in nodes {
                by_class.entry(labels[n]).or_default().push(n);
            }
            for mut members in by_class.into_values() {
                members.shuffle(&mut rng);
                let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                let mut start = 0;
                let mut cum = 0.0;
                for (c, d) in draws.iter().enumerate() {
                    cum += d / total;
                    let end = if c + 1 == clients {
                        members.len()
                    } else {
                        ((cum * members.len() as f64).round() as usize).clamp(start, members.len())
                    };
                    out[c].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
            while let Some(empty) = out.iter().position(Vec::is_empty) {
                let largest = (0..clients).max_by_key(|&c| (out[c].len(), std::cmp::Reverse(c))).unwrap();
                let moved = out[largest].pop().unwrap();
                out[empty].push(moved);
            }
        }
    }
    for c in &mut out {
        c.sort_unstable();
    }
    Ok(Partition {
        clients: out,
        strategy,
        seed,
    })
}

/// Class counts per client.
pub fn class_histograms(p: &Partition, labels: &[Option<usize>], classes: usize) -> Vec<Vec<u64>> {
    p.clients
        .iter()
        .map(|nodes| {
            let mut h = vec![0u64; classes];
            for &n in nodes {
                if let Some(c) = labels[n] {
                    h[c] += 1;
                }
            }
            h
        })
        .collect()
}

/// Pearson chi-square statistic of a clients x classes contingency table.
pub fn chi_square(table: &[Vec<u64>]) -> f64 {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let width = table.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..width).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let total: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &obs) in r.iter().enumerate() {
            let expected = rows[i] * cols[j] / total;
            if expected > 0.0 {
                stat += (obs as f64 - expected).powi(2) / expected;
            }
        }
    }
    stat
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, classes: usize) -> Vec<Option<usize>> {
        (0..n).map(|i| Some(i % classes)).collect()
    }

    #[test]
    fn single_client_takes_everything() {
        let nodes: Vec<usize> = (0..10).collect();
        let p = partition(&nodes, &labels(10, 2), 1, PartitionStrategy::Uniform, 1.0, 0).unwrap();
        assert_eq!(p.clients, vec![nodes]);
    }

    #[test]
    fn uniform_sizes_are_balanced() {
        let nodes: Vec<usize> = (0..301).collect();
        let p = partition(&nodes, &labels(301, 4), 3, PartitionStrategy::Uniform, 1.0, 9).unwrap();
        let sizes: Vec<usize> = p.clients.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![101, 100, 100]);
    }

    #[test]
    fn too_many_clients() {
        let nodes = [0, 1];
        assert!(matches!(
            partition(&nodes, &labels(2, 2), 3, PartitionStrategy::Uniform, 1.0, 0),
            Err(SimError::TooManyClients { clients: 3, nodes: 2 })
        ));
    }

    #[test]
    fn skewed_never_leaves_a_client_empty() {
        let nodes: Vec<usize> = (0..12).collect();
        for seed in 0..50 {
            let p = partition(&nodes, &labels(12, 3), 5, PartitionStrategy::LabelSkewed, 0.05, seed).unwrap();
            assert!(p.clients.iter().all(|c| !c.is_empty()));
            assert_eq!(p.clients.iter().map(Vec::len).sum::<usize>(), 12);
        }
    }

    #[test]
    fn client_labels_hide_other_clients() {
        let nodes: Vec<usize> = (0..6).collect();
        let l = labels(6, 2);
        let p = partition(&nodes, &l, 2, PartitionStrategy::Uniform, 1.0, 1).unwrap();
        let mine = p.client_labels(0, &l);
        for (n, label) in mine.iter().enumerate() {
            assert_eq!(label.is_some(), p.clients[0].contains(&n));
        }
        let owners = p.owners(6);
        assert!(owners.iter().all(Option::is_some));
    }

    #[test]
    fn chi_square_of_proportional_table_is_zero() {
        assert_eq!(chi_square(&[vec![10, 20], vec![5, 10]]), 0.0);
        assert!(chi_square(&[vec![10, 0], vec![0, 10]]) > 19.9);
    }
}

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::graph::{Edge, HeterogeneousGraph, Node, NodeType, Relation, Schema, SchemaTriple};

/// Planted-community academic graph parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_authors: usize,
    pub n_papers: usize,
    pub n_venues: usize,
    pub classes: usize,
    /// relative affinity of same-class pairs
    pub p_in: f64,
    /// relative affinity of cross-class pairs
    pub p_out: f64,
    /// citations drawn per paper (duplicates merged)
    pub citations: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_authors: 400,
            n_papers: 1200,
            n_venues: 8,
            classes: 4,
            p_in: 0.05,
            p_out: 0.005,
            citations: 2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn preset(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Synthetic(m));
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.p_in < self.p_out {
            return bad(format!("p_in = {} below p_out = {}", self.p_in, self.p_out));
        }
        if self.p_in == 0.0 {
            return bad("p_in must be positive".into());
        }
        if self.classes == 0 || self.n_authors < self.classes {
            return bad(format!("{} authors cannot fill {} classes", self.n_authors, self.classes));
        }
        if self.n_papers == 0 || self.n_venues == 0 {
            return bad("need at least one paper and one venue".into());
        }
        Ok(())
    }

    /// Class of author `a`: contiguous equal blocks.
    pub fn author_class(&self, a: usize) -> usize {
        a * self.classes / self.n_authors
    }

    pub fn venue_class(&self, v: usize) -> usize {
        v % self.classes
    }
}

/// Author/Paper/Venue schema; `write` and `publish` are traversable both
/// ways, `cite` only forwards.
pub fn academic_schema() -> Schema {
    Schema::new([
        SchemaTriple::new("Author", "write", "Paper"),
        SchemaTriple::new("Paper", "publish", "Venue"),
        SchemaTriple::new("Paper", "cite", "Paper"),
    ])
    .with_symmetric(["write", "publish"])
}

/// Generates a labelled academic graph with planted author classes.
///
/// Each paper gets a uniformly drawn first author and a co-author drawn with
/// weight `p_in` per same-class candidate and `p_out` per other candidate,
/// so co-authored pairs occur in proportion to the pair affinity. The venue
/// and the cited earlier papers follow the same affinities relative to the
/// first author's class. Node ids: authors, then papers, then venues.
pub fn synthetic_hin(cfg: &SyntheticConfig) -> Result<HeterogeneousGraph, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (na, np, nv) = (cfg.n_authors, cfg.n_papers, cfg.n_venues);
    let mut nodes = Vec::with_capacity(na + np + nv);
    for a in 0..na {
        nodes.push(Node {
            id: a,
            node_type: NodeType::new("Author"),
            label: Some(cfg.author_class(a)),
        });
    }
    for p in 0..np {
        nodes.push(Node {
            id: na + p,
            node_type: NodeType::new("Paper"),
            label: None,
        });
    }
    for v in 0..nv {
        nodes.push(Node {
            id: na + np + v,
            node_type: NodeType::new("Venue"),
            label: None,
        });
    }

    let members: Vec<Vec<usize>> = (0..cfg.classes)
        .map(|k| (0..na).filter(|&a| cfg.author_class(a) == k).collect())
        .collect();
    let affinity = |a: usize, b: usize| if a == b { cfg.p_in } else { cfg.p_out };
    // a class without venues falls back to a uniform choice
    let venue_pick = |home: usize| {
        WeightedIndex::new((0..nv).map(|v| affinity(home, cfg.venue_class(v))))
            .unwrap_or_else(|_| WeightedIndex::new(vec![1.0; nv]).expect("n_venues > 0"))
    };
    let venue_dists: Vec<_> = (0..cfg.classes).map(venue_pick).collect();

    let write = |a: usize, p: usize| Edge {
        src: a,
        dst: na + p,
        relation: Relation::new("write"),
    };
    let mut edges = Vec::new();
    let mut home = Vec::with_capacity(np);
    for p in 0..np {
        let first = rng.random_range(0..na);
        let k = cfg.author_class(first);
        home.push(k);
        edges.push(write(first, p));

        let class_weights: Vec<f64> = (0..cfg.classes)
            .map(|j| {
                let candidates = members[j].len() - usize::from(j == k);
                affinity(j, k) * candidates as f64
            })
            .collect();
        if let Ok(dist) = WeightedIndex::new(&class_weights) {
            let j = dist.sample(&mut rng);
            let pool = &members[j];
            let co = loop {
                let b = pool[rng.random_range(0..pool.len())];
                if b != first {
                    break b;
                }
            };
            edges.push(write(co, p));
        }

        let v = venue_dists[k].sample(&mut rng);
        edges.push(Edge {
            src: na + p,
            dst: na + np + v,
            relation: Relation::new("publish"),
        });

        if p == 0 || cfg.citations == 0 {
            continue;
        }
        // no eligible earlier paper: no citations
        if let Ok(dist) = WeightedIndex::new(home[..p].iter().map(|&h| affinity(h, k))) {
            let mut cited: Vec<usize> = (0..cfg.citations).map(|_| dist.sample(&mut rng)).collect();
            cited.sort_unstable();
            cited.dedup();
            for q in cited {
                edges.push(Edge {
                    src: na + p,
                    dst: na + q,
                    relation: Relation::new("cite"),
                });
            }
        }
    }
    Ok(HeterogeneousGraph::new(
        nodes,
        edges,
        academic_schema(),
        NodeType::new("Author"),
    )?)
}

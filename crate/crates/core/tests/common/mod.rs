#![allow(dead_code)]

use nscr_core::{
    AttributeCatalog, Dataset, Interaction, InteractionTable, SocialGraph, Vocabularies,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Table from `(user, item)` pairs; the timestamp is the row position.
pub fn table(users: usize, items: usize, pairs: &[(usize, usize)]) -> InteractionTable {
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(t, &(user, item))| Interaction {
            user,
            item,
            timestamp: t as i64,
        })
        .collect();
    InteractionTable::new(users, items, rows).unwrap()
}

/// A dataset without attributes. `bridge` holds `(social, info)` pairs.
pub fn dataset(
    users: usize,
    items: usize,
    pairs: &[(usize, usize)],
    social_users: usize,
    edges: &[(usize, usize, f64)],
    bridge: &[(usize, usize)],
) -> Dataset {
    Dataset {
        interactions: table(users, items, pairs),
        attributes: AttributeCatalog::empty(0, users, items),
        social: SocialGraph::from_edges(social_users, edges, bridge, users).unwrap(),
        vocab: Vocabularies::numbered(users, items, 0, social_users),
        truth: None,
    }
}

/// Ring graph over `n` vertices with unit weights.
pub fn ring(n: usize) -> Vec<(usize, usize, f64)> {
    (0..n).map(|v| (v, (v + 1) % n, 1.0)).collect()
}

/// Connected random graph: a spanning path plus extra random edges.
pub fn random_graph(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut edges: Vec<(usize, usize, f64)> =
        (1..n).map(|v| (v - 1, v, rng.random_range(0.5..2.0))).collect();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !edges.iter().any(|&(x, y, _)| (x, y) == (a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b), rng.random_range(0.5..2.0)));
        }
    }
    edges
}

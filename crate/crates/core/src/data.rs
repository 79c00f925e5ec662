//! Dataset bundle shared by every trainer and evaluator.
//!
//! All indices are dense and 0-based. External string identifiers live in
//! [`Vocabularies`] and are only consulted at the file boundary.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of interactions a bridge user needs to be split.
pub const MIN_BRIDGE_INTERACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

/// Binary implicit feedback: a stored pair means `y_ui = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    num_users: usize,
    num_items: usize,
    rows: Vec<Interaction>,
    by_user: Vec<Vec<usize>>,
    member: Vec<HashSet<usize>>,
    item_counts: Vec<usize>,
}

impl InteractionTable {
    pub fn new(num_users: usize, num_items: usize, rows: Vec<Interaction>) -> Result<Self> {
        let mut by_user = vec![Vec::new(); num_users];
        let mut member = vec![HashSet::new(); num_users];
        let mut item_counts = vec![0; num_items];
        for r in &rows {
            if r.user >= num_users {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: r.user,
                    len: num_users,
                });
            }
            if r.item >= num_items {
                return Err(Error::IndexOutOfRange {
                    kind: "item",
                    index: r.item,
                    len: num_items,
                });
            }
            if !member[r.user].insert(r.item) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate interaction (user {}, item {})",
                    r.user, r.item
                )));
            }
            by_user[r.user].push(r.item);
            item_counts[r.item] += 1;
        }
        by_user.iter_mut().for_each(|v| v.sort_unstable());
        Ok(Self {
            num_users,
            num_items,
            rows,
            by_user,
            member,
            item_counts,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn rows(&self) -> &[Interaction] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted items the user interacted with.
    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.by_user[user]
    }

    #[inline]
    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.member[user].contains(&item)
    }

    pub fn item_count(&self, item: usize) -> usize {
        self.item_counts[item]
    }

    /// Interactions of one user with their timestamps, in row order.
    pub fn user_rows(&self, user: usize) -> impl Iterator<Item = &Interaction> {
        self.rows.iter().filter(move |r| r.user == user)
    }
}

/// Per-user and per-item categorical attribute sets drawn from one shared vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCatalog {
    num_attributes: usize,
    user_attrs: Vec<Vec<usize>>,
    item_attrs: Vec<Vec<usize>>,
}

impl AttributeCatalog {
    /// Lists are sorted and de-duplicated on construction.
    pub fn new(
        num_attributes: usize,
        mut user_attrs: Vec<Vec<usize>>,
        mut item_attrs: Vec<Vec<usize>>,
    ) -> Result<Self> {
        for list in user_attrs.iter_mut().chain(item_attrs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
            if let Some(&bad) = list.iter().find(|&&a| a >= num_attributes) {
                return Err(Error::IndexOutOfRange {
                    kind: "attribute",
                    index: bad,
                    len: num_attributes,
                });
            }
        }
        Ok(Self {
            num_attributes,
            user_attrs,
            item_attrs,
        })
    }

    /// A catalog of the given shape with every list empty.
    pub fn empty(num_attributes: usize, num_users: usize, num_items: usize) -> Self {
        Self {
            num_attributes,
            user_attrs: vec![Vec::new(); num_users],
            item_attrs: vec![Vec::new(); num_items],
        }
    }

    /// Same shape with all attribute lists cleared (the attribute-ablated variant).
    pub fn emptied(&self) -> Self {
        Self::empty(self.num_attributes, self.user_attrs.len(), self.item_attrs.len())
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attributes
    }

    pub fn num_users(&self) -> usize {
        self.user_attrs.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_attrs.len()
    }

    pub fn user(&self, u: usize) -> &[usize] {
        &self.user_attrs[u]
    }

    pub fn item(&self, i: usize) -> &[usize] {
        &self.item_attrs[i]
    }
}

/// Weighted undirected social network with cached degrees and the bridge mapping
/// from social users to information-domain users.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    bridge: Vec<Option<usize>>,
    bridge_pairs: Vec<(usize, usize)>,
}

impl SocialGraph {
    /// Builds the graph from undirected edges. A pair listed in both directions
    /// must carry the same weight; it is stored once.
    pub fn from_edges(
        num_social_users: usize,
        edges: &[(usize, usize, f64)],
        bridge_pairs: &[(usize, usize)],
        num_info_users: usize,
    ) -> Result<Self> {
        let mut canon: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, w) in edges {
            for v in [a, b] {
                if v >= num_social_users {
                    return Err(Error::IndexOutOfRange {
                        kind: "social user",
                        index: v,
                        len: num_social_users,
                    });
                }
            }
            if a == b {
                return Err(Error::InvalidConfig(format!("self-loop on social user {a}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "edge ({a}, {b}) has invalid weight {w}"
                )));
            }
            let key = (a.min(b), a.max(b));
            if let Some(&prev) = canon.get(&key) {
                if prev != w {
                    return Err(Error::InvalidConfig(format!(
                        "edge ({a}, {b}) listed with conflicting weights {prev} and {w}"
                    )));
                }
            }
            canon.insert(key, w);
        }
        let mut adjacency = vec![Vec::new(); num_social_users];
        for (&(a, b), &w) in &canon {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        adjacency.iter_mut().for_each(|row| row.sort_by_key(|&(n, _)| n));
        let degrees = adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect();
        Self::with_bridge(adjacency, degrees, bridge_pairs, num_info_users)
    }

    fn with_bridge(
        adjacency: Vec<Vec<(usize, f64)>>,
        degrees: Vec<f64>,
        bridge_pairs: &[(usize, usize)],
        num_info_users: usize,
    ) -> Result<Self> {
        let n = adjacency.len();
        let mut bridge = vec![None; n];
        let mut seen_info = HashSet::new();
        for &(s, u) in bridge_pairs {
            if s >= n {
                return Err(Error::IndexOutOfRange {
                    kind: "social user",
                    index: s,
                    len: n,
                });
            }
            if u >= num_info_users {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: u,
                    len: num_info_users,
                });
            }
            if bridge[s].is_some() || !seen_info.insert(u) {
                return Err(Error::InvalidConfig(format!(
                    "bridge mapping is not injective at ({s}, {u})"
                )));
            }
            bridge[s] = Some(u);
        }
        let mut pairs: Vec<_> = bridge_pairs.to_vec();
        pairs.sort_unstable();
        Ok(Self {
            adjacency,
            degrees,
            bridge,
            bridge_pairs: pairs,
        })
    }

    /// Assembles a graph from raw parts without recomputing degrees.
    /// Used to inspect [`SocialGraph::degree_check`] on corrupted caches.
    pub fn from_parts_unchecked(
        adjacency: Vec<Vec<(usize, f64)>>,
        degrees: Vec<f64>,
        bridge_pairs: &[(usize, usize)],
        num_info_users: usize,
    ) -> Result<Self> {
        Self::with_bridge(adjacency, degrees, bridge_pairs, num_info_users)
    }

    pub fn num_users(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(a, b, w)` with `a < b`, in index order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (a, row) in self.adjacency.iter().enumerate() {
            for &(b, w) in row {
                if a < b {
                    out.push((a, b, w));
                }
            }
        }
        out
    }

    /// Information-domain user for a social user, if it is a bridge user.
    pub fn bridge_of(&self, social: usize) -> Option<usize> {
        self.bridge[social]
    }

    /// `(social, info)` pairs sorted by social index.
    pub fn bridge_pairs(&self) -> &[(usize, usize)] {
        &self.bridge_pairs
    }

    /// Information-domain indices of all bridge users, sorted.
    pub fn bridge_info_users(&self) -> Vec<usize> {
        let mut v: Vec<_> = self.bridge_pairs.iter().map(|&(_, u)| u).collect();
        v.sort_unstable();
        v
    }

    pub fn is_bridge(&self, social: usize) -> bool {
        self.bridge[social].is_some()
    }

    /// True iff the cached degrees equal recomputed row sums within 1e-12.
    pub fn degree_check(&self) -> bool {
        self.degrees.len() == self.adjacency.len()
            && self.adjacency.iter().zip(&self.degrees).all(|(row, &d)| {
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                (sum - d).abs() <= 1e-12
            })
    }

    /// Iteratively removes non-bridge users with fewer than `min_degree`
    /// neighbours. Returns the filtered graph and, for each kept vertex, its
    /// index in `self`.
    pub fn filter_min_degree(
        &self,
        min_degree: usize,
        num_info_users: usize,
    ) -> Result<(SocialGraph, Vec<usize>)> {
        let n = self.num_users();
        let mut alive = vec![true; n];
        let mut count: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        loop {
            let mut changed = false;
            for v in 0..n {
                if alive[v] && !self.is_bridge(v) && count[v] < min_degree {
                    alive[v] = false;
                    changed = true;
                    for &(nb, _) in &self.adjacency[v] {
                        count[nb] -= 1;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .filter(|&(a, b, _)| alive[a] && alive[b])
            .map(|(a, b, w)| (remap[a], remap[b], w))
            .collect();
        let bridge: Vec<_> = self
            .bridge_pairs
            .iter()
            .map(|&(s, u)| (remap[s], u))
            .collect();
        let g = SocialGraph::from_edges(kept.len(), &edges, &bridge, num_info_users)?;
        Ok((g, kept))
    }
}

/// Partition of one bridge user's items.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UserSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/validation/test holdout over bridge users' interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    /// Keyed by information-domain user index.
    pub bridge: BTreeMap<usize, UserSplit>,
    /// Every `(user, item)` pair available for training, sorted.
    pub train_pairs: Vec<(usize, usize)>,
}

impl SplitSpec {
    pub fn test_items(&self, user: usize) -> &[usize] {
        self.bridge.get(&user).map_or(&[], |s| s.test.as_slice())
    }

    pub fn validation_items(&self, user: usize) -> &[usize] {
        self.bridge.get(&user).map_or(&[], |s| s.validation.as_slice())
    }

    /// Training-only item counts, used by popularity ranking.
    pub fn train_item_counts(&self, num_items: usize) -> Vec<usize> {
        let mut counts = vec![0; num_items];
        for &(_, i) in &self.train_pairs {
            counts[i] += 1;
        }
        counts
    }
}

/// Number of interactions held out as test for a user with `n` interactions.
pub fn test_size(n: usize) -> usize {
    n.div_ceil(5)
}

/// Number of remaining interactions held out for validation.
pub fn validation_size(remaining: usize) -> usize {
    remaining.div_ceil(5)
}

/// Holds out each bridge user's latest 20% of interactions as test and a random
/// 20% of the remainder as validation. All other users train on everything.
pub fn build_split(
    interactions: &InteractionTable,
    bridge_users: &[usize],
    seed: u64,
) -> Result<SplitSpec> {
    let mut users: Vec<usize> = bridge_users.to_vec();
    users.sort_unstable();
    users.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bridge = BTreeMap::new();
    for &u in &users {
        if u >= interactions.num_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: u,
                len: interactions.num_users(),
            });
        }
        let mut rows: Vec<(i64, usize)> = interactions
            .user_rows(u)
            .map(|r| (r.timestamp, r.item))
            .collect();
        let n = rows.len();
        if n < MIN_BRIDGE_INTERACTIONS {
            return Err(Error::BridgeUserTooSparse(u));
        }
        // Latest first; equal timestamps resolved by ascending item index.
        rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let n_test = test_size(n);
        let mut test: Vec<usize> = rows[..n_test].iter().map(|r| r.1).collect();
        let mut rest: Vec<usize> = rows[n_test..].iter().map(|r| r.1).collect();
        rest.sort_unstable();
        let n_val = validation_size(rest.len());
        let picked = sample(&mut rng, rest.len(), n_val).into_vec();
        let picked: HashSet<usize> = picked.into_iter().collect();
        let mut validation = Vec::with_capacity(n_val);
        let mut train = Vec::with_capacity(rest.len() - n_val);
        for (k, &item) in rest.iter().enumerate() {
            if picked.contains(&k) {
                validation.push(item);
            } else {
                train.push(item);
            }
        }
        test.sort_unstable();
        bridge.insert(
            u,
            UserSplit {
                train,
                validation,
                test,
            },
        );
    }
    let mut train_pairs = Vec::with_capacity(interactions.len());
    for u in 0..interactions.num_users() {
        match bridge.get(&u) {
            Some(s) => train_pairs.extend(s.train.iter().map(|&i| (u, i))),
            None => train_pairs.extend(interactions.items_of(u).iter().map(|&i| (u, i))),
        }
    }
    Ok(SplitSpec {
        seed,
        bridge,
        train_pairs,
    })
}

/// External identifiers for every dense index space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Vocabularies {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub attributes: Vec<String>,
    pub social_users: Vec<String>,
}

impl Vocabularies {
    /// Identifiers `prefix0, prefix1, ...` for synthetic bundles.
    pub fn numbered(users: usize, items: usize, attributes: usize, social: usize) -> Self {
        let gen = |p: &str, n: usize| (0..n).map(|k| format!("{p}{k}")).collect();
        Self {
            users: gen("u", users),
            items: gen("i", items),
            attributes: gen("g", attributes),
            social_users: gen("s", social),
        }
    }
}

/// Ground truth emitted alongside synthetic bundles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticTruth {
    /// Planted group of each information-domain user.
    pub user_groups: Vec<usize>,
    /// Planted group of each item.
    pub item_groups: Vec<usize>,
    /// Planted group of each social user.
    pub social_groups: Vec<usize>,
    /// Held-out preferred items for non-bridge social users, `(social, item)`.
    pub social_preferences: Vec<(usize, usize)>,
}

/// Everything a trainer or evaluator reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: InteractionTable,
    pub attributes: AttributeCatalog,
    pub social: SocialGraph,
    pub vocab: Vocabularies,
    pub truth: Option<SyntheticTruth>,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.interactions.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.interactions.num_items()
    }

    /// Copy with every attribute list emptied.
    pub fn without_attributes(&self) -> Self {
        Self {
            attributes: self.attributes.emptied(),
            ..self.clone()
        }
    }

    pub fn split(&self, seed: u64) -> Result<SplitSpec> {
        build_split(&self.interactions, &self.social.bridge_info_users(), seed)
    }
}

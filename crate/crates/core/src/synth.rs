//! Planted-preference synthetic bundles.
//!
//! Users, items and social users are assigned to latent groups. Information
//! users and items carry the attribute pair `{g, g+1 mod G}` of their group
//! `g`. A user's interactions come from their own group with
//! probability `1 − noise`; social edges stay inside a group with probability
//! `homophily`. Bridge users copy the group of the information-domain account
//! they are paired with, so their social neighbourhood carries the same taste.

use std::collections::HashSet;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    AttributeCatalog, Dataset, Interaction, InteractionTable, SocialGraph, SyntheticTruth,
    Vocabularies, MIN_BRIDGE_INTERACTIONS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_info_users: usize,
    pub num_items: usize,
    pub num_social_users: usize,
    pub num_bridge_users: usize,
    pub num_attribute_groups: usize,
    pub interactions_per_user: usize,
    pub friends_per_user: usize,
    pub preference_noise: f64,
    pub homophily: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_info_users: 500,
            num_items: 200,
            num_social_users: 800,
            num_bridge_users: 50,
            num_attribute_groups: 19,
            interactions_per_user: 5,
            friends_per_user: 8,
            preference_noise: 0.2,
            homophily: 0.9,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleSpec(m));
        let counts = [
            ("info users", self.num_info_users),
            ("items", self.num_items),
            ("social users", self.num_social_users),
            ("bridge users", self.num_bridge_users),
            ("attribute groups", self.num_attribute_groups),
            ("interactions per user", self.interactions_per_user),
            ("friends per user", self.friends_per_user),
        ];
        for (name, v) in counts {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.num_bridge_users > self.num_info_users.min(self.num_social_users) {
            return fail(format!(
                "{} bridge users exceed min(info users, social users) = {}",
                self.num_bridge_users,
                self.num_info_users.min(self.num_social_users)
            ));
        }
        if !(0.0..=1.0).contains(&self.preference_noise) || !(0.0..=1.0).contains(&self.homophily)
        {
            return fail("noise and homophily must lie in [0, 1]".into());
        }
        let max_interactions = self.interactions_per_user + self.interactions_per_user / 2;
        if max_interactions.max(MIN_BRIDGE_INTERACTIONS) >= self.num_items {
            return fail(format!(
                "up to {max_interactions} interactions per user need more than {} items",
                self.num_items
            ));
        }
        if self.num_attribute_groups > self.num_items
            || self.num_attribute_groups > self.num_social_users
        {
            return fail("every group needs at least one item and one social user".into());
        }
        let smallest_social_group = self.num_social_users / self.num_attribute_groups;
        if self.homophily > 0.0 && self.friends_per_user >= smallest_social_group {
            return fail(format!(
                "{} friends per user exceed social group size {smallest_social_group}",
                self.friends_per_user
            ));
        }
        if self.preference_noise < 1.0 {
            let smallest_item_group = self.num_items / self.num_attribute_groups;
            if smallest_item_group < 2 {
                return fail("item groups are too small to draw preferences from".into());
            }
        }
        Ok(())
    }
}

/// Balanced random group assignment: every group gets `⌊n/G⌋` or `⌈n/G⌉` members.
fn assign_groups<R: Rng + ?Sized>(n: usize, groups: usize, rng: &mut R) -> Vec<usize> {
    let mut g: Vec<usize> = (0..n).map(|k| k % groups).collect();
    g.shuffle(rng);
    g
}

fn members(groups: &[usize], num_groups: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); num_groups];
    for (v, &g) in groups.iter().enumerate() {
        m[g].push(v);
    }
    m
}

/// Draws `count` distinct items; each from `group_items` with probability
/// `1 − noise` while any remain, otherwise uniformly from all items.
fn draw_preferences<R: Rng + ?Sized>(
    count: usize,
    group_items: &[usize],
    num_items: usize,
    noise: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut pool: Vec<usize> = group_items.to_vec();
    pool.shuffle(rng);
    while out.len() < count {
        let item = if !pool.is_empty() && rng.random::<f64>() >= noise {
            pool.pop().unwrap()
        } else {
            rng.random_range(0..num_items)
        };
        if chosen.insert(item) {
            out.push(item);
        }
    }
    out
}

fn interaction_count<R: Rng + ?Sized>(mean: usize, rng: &mut R) -> usize {
    let lo = (mean / 2).max(MIN_BRIDGE_INTERACTIONS);
    let hi = (mean + mean / 2).max(lo);
    rng.random_range(lo..=hi)
}

/// Attribute set of an entity in `group`: the group's own attribute and its
/// cyclic successor, so adjacent groups share one attribute and every group
/// has a unique attribute pair.
fn attribute_set(group: usize, num_groups: usize) -> Vec<usize> {
    let mut attrs = vec![group, (group + 1) % num_groups];
    attrs.sort_unstable();
    attrs.dedup();
    attrs
}

/// Picks a friend for `v`: same group with probability `homophily`, else from
/// any other group.
fn draw_friend<R: Rng + ?Sized>(
    v: usize,
    groups: &[usize],
    by_group: &[Vec<usize>],
    homophily: f64,
    rng: &mut R,
) -> Option<usize> {
    let n = groups.len();
    let own = &by_group[groups[v]];
    let same = own.len() > 1 && rng.random::<f64>() < homophily;
    for _ in 0..64 {
        let cand = if same {
            own[rng.random_range(0..own.len())]
        } else {
            rng.random_range(0..n)
        };
        let ok = cand != v && (same || groups[cand] != groups[v] || own.len() == n);
        if ok {
            return Some(cand);
        }
    }
    None
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.num_attribute_groups;

    let item_groups = assign_groups(spec.num_items, g, &mut rng);
    let user_groups = assign_groups(spec.num_info_users, g, &mut rng);
    let mut social_groups = assign_groups(spec.num_social_users, g, &mut rng);

    let bridge_social = sample(&mut rng, spec.num_social_users, spec.num_bridge_users).into_vec();
    let bridge_info = sample(&mut rng, spec.num_info_users, spec.num_bridge_users).into_vec();
    let mut bridge_pairs: Vec<(usize, usize)> =
        bridge_social.into_iter().zip(bridge_info).collect();
    bridge_pairs.sort_unstable();
    for &(s, u) in &bridge_pairs {
        social_groups[s] = user_groups[u];
    }

    let items_by_group = members(&item_groups, g);

    let user_attrs: Vec<Vec<usize>> = user_groups
        .iter()
        .map(|&grp| attribute_set(grp, g))
        .collect();
    let item_attrs: Vec<Vec<usize>> = item_groups
        .iter()
        .map(|&grp| attribute_set(grp, g))
        .collect();

    let mut rows = Vec::new();
    for (u, &grp) in user_groups.iter().enumerate() {
        let n = interaction_count(spec.interactions_per_user, &mut rng);
        let items = draw_preferences(
            n,
            &items_by_group[grp],
            spec.num_items,
            spec.preference_noise,
            &mut rng,
        );
        let mut stamps: Vec<i64> = (0..n as i64).collect();
        stamps.shuffle(&mut rng);
        for (item, ts) in items.into_iter().zip(stamps) {
            rows.push(Interaction {
                user: u,
                item,
                timestamp: 1_000 + 10 * ts,
            });
        }
    }

    let social_by_group = members(&social_groups, g);
    let mut edge_set: HashSet<(usize, usize)> = HashSet::new();
    let mut degree = vec![0usize; spec.num_social_users];
    let mut add_edge = |a: usize, b: usize, degree: &mut Vec<usize>| {
        if edge_set.insert((a.min(b), a.max(b))) {
            degree[a] += 1;
            degree[b] += 1;
        }
    };
    let per_user = spec.friends_per_user.div_ceil(2);
    for v in 0..spec.num_social_users {
        for _ in 0..per_user {
            if let Some(f) = draw_friend(v, &social_groups, &social_by_group, spec.homophily, &mut rng)
            {
                add_edge(v, f, &mut degree);
            }
        }
    }
    // Every social user ends with at least two friends.
    for v in 0..spec.num_social_users {
        let mut guard = 0;
        while degree[v] < 2 && guard < 256 {
            if let Some(f) = draw_friend(v, &social_groups, &social_by_group, spec.homophily, &mut rng)
            {
                add_edge(v, f, &mut degree);
            }
            guard += 1;
        }
        if degree[v] < 2 {
            return Err(Error::InfeasibleSpec(format!(
                "could not give social user {v} two friends"
            )));
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = edge_set.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let mut social_preferences = Vec::new();
    for (s, &grp) in social_groups.iter().enumerate() {
        if bridge_pairs.binary_search_by_key(&s, |p| p.0).is_ok() {
            continue;
        }
        let n = interaction_count(spec.interactions_per_user, &mut rng);
        let mut items = draw_preferences(
            n,
            &items_by_group[grp],
            spec.num_items,
            spec.preference_noise,
            &mut rng,
        );
        items.sort_unstable();
        social_preferences.extend(items.into_iter().map(|i| (s, i)));
    }

    let interactions = InteractionTable::new(spec.num_info_users, spec.num_items, rows)?;
    let attributes = AttributeCatalog::new(g, user_attrs, item_attrs)?;
    let social = SocialGraph::from_edges(
        spec.num_social_users,
        &edges,
        &bridge_pairs,
        spec.num_info_users,
    )?;
    Ok(Dataset {
        interactions,
        attributes,
        social,
        vocab: Vocabularies::numbered(spec.num_info_users, spec.num_items, g, spec.num_social_users),
        truth: Some(SyntheticTruth {
            user_groups,
            item_groups,
            social_groups,
            social_preferences,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            num_info_users: 60,
            num_items: 40,
            num_social_users: 90,
            num_bridge_users: 10,
            num_attribute_groups: 4,
            interactions_per_user: 6,
            friends_per_user: 4,
            preference_noise: 0.2,
            homophily: 0.9,
            seed: 3,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        assert_ne!(
            generate(&small()).unwrap(),
            generate(&small().with_seed(4)).unwrap()
        );
    }

    #[test]
    fn degenerate_parameters_stay_in_group() {
        let spec = SyntheticSpec {
            preference_noise: 0.0,
            homophily: 1.0,
            ..small()
        };
        let d = generate(&spec).unwrap();
        let t = d.truth.as_ref().unwrap();
        for r in d.interactions.rows() {
            assert_eq!(t.user_groups[r.user], t.item_groups[r.item]);
        }
        for (a, b, _) in d.social.edges() {
            assert_eq!(t.social_groups[a], t.social_groups[b]);
        }
        for u in 0..d.num_users() {
            assert!(d.attributes.user(u).contains(&t.user_groups[u]));
            assert_eq!(d.attributes.user(u).len(), 2);
        }
    }

    #[test]
    fn centroid_classifier_recovers_groups() {
        let spec = SyntheticSpec {
            preference_noise: 0.0,
            homophily: 1.0,
            ..small()
        };
        let d = generate(&spec).unwrap();
        let t = d.truth.as_ref().unwrap();
        for u in 0..d.num_users() {
            let mut votes = vec![0usize; spec.num_attribute_groups];
            for &i in d.interactions.items_of(u) {
                votes[t.item_groups[i]] += 1;
            }
            let guess = (0..votes.len()).max_by_key(|&g| votes[g]).unwrap();
            assert_eq!(guess, t.user_groups[u]);
        }
    }

    #[test]
    fn graph_invariants_and_minimum_degree() {
        let d = generate(&small()).unwrap();
        assert!(d.social.degree_check());
        for v in 0..d.social.num_users() {
            assert!(d.social.neighbors(v).len() >= 2);
            for &(n, w) in d.social.neighbors(v) {
                assert!(d.social.neighbors(n).contains(&(v, w)));
            }
        }
        assert_eq!(d.social.bridge_pairs().len(), 10);
    }

    #[test]
    fn bridge_users_share_group() {
        let d = generate(&small()).unwrap();
        let t = d.truth.as_ref().unwrap();
        for &(s, u) in d.social.bridge_pairs() {
            assert_eq!(t.social_groups[s], t.user_groups[u]);
        }
    }

    #[test]
    fn infeasible_specs() {
        assert!(matches!(
            generate(&SyntheticSpec { num_bridge_users: 0, ..small() }),
            Err(Error::InfeasibleSpec(_))
        ));
        assert!(matches!(
            generate(&SyntheticSpec { friends_per_user: 50, ..small() }),
            Err(Error::InfeasibleSpec(_))
        ));
        assert!(matches!(
            generate(&SyntheticSpec { num_bridge_users: 61, ..small() }),
            Err(Error::InfeasibleSpec(_))
        ));
    }
}

//! Tab-separated dataset bundles and JSON model checkpoints.
//!
//! A bundle directory holds
//!
//! | file | columns |
//! |---|---|
//! | `interactions.tsv` | `user_id item_id timestamp` |
//! | `user_attrs.tsv` | `user_id attribute_id` |
//! | `item_attrs.tsv` | `item_id attribute_id` |
//! | `social_edges.tsv` | `user_a user_b [weight]` |
//! | `bridge.tsv` | `social_user_id info_user_id` |
//!
//! plus `*.vocab.tsv` sidecars (`index id`) that pin the dense numbering, and,
//! for synthetic bundles, `groups.tsv` and `social_truth.tsv`. Every file has
//! one header line. Reals are written with the shortest representation that
//! parses back to the same bits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alternating::predict_social;
use crate::baselines::{FactorModel, FmRanker, ItemPop};
use crate::data::{
    AttributeCatalog, Dataset, Interaction, InteractionTable, SocialGraph, SyntheticTruth,
    Vocabularies,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pooling::{predict, HyperParams, ModelParameters};

pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const USER_ATTRS_FILE: &str = "user_attrs.tsv";
pub const ITEM_ATTRS_FILE: &str = "item_attrs.tsv";
pub const SOCIAL_EDGES_FILE: &str = "social_edges.tsv";
pub const BRIDGE_FILE: &str = "bridge.tsv";
pub const USER_VOCAB_FILE: &str = "users.vocab.tsv";
pub const ITEM_VOCAB_FILE: &str = "items.vocab.tsv";
pub const ATTRIBUTE_VOCAB_FILE: &str = "attributes.vocab.tsv";
pub const SOCIAL_VOCAB_FILE: &str = "social_users.vocab.tsv";
pub const GROUPS_FILE: &str = "groups.tsv";
pub const SOCIAL_TRUTH_FILE: &str = "social_truth.tsv";

/// Checkpoint layout version; bumped on incompatible changes.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Ingestion switches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    /// Drop non-bridge social users with fewer friends than this, repeatedly,
    /// until every remaining one qualifies. `None` keeps everyone.
    pub min_degree: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { min_degree: Some(2) }
    }
}

struct Table {
    file: String,
    rows: Vec<(usize, Vec<String>)>,
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a TSV file whose header must be one of `headers`. Returns the index of
/// the matched header and the data rows with their 1-based line numbers.
fn read_table(dir: &Path, name: &str, headers: &[&[&str]]) -> Result<(usize, Table)> {
    let text = fs::read_to_string(dir.join(name))?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h,
        None => return Err(parse_err(name, 1, "missing header line")),
    };
    let fields: Vec<&str> = header.split('\t').collect();
    let which = headers
        .iter()
        .position(|h| *h == fields.as_slice())
        .ok_or_else(|| {
            let want: Vec<String> = headers.iter().map(|h| h.join("\\t")).collect();
            parse_err(name, 1, format!("header must be one of: {}", want.join(" | ")))
        })?;
    let width = headers[which].len();
    let mut rows = Vec::new();
    for (k, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != width {
            return Err(parse_err(
                name,
                k + 1,
                format!("expected {width} fields, found {}", cols.len()),
            ));
        }
        rows.push((k + 1, cols));
    }
    Ok((
        which,
        Table {
            file: name.to_string(),
            rows,
        },
    ))
}

fn read_optional(dir: &Path, name: &str, headers: &[&[&str]]) -> Result<Option<(usize, Table)>> {
    if dir.join(name).exists() {
        read_table(dir, name, headers).map(Some)
    } else {
        Ok(None)
    }
}

/// Identifier ↔ index map that either is fixed by a sidecar or grows on first use.
struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    frozen: bool,
}

impl Vocab {
    fn open() -> Self {
        Self {
            ids: Vec::new(),
            index: HashMap::new(),
            frozen: false,
        }
    }

    fn load(dir: &Path, name: &str) -> Result<Self> {
        let Some((_, table)) = read_optional(dir, name, &[&["index", "id"]])? else {
            return Ok(Self::open());
        };
        let mut v = Self::open();
        for (line, cols) in table.rows {
            let idx: usize = cols[0]
                .parse()
                .map_err(|_| parse_err(name, line, format!("bad index '{}'", cols[0])))?;
            if idx != v.ids.len() {
                return Err(parse_err(
                    name,
                    line,
                    format!("index {idx} out of sequence, expected {}", v.ids.len()),
                ));
            }
            if v.index.insert(cols[1].clone(), idx).is_some() {
                return Err(parse_err(name, line, format!("duplicate id '{}'", cols[1])));
            }
            v.ids.push(cols[1].clone());
        }
        v.frozen = true;
        Ok(v)
    }

    fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Index of `id`, adding it when the vocabulary is still open.
    fn intern(&mut self, id: &str) -> Option<usize> {
        if let Some(i) = self.get(id) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        Some(i)
    }
}

fn dangling(t: &Table, line: usize, kind: &'static str, id: &str) -> Error {
    Error::DanglingReference {
        file: t.file.clone(),
        line,
        kind,
        id: id.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(t: &Table, line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(&t.file, line, format!("bad {what} '{s}'")))
}

/// Reads a bundle directory.
pub fn load_bundle(dir: &Path, options: &LoadOptions) -> Result<Dataset> {
    let mut users = Vocab::load(dir, USER_VOCAB_FILE)?;
    let mut items = Vocab::load(dir, ITEM_VOCAB_FILE)?;
    let mut attributes = Vocab::load(dir, ATTRIBUTE_VOCAB_FILE)?;
    let mut social = Vocab::load(dir, SOCIAL_VOCAB_FILE)?;

    let (_, t) = read_table(dir, INTERACTIONS_FILE, &[&["user_id", "item_id", "timestamp"]])?;
    let mut rows = Vec::with_capacity(t.rows.len());
    let mut seen = HashSet::new();
    for (line, cols) in &t.rows {
        let line = *line;
        let user = users
            .intern(&cols[0])
            .ok_or_else(|| parse_err(&t.file, line, format!("unknown user '{}'", cols[0])))?;
        let item = items
            .intern(&cols[1])
            .ok_or_else(|| parse_err(&t.file, line, format!("unknown item '{}'", cols[1])))?;
        let timestamp = parse_field(&t, line, "timestamp", &cols[2])?;
        if !seen.insert((user, item)) {
            return Err(parse_err(&t.file, line, "duplicate (user, item) pair"));
        }
        rows.push(Interaction {
            user,
            item,
            timestamp,
        });
    }

    let mut read_attrs = |name: &str, entity: &Vocab, kind: &'static str| -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        if let Some((_, t)) = read_optional(dir, name, &[&[&format!("{kind}_id"), "attribute_id"]])? {
            for (line, cols) in &t.rows {
                let e = entity.get(&cols[0]).ok_or_else(|| dangling(&t, *line, kind, &cols[0]))?;
                let a = attributes
                    .intern(&cols[1])
                    .ok_or_else(|| dangling(&t, *line, "attribute", &cols[1]))?;
                out.push((e, a));
            }
        }
        Ok(out)
    };
    let user_attr_pairs = read_attrs(USER_ATTRS_FILE, &users, "user")?;
    let item_attr_pairs = read_attrs(ITEM_ATTRS_FILE, &items, "item")?;

    let mut edges = Vec::new();
    let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
    if let Some((which, t)) = read_optional(
        dir,
        SOCIAL_EDGES_FILE,
        &[&["user_a", "user_b"], &["user_a", "user_b", "weight"]],
    )? {
        for (line, cols) in &t.rows {
            let line = *line;
            let a = social.intern(&cols[0]).ok_or_else(|| dangling(&t, line, "social user", &cols[0]))?;
            let b = social.intern(&cols[1]).ok_or_else(|| dangling(&t, line, "social user", &cols[1]))?;
            let w: f64 = if which == 1 {
                parse_field(&t, line, "weight", &cols[2])?
            } else {
                1.0
            };
            if !(w.is_finite() && w >= 0.0) {
                return Err(parse_err(&t.file, line, format!("weight must be finite and non-negative, got {w}")));
            }
            if a == b {
                return Err(parse_err(&t.file, line, format!("self-loop on '{}'", cols[0])));
            }
            let key = (a.min(b), a.max(b));
            match weights.get(&key) {
                Some(&prev) if prev != w => {
                    return Err(parse_err(
                        &t.file,
                        line,
                        format!("edge ({}, {}) repeated with weight {w}, earlier {prev}", cols[0], cols[1]),
                    ))
                }
                Some(_) => {}
                None => {
                    weights.insert(key, w);
                    edges.push((key.0, key.1, w));
                }
            }
        }
    }

    let mut bridge = Vec::new();
    if let Some((_, t)) = read_optional(dir, BRIDGE_FILE, &[&["social_user_id", "info_user_id"]])? {
        let mut seen_s = HashSet::new();
        let mut seen_u = HashSet::new();
        for (line, cols) in &t.rows {
            let s = social.intern(&cols[0]).ok_or_else(|| dangling(&t, *line, "social user", &cols[0]))?;
            let u = users.get(&cols[1]).ok_or_else(|| dangling(&t, *line, "user", &cols[1]))?;
            if !seen_s.insert(s) || !seen_u.insert(u) {
                return Err(parse_err(&t.file, *line, "bridge mapping is not one-to-one"));
            }
            bridge.push((s, u));
        }
    }

    let truth = load_truth(dir, &users, &items, &social)?;

    let interactions = InteractionTable::new(users.ids.len(), items.ids.len(), rows)?;
    let mut ua = vec![Vec::new(); users.ids.len()];
    for (u, a) in user_attr_pairs {
        ua[u].push(a);
    }
    let mut ia = vec![Vec::new(); items.ids.len()];
    for (i, a) in item_attr_pairs {
        ia[i].push(a);
    }
    let catalog = AttributeCatalog::new(attributes.ids.len(), ua, ia)?;
    let graph = SocialGraph::from_edges(social.ids.len(), &edges, &bridge, users.ids.len())?;

    let mut data = Dataset {
        interactions,
        attributes: catalog,
        social: graph,
        vocab: Vocabularies {
            users: users.ids,
            items: items.ids,
            attributes: attributes.ids,
            social_users: social.ids,
        },
        truth,
    };
    if let Some(min) = options.min_degree {
        apply_min_degree(&mut data, min)?;
    }
    Ok(data)
}

fn load_truth(dir: &Path, users: &Vocab, items: &Vocab, social: &Vocab) -> Result<Option<SyntheticTruth>> {
    let Some((_, t)) = read_optional(dir, GROUPS_FILE, &[&["kind", "id", "group"]])? else {
        return Ok(None);
    };
    let mut truth = SyntheticTruth {
        user_groups: vec![0; users.ids.len()],
        item_groups: vec![0; items.ids.len()],
        social_groups: vec![0; social.ids.len()],
        social_preferences: Vec::new(),
    };
    for (line, cols) in &t.rows {
        let (vocab, target, kind) = match cols[0].as_str() {
            "user" => (users, &mut truth.user_groups, "user"),
            "item" => (items, &mut truth.item_groups, "item"),
            "social" => (social, &mut truth.social_groups, "social user"),
            other => return Err(parse_err(&t.file, *line, format!("unknown kind '{other}'"))),
        };
        let idx = vocab.get(&cols[1]).ok_or_else(|| dangling(&t, *line, kind, &cols[1]))?;
        target[idx] = parse_field(&t, *line, "group", &cols[2])?;
    }
    if let Some((_, t)) = read_optional(dir, SOCIAL_TRUTH_FILE, &[&["social_user_id", "item_id"]])? {
        for (line, cols) in &t.rows {
            let s = social.get(&cols[0]).ok_or_else(|| dangling(&t, *line, "social user", &cols[0]))?;
            let i = items.get(&cols[1]).ok_or_else(|| dangling(&t, *line, "item", &cols[1]))?;
            truth.social_preferences.push((s, i));
        }
    }
    Ok(Some(truth))
}

/// Applies the minimum-friend filter and renumbers everything social-side.
fn apply_min_degree(data: &mut Dataset, min: usize) -> Result<()> {
    let (graph, kept) = data.social.filter_min_degree(min, data.num_users())?;
    if kept.len() == data.social.num_users() {
        return Ok(());
    }
    let mut remap = vec![None; data.social.num_users()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = Some(new);
    }
    data.vocab.social_users = kept.iter().map(|&s| data.vocab.social_users[s].clone()).collect();
    if let Some(t) = data.truth.as_mut() {
        t.social_groups = kept.iter().map(|&s| t.social_groups[s]).collect();
        t.social_preferences = t
            .social_preferences
            .iter()
            .filter_map(|&(s, i)| remap[s].map(|n| (n, i)))
            .collect();
    }
    data.social = graph;
    Ok(())
}

fn write_lines(dir: &Path, name: &str, header: &str, body: &str) -> Result<()> {
    let mut text = String::with_capacity(header.len() + body.len() + 1);
    text.push_str(header);
    text.push('\n');
    text.push_str(body);
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_vocab(dir: &Path, name: &str, ids: &[String]) -> Result<()> {
    let mut body = String::new();
    for (k, id) in ids.iter().enumerate() {
        writeln!(body, "{k}\t{id}").unwrap();
    }
    write_lines(dir, name, "index\tid", &body)
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidConfig(format!(
            "identifier {id:?} is empty or contains a tab or newline"
        )));
    }
    Ok(())
}

/// Writes `data` into `dir`, creating it if needed.
pub fn save_bundle(data: &Dataset, dir: &Path) -> Result<()> {
    let v = &data.vocab;
    if v.users.len() != data.num_users()
        || v.items.len() != data.num_items()
        || v.attributes.len() != data.attributes.num_attributes()
        || v.social_users.len() != data.social.num_users()
    {
        return Err(Error::InvalidConfig("vocabulary sizes do not match the dataset".into()));
    }
    for id in v.users.iter().chain(&v.items).chain(&v.attributes).chain(&v.social_users) {
        check_id(id)?;
    }
    fs::create_dir_all(dir)?;
    write_vocab(dir, USER_VOCAB_FILE, &v.users)?;
    write_vocab(dir, ITEM_VOCAB_FILE, &v.items)?;
    write_vocab(dir, ATTRIBUTE_VOCAB_FILE, &v.attributes)?;
    write_vocab(dir, SOCIAL_VOCAB_FILE, &v.social_users)?;

    let mut body = String::new();
    for r in data.interactions.rows() {
        writeln!(body, "{}\t{}\t{}", v.users[r.user], v.items[r.item], r.timestamp).unwrap();
    }
    write_lines(dir, INTERACTIONS_FILE, "user_id\titem_id\ttimestamp", &body)?;

    let mut body = String::new();
    for u in 0..data.num_users() {
        for &a in data.attributes.user(u) {
            writeln!(body, "{}\t{}", v.users[u], v.attributes[a]).unwrap();
        }
    }
    write_lines(dir, USER_ATTRS_FILE, "user_id\tattribute_id", &body)?;

    let mut body = String::new();
    for i in 0..data.num_items() {
        for &a in data.attributes.item(i) {
            writeln!(body, "{}\t{}", v.items[i], v.attributes[a]).unwrap();
        }
    }
    write_lines(dir, ITEM_ATTRS_FILE, "item_id\tattribute_id", &body)?;

    let mut body = String::new();
    for (a, b, w) in data.social.edges() {
        writeln!(body, "{}\t{}\t{w}", v.social_users[a], v.social_users[b]).unwrap();
    }
    write_lines(dir, SOCIAL_EDGES_FILE, "user_a\tuser_b\tweight", &body)?;

    let mut body = String::new();
    for &(s, u) in data.social.bridge_pairs() {
        writeln!(body, "{}\t{}", v.social_users[s], v.users[u]).unwrap();
    }
    write_lines(dir, BRIDGE_FILE, "social_user_id\tinfo_user_id", &body)?;

    if let Some(t) = &data.truth {
        let mut body = String::new();
        for (kind, ids, groups) in [
            ("user", &v.users, &t.user_groups),
            ("item", &v.items, &t.item_groups),
            ("social", &v.social_users, &t.social_groups),
        ] {
            for (id, g) in ids.iter().zip(groups) {
                writeln!(body, "{kind}\t{id}\t{g}").unwrap();
            }
        }
        write_lines(dir, GROUPS_FILE, "kind\tid\tgroup", &body)?;
        let mut body = String::new();
        for &(s, i) in &t.social_preferences {
            writeln!(body, "{}\t{}", v.social_users[s], v.items[i]).unwrap();
        }
        write_lines(dir, SOCIAL_TRUTH_FILE, "social_user_id\titem_id", &body)?;
    }
    Ok(())
}

/// Writes `key=value` lines in the given order.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        writeln!(text, "{k}={v}").unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// Parses `key=value` lines; blank lines and lines starting with `#` are ignored.
pub fn parse_key_values(text: &str, file: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(file, k + 1, "expected key=value"))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

/// Learned state of any supported model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    /// Neural ranker plus propagated social embeddings.
    Nscr {
        params: ModelParameters,
        social: Matrix,
    },
    /// Inner-product factor model (MF and SR).
    Factor { model: FactorModel },
    /// Factorization machine with its precomputed feature lists.
    Fm { ranker: FmRanker },
    ItemPop { model: ItemPop },
    /// A fixed users × items score table.
    Scores { scores: Matrix },
}

/// Everything needed to score and recommend without the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Model name as given on the command line, e.g. `nscr-a`.
    pub model: String,
    pub hyperparams: HyperParams,
    /// Effective configuration at training time.
    pub config: BTreeMap<String, String>,
    pub split_seed: u64,
    pub vocab: Vocabularies,
    pub bridge_pairs: Vec<(usize, usize)>,
    /// Attributes the model was trained with (emptied for ablations).
    pub catalog: AttributeCatalog,
    pub state: ModelState,
}

impl Checkpoint {
    pub fn num_items(&self) -> usize {
        self.vocab.items.len()
    }

    /// Score of information-domain `user` for `item`.
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        let users = self.vocab.users.len();
        if user >= users {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: user,
                len: users,
            });
        }
        if item >= self.num_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: item,
                len: self.num_items(),
            });
        }
        Ok(match &self.state {
            ModelState::Nscr { params, .. } => predict(params, user, item, &self.catalog)?,
            ModelState::Factor { model } => model.score(user, item),
            ModelState::Fm { ranker } => ranker.score_features(user, item),
            ModelState::ItemPop { model } => model.score(item),
            ModelState::Scores { scores } => scores.get(user, item),
        })
    }

    /// Score of a social user for `item`. NSCR covers every social user; the
    /// other models only bridge users, through their information account.
    pub fn score_social(&self, social_user: usize, item: usize) -> Result<f64> {
        match &self.state {
            ModelState::Nscr { params, social } => {
                predict_social(params, social, social_user, item, &self.catalog)
            }
            ModelState::ItemPop { model } if item < self.num_items() => Ok(model.score(item)),
            _ => {
                let user = self
                    .bridge_pairs
                    .iter()
                    .find(|&&(s, _)| s == social_user)
                    .map(|&(_, u)| u)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "model '{}' can only score bridge users; social user {social_user} is not one",
                            self.model
                        ))
                    })?;
                self.score(user, item)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.state {
            ModelState::Nscr { params, social } => params.is_finite() && social.is_finite(),
            ModelState::Factor { model } => model.user_emb.is_finite() && model.item_emb.is_finite(),
            ModelState::Fm { ranker } => {
                ranker.fm.global_bias.is_finite()
                    && ranker.fm.linear.iter().all(|x| x.is_finite())
                    && ranker.fm.factors.is_finite()
            }
            ModelState::ItemPop { .. } => true,
            ModelState::Scores { scores } => scores.is_finite(),
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if !checkpoint.is_finite() {
        return Err(Error::NumericFailure("refusing to save non-finite parameters".into()));
    }
    let text = serde_json::to_string(checkpoint).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(CHECKPOINT_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!(
                "format version {v} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
            )))
        }
        None => return Err(Error::Checkpoint("missing format_version".into())),
    }
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))
}

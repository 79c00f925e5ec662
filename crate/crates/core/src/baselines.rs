//! Reference rankers: item popularity, matrix factorization, a social-aware
//! factorization machine (SFM) and social-regularized MF (SR). Every
//! model-based baseline trains on the same triplet sampler and squared
//! pairwise loss as the main model.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_holdout, Holdout};
use crate::linalg::{dot, Matrix};
use crate::pooling::{HyperParams, ADAGRAD_EPSILON};
use crate::trainer::{epoch_batches, numeric_failure, triplet_loss, triplet_loss_grad, Triplet};

/// Default social regularization weight of SR.
pub const SR_BETA: f64 = 0.5;

/// Similarity assigned to friends with disjoint attribute sets.
pub const SIMILARITY_FLOOR: f64 = 0.01;

/// Popularity of an item: its number of training interactions.
pub fn itempop_score(train_counts: &[usize], item: usize) -> f64 {
    train_counts.get(item).copied().unwrap_or(0) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPop {
    pub counts: Vec<usize>,
}

impl ItemPop {
    pub fn fit(split: &SplitSpec, num_items: usize) -> Self {
        Self {
            counts: split.train_item_counts(num_items),
        }
    }

    pub fn score(&self, item: usize) -> f64 {
        itempop_score(&self.counts, item)
    }
}

/// Inner product of latent vectors.
pub fn mf_predict(user_vec: &[f64], item_vec: &[f64]) -> Result<f64> {
    if user_vec.len() != item_vec.len() {
        return Err(Error::DimensionMismatch {
            expected: user_vec.len(),
            got: item_vec.len(),
        });
    }
    Ok(dot(user_vec, item_vec))
}

fn adagrad(theta: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64) {
    for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        if g != 0.0 {
            *a += g * g;
            *t -= lr * g / (a.sqrt() + ADAGRAD_EPSILON);
        }
    }
}

fn add_into(map: &mut BTreeMap<usize, Vec<f64>>, row: usize, k: usize, f: impl Fn(usize) -> f64) {
    let e = map.entry(row).or_insert_with(|| vec![0.0; k]);
    for (d, v) in e.iter_mut().enumerate() {
        *v += f(d);
    }
}

/// Training hooks shared by the baseline models.
pub trait PairwiseRanker: Clone {
    fn score(&self, data: &Dataset, user: usize, item: usize) -> f64;

    /// One mean-gradient Adagrad step over `batch`; returns the summed loss.
    fn train_batch(&mut self, data: &Dataset, batch: &[Triplet], lr: f64) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub patience: usize,
    pub hp: HyperParams,
    pub recall_k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            patience: 5,
            hp: HyperParams::default(),
            recall_k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Epoch loop with early stopping on bridge-user validation AUC.
pub fn fit_ranker<M: PairwiseRanker, R: Rng + ?Sized>(
    mut model: M,
    data: &Dataset,
    split: &SplitSpec,
    config: &BaselineConfig,
    rng: &mut R,
) -> Result<Fitted<M>> {
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, M)> = None;
    let mut since = 0;
    for epoch in 1..=config.epochs {
        let batches = epoch_batches(&data.interactions, split, config.hp.batch_size, rng)?;
        let mut total = 0.0;
        let mut count = 0;
        for b in &batches {
            total += model.train_batch(data, b, config.hp.learning_rate)?;
            count += b.len();
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let val_auc = evaluate_holdout(
            |u, i| Ok(model.score(data, u, i)),
            data,
            split,
            config.recall_k,
            Holdout::Validation,
        )?
        .mean_auc;
        history.push(EpochRecord {
            epoch,
            loss,
            val_auc,
        });
        if best.as_ref().is_none_or(|b| val_auc > b.0) {
            best = Some((val_auc, epoch, model.clone()));
            since = 0;
        } else {
            since += 1;
            if since >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.ok_or_else(|| {
        Error::InvalidConfig("baseline training needs at least one epoch".into())
    })?;
    Ok(Fitted {
        model,
        history,
        best_epoch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub user_emb: Matrix,
    pub item_emb: Matrix,
    user_acc: Matrix,
    item_acc: Matrix,
}

impl FactorModel {
    pub fn init<R: Rng + ?Sized>(
        num_users: usize,
        num_items: usize,
        hp: &HyperParams,
        rng: &mut R,
    ) -> Self {
        let k = hp.embedding_size;
        let normal = Normal::new(0.0, hp.init_std).expect("init std is validated positive");
        let user_emb = Matrix::from_fn(num_users, k, |_, _| normal.sample(&mut *rng));
        let item_emb = Matrix::from_fn(num_items, k, |_, _| normal.sample(&mut *rng));
        Self {
            user_acc: Matrix::zeros(num_users, k),
            item_acc: Matrix::zeros(num_items, k),
            user_emb,
            item_emb,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.user_emb.row(user), self.item_emb.row(item))
    }
}

/// Attribute-overlap (Jaccard) similarity, floored at [`SIMILARITY_FLOOR`].
pub fn attribute_similarity(a: &[usize], b: &[usize]) -> f64 {
    let sa: HashSet<_> = a.iter().collect();
    let sb: HashSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    let jaccard = if union == 0 {
        0.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    };
    jaccard.max(SIMILARITY_FLOOR)
}

/// `β Σ_u Σ_{f∈friends(u)} sim(u,f)‖p_u − p_f‖²`, unnormalized by degree.
/// Friends are bridge users adjacent in the social graph, indexed by their
/// information-domain user.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialRegularizer {
    pub beta: f64,
    pub friends: Vec<Vec<(usize, f64)>>,
}

impl SocialRegularizer {
    /// With `use_attributes` false every similarity is 1.
    pub fn new(data: &Dataset, beta: f64, use_attributes: bool) -> Self {
        let mut friends = vec![Vec::new(); data.num_users()];
        for &(s, u) in data.social.bridge_pairs() {
            for &(nb, _) in data.social.neighbors(s) {
                if let Some(f) = data.social.bridge_of(nb) {
                    let sim = if use_attributes {
                        attribute_similarity(data.attributes.user(u), data.attributes.user(f))
                    } else {
                        1.0
                    };
                    friends[u].push((f, sim));
                }
            }
        }
        Self { beta, friends }
    }

    pub fn penalty(&self, model: &FactorModel, user: usize) -> f64 {
        self.beta
            * self.friends[user]
                .iter()
                .map(|&(f, sim)| {
                    let d: f64 = model
                        .user_emb
                        .row(user)
                        .iter()
                        .zip(model.user_emb.row(f))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    sim * d
                })
                .sum::<f64>()
    }
}

/// MF trained with the pairwise loss, optionally with a social regularizer (SR).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorRanker {
    pub model: FactorModel,
    pub regularizer: Option<SocialRegularizer>,
}

impl PairwiseRanker for FactorRanker {
    fn score(&self, _data: &Dataset, user: usize, item: usize) -> f64 {
        self.model.score(user, item)
    }

    fn train_batch(&mut self, _data: &Dataset, batch: &[Triplet], lr: f64) -> Result<f64> {
        let m = &self.model;
        let k = m.user_emb.cols();
        let scale = 1.0 / batch.len() as f64;
        let mut gu: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut gi: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut loss = 0.0;
        for t in batch {
            let (pu, qi, qj) = (
                m.user_emb.row(t.user),
                m.item_emb.row(t.positive),
                m.item_emb.row(t.negative),
            );
            let (yi, yj) = (dot(pu, qi), dot(pu, qj));
            loss += triplet_loss(yi, yj);
            let g = triplet_loss_grad(yi, yj) * scale;
            add_into(&mut gu, t.user, k, |d| g * (qi[d] - qj[d]));
            add_into(&mut gi, t.positive, k, |d| g * pu[d]);
            add_into(&mut gi, t.negative, k, |d| -g * pu[d]);
            if let Some(reg) = &self.regularizer {
                if reg.beta != 0.0 {
                    loss += reg.penalty(m, t.user);
                    for &(f, sim) in &reg.friends[t.user] {
                        let pf = m.user_emb.row(f);
                        let c = 2.0 * reg.beta * sim * scale;
                        add_into(&mut gu, t.user, k, |d| c * (pu[d] - pf[d]));
                        add_into(&mut gu, f, k, |d| -c * (pu[d] - pf[d]));
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(numeric_failure(batch, "non-finite loss"));
        }
        if lr > 0.0 {
            let m = &mut self.model;
            for (&r, g) in &gu {
                adagrad(m.user_emb.row_mut(r), m.user_acc.row_mut(r), g, lr);
            }
            for (&r, g) in &gi {
                adagrad(m.item_emb.row_mut(r), m.item_acc.row_mut(r), g, lr);
            }
        }
        Ok(loss)
    }
}

/// Social-regularized MF. `beta = 0` follows exactly the MF trajectory.
pub fn sr_train(
    data: &Dataset,
    split: &SplitSpec,
    config: &BaselineConfig,
    beta: f64,
    use_attributes: bool,
) -> Result<Fitted<FactorModel>> {
    config.hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.hp.seed);
    let model = FactorModel::init(data.num_users(), data.num_items(), &config.hp, &mut rng);
    let regularizer = (beta != 0.0).then(|| SocialRegularizer::new(data, beta, use_attributes));
    let fitted = fit_ranker(
        FactorRanker { model, regularizer },
        data,
        split,
        config,
        &mut rng,
    )?;
    Ok(Fitted {
        model: fitted.model.model,
        history: fitted.history,
        best_epoch: fitted.best_epoch,
    })
}

pub fn mf_train(data: &Dataset, split: &SplitSpec, config: &BaselineConfig) -> Result<Fitted<FactorModel>> {
    sr_train(data, split, config, 0.0, false)
}

/// Feature index layout of the factorization machine:
/// `[user IDs | item IDs | user attributes | item attributes | social friend IDs]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub num_users: usize,
    pub num_items: usize,
    pub num_attributes: usize,
    pub num_social_users: usize,
    pub use_attributes: bool,
    pub use_friends: bool,
}

impl FeatureLayout {
    pub fn for_data(data: &Dataset, use_attributes: bool, use_friends: bool) -> Self {
        Self {
            num_users: data.num_users(),
            num_items: data.num_items(),
            num_attributes: data.attributes.num_attributes(),
            num_social_users: data.social.num_users(),
            use_attributes,
            use_friends,
        }
    }

    pub fn num_features(&self) -> usize {
        self.num_users + self.num_items + 2 * self.num_attributes + self.num_social_users
    }

    fn item_base(&self) -> usize {
        self.num_users
    }

    fn user_attr_base(&self) -> usize {
        self.num_users + self.num_items
    }

    fn item_attr_base(&self) -> usize {
        self.user_attr_base() + self.num_attributes
    }

    fn friend_base(&self) -> usize {
        self.item_attr_base() + self.num_attributes
    }

    /// User-side features: one-hot ID, attributes at `1/V_u`, and for bridge
    /// users their social friends at `1/|friends|`.
    pub fn user_features(&self, data: &Dataset, user: usize, bridge_social: Option<usize>) -> Vec<(usize, f64)> {
        let mut f = vec![(user, 1.0)];
        if self.use_attributes {
            let attrs = data.attributes.user(user);
            let v = 1.0 / attrs.len().max(1) as f64;
            f.extend(attrs.iter().map(|&a| (self.user_attr_base() + a, v)));
        }
        if self.use_friends {
            if let Some(s) = bridge_social {
                let nb = data.social.neighbors(s);
                let v = 1.0 / nb.len().max(1) as f64;
                f.extend(nb.iter().map(|&(n, _)| (self.friend_base() + n, v)));
            }
        }
        f
    }

    pub fn item_features(&self, data: &Dataset, item: usize) -> Vec<(usize, f64)> {
        let mut f = vec![(self.item_base() + item, 1.0)];
        if self.use_attributes {
            let attrs = data.attributes.item(item);
            let v = 1.0 / attrs.len().max(1) as f64;
            f.extend(attrs.iter().map(|&a| (self.item_attr_base() + a, v)));
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmParameters {
    pub global_bias: f64,
    pub linear: Vec<f64>,
    pub factors: Matrix,
    linear_acc: Vec<f64>,
    factor_acc: Matrix,
}

impl FmParameters {
    pub fn zeros(num_features: usize, k: usize) -> Self {
        Self {
            global_bias: 0.0,
            linear: vec![0.0; num_features],
            factors: Matrix::zeros(num_features, k),
            linear_acc: vec![0.0; num_features],
            factor_acc: Matrix::zeros(num_features, k),
        }
    }

    pub fn init<R: Rng + ?Sized>(num_features: usize, hp: &HyperParams, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, hp.init_std).expect("init std is validated positive");
        let mut p = Self::zeros(num_features, hp.embedding_size);
        p.factors = Matrix::from_fn(num_features, hp.embedding_size, |_, _| normal.sample(&mut *rng));
        p
    }

    pub fn num_features(&self) -> usize {
        self.linear.len()
    }
}

fn check_features(fm: &FmParameters, features: &[(usize, f64)]) -> Result<()> {
    let mut seen = HashSet::with_capacity(features.len());
    for &(f, _) in features {
        if f >= fm.num_features() {
            return Err(Error::UnknownFeature(f));
        }
        if !seen.insert(f) {
            return Err(Error::InvalidConfig(format!("duplicate feature {f}")));
        }
    }
    Ok(())
}

/// `w0 + Σ w_f x_f + Σ_{f<f'} ⟨v_f, v_f'⟩ x_f x_f'` with the pairwise term computed
/// as `½ Σ_d [(Σ_f v_fd x_f)² − Σ_f v_fd² x_f²]`.
pub fn sfm_predict(fm: &FmParameters, features: &[(usize, f64)]) -> Result<f64> {
    check_features(fm, features)?;
    Ok(fm_score(fm, features).0)
}

/// Score and per-dimension sums `Σ_f v_fd x_f`.
fn fm_score(fm: &FmParameters, features: &[(usize, f64)]) -> (f64, Vec<f64>) {
    let k = fm.factors.cols();
    let mut linear = fm.global_bias;
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for &(f, x) in features {
        linear += fm.linear[f] * x;
        for (d, &v) in fm.factors.row(f).iter().enumerate() {
            sum[d] += v * x;
            sq[d] += v * v * x * x;
        }
    }
    let pair: f64 = sum.iter().zip(&sq).map(|(s, q)| 0.5 * (s * s - q)).sum();
    (linear + pair, sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmRanker {
    pub fm: FmParameters,
    pub layout: FeatureLayout,
    user_features: Vec<Vec<(usize, f64)>>,
    item_features: Vec<Vec<(usize, f64)>>,
}

impl FmRanker {
    pub fn new(fm: FmParameters, layout: FeatureLayout, data: &Dataset) -> Self {
        let mut bridge_social = vec![None; data.num_users()];
        for &(s, u) in data.social.bridge_pairs() {
            bridge_social[u] = Some(s);
        }
        let user_features = (0..data.num_users())
            .map(|u| layout.user_features(data, u, bridge_social[u]))
            .collect();
        let item_features = (0..data.num_items())
            .map(|i| layout.item_features(data, i))
            .collect();
        Self {
            fm,
            layout,
            user_features,
            item_features,
        }
    }

    pub fn features(&self, user: usize, item: usize) -> Vec<(usize, f64)> {
        let mut f = self.user_features[user].clone();
        f.extend_from_slice(&self.item_features[item]);
        f
    }

    /// Score from the precomputed feature lists alone.
    pub fn score_features(&self, user: usize, item: usize) -> f64 {
        fm_score(&self.fm, &self.features(user, item)).0
    }

    fn accumulate(
        &self,
        features: &[(usize, f64)],
        sum: &[f64],
        g: f64,
        lin: &mut BTreeMap<usize, f64>,
        fac: &mut BTreeMap<usize, Vec<f64>>,
    ) {
        let k = sum.len();
        for &(f, x) in features {
            *lin.entry(f).or_insert(0.0) += g * x;
            let v = self.fm.factors.row(f);
            add_into(fac, f, k, |d| g * x * (sum[d] - v[d] * x));
        }
    }
}

impl PairwiseRanker for FmRanker {
    fn score(&self, _data: &Dataset, user: usize, item: usize) -> f64 {
        self.score_features(user, item)
    }

    fn train_batch(&mut self, _data: &Dataset, batch: &[Triplet], lr: f64) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut lin: BTreeMap<usize, f64> = BTreeMap::new();
        let mut fac: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut loss = 0.0;
        for t in batch {
            let fi = self.features(t.user, t.positive);
            let fj = self.features(t.user, t.negative);
            let (yi, si) = fm_score(&self.fm, &fi);
            let (yj, sj) = fm_score(&self.fm, &fj);
            loss += triplet_loss(yi, yj);
            let g = triplet_loss_grad(yi, yj) * scale;
            self.accumulate(&fi, &si, g, &mut lin, &mut fac);
            self.accumulate(&fj, &sj, -g, &mut lin, &mut fac);
        }
        if !loss.is_finite() {
            return Err(numeric_failure(batch, "non-finite loss"));
        }
        if lr > 0.0 {
            let fm = &mut self.fm;
            for (&f, &g) in &lin {
                adagrad(
                    std::slice::from_mut(&mut fm.linear[f]),
                    std::slice::from_mut(&mut fm.linear_acc[f]),
                    &[g],
                    lr,
                );
            }
            for (&f, g) in &fac {
                adagrad(fm.factors.row_mut(f), fm.factor_acc.row_mut(f), g, lr);
            }
        }
        Ok(loss)
    }
}

/// Social-aware FM; `use_attributes = false` gives the attribute-ablated variant.
pub fn sfm_train(
    data: &Dataset,
    split: &SplitSpec,
    config: &BaselineConfig,
    use_attributes: bool,
) -> Result<Fitted<FmRanker>> {
    config.hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.hp.seed);
    let layout = FeatureLayout::for_data(data, use_attributes, true);
    let fm = FmParameters::init(layout.num_features(), &config.hp, &mut rng);
    let ranker = FmRanker::new(fm, layout, data);
    fit_ranker(ranker, data, split, config, &mut rng)
}

//! The outer training loop: information-domain epochs, hand-off of bridge
//! users' embeddings to the social graph, propagation, and write-back.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{AttributeCatalog, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate_holdout, evaluate_targets, EvalReport, Holdout, Target};
use crate::linalg::Matrix;
use crate::pooling::{forward_pooled, predict, HyperParams, Mode, ModelParameters};
use crate::propagation::{propagate, social_objective, PropagationProblem, Solver};
use crate::trainer::train_epoch;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub outer_iterations: usize,
    pub inner_epochs: usize,
    /// Outer iterations without validation improvement before stopping.
    pub patience: usize,
    pub hp: HyperParams,
    /// Disable to keep social embeddings at their initial values.
    pub propagate: bool,
    pub solver: Solver,
    pub tolerance: f64,
    pub max_propagation_iterations: usize,
    /// Cutoff for the recall reported alongside validation AUC.
    pub recall_k: usize,
    pub handoff: Handoff,
}

/// Which bridge-user representation anchors the social propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handoff {
    /// Pooled user vector `p_u`; matches the input of the merge layer.
    Pooled,
    /// Raw ID-embedding row `u`.
    IdEmbedding,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 50,
            inner_epochs: 1,
            patience: 5,
            hp: HyperParams::default(),
            propagate: true,
            solver: Solver::FixedPoint,
            tolerance: 1e-8,
            max_propagation_iterations: 500,
            recall_k: 5,
            handoff: Handoff::Pooled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.outer_iterations == 0 {
            return Err(Error::InvalidConfig("outer iterations must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        if self.recall_k == 0 {
            return Err(Error::InvalidConfig("recall K must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean triplet loss over the iteration's epochs (0 when none ran).
    pub loss: f64,
    pub smoothness: f64,
    pub fitting: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParameters,
    /// Social-user embeddings, one row per social user.
    pub social: Matrix,
    pub history: Vec<IterationRecord>,
    /// 1-based iteration of the returned snapshot.
    pub best_iteration: usize,
}

impl FitResult {
    pub fn best_val_auc(&self) -> f64 {
        self.history[self.best_iteration - 1].val_auc
    }
}

/// Line-oriented history: `iteration loss_i smoothness fitting val_auc`.
pub fn history_tsv(history: &[IterationRecord]) -> String {
    let mut s = String::from("iteration\tloss_i\tsmoothness\tfitting\tval_auc\n");
    for r in history {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.iteration, r.loss, r.smoothness, r.fitting, r.val_auc
        );
    }
    s
}

/// Initial social embeddings: bridge rows copy their information-domain
/// representation, the rest are drawn like any other embedding.
fn initial_social<R: Rng + ?Sized>(
    data: &Dataset,
    params: &ModelParameters,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Matrix> {
    let k = params.embedding_size();
    let normal = Normal::new(0.0, config.hp.init_std).expect("init std is validated positive");
    let p = Matrix::from_fn(data.social.num_users(), k, |_, _| normal.sample(&mut *rng));
    build_anchors(data, params, &p, config.handoff)
}

/// Anchors for propagation: bridge rows take the user's current
/// information-domain representation, other rows keep their previous social
/// embedding.
pub fn build_anchors(
    data: &Dataset,
    params: &ModelParameters,
    social: &Matrix,
    handoff: Handoff,
) -> Result<Matrix> {
    let mut p0 = social.clone();
    for &(s, u) in data.social.bridge_pairs() {
        match handoff {
            Handoff::IdEmbedding => p0.row_mut(s).copy_from_slice(params.user_emb.row(u)),
            Handoff::Pooled => {
                let p = params.pool_user(&data.attributes, u)?;
                p0.row_mut(s).copy_from_slice(&p);
            }
        }
    }
    Ok(p0)
}

/// Ridge weight of the write-back projection for users with attributes.
pub const WRITE_BACK_RIDGE: f64 = 1e-2;

/// Feeds bridge users' propagated rows back into the ID-embedding table.
///
/// Without attributes the pooled vector is the ID row itself and is copied.
/// With attributes `p = u⊙a + c` (`a = Σg`, `c` the attribute-pair term), and
/// the row is set to `argmin_u ‖u⊙a + c − target‖² + λ‖u − u_old‖²`.
pub fn write_back(
    data: &Dataset,
    params: &mut ModelParameters,
    social: &Matrix,
    handoff: Handoff,
) {
    for &(s, u) in data.social.bridge_pairs() {
        let target = social.row(s);
        let attrs = data.attributes.user(u);
        if handoff == Handoff::IdEmbedding || attrs.is_empty() {
            params.user_emb.row_mut(u).copy_from_slice(target);
            continue;
        }
        let k = params.embedding_size();
        let mut a = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for &t in attrs {
            for (d, &g) in params.attr_emb.row(t).iter().enumerate() {
                a[d] += g;
                sq[d] += g * g;
            }
        }
        let pair: Vec<f64> = (0..k).map(|d| 0.5 * (a[d] * a[d] - sq[d])).collect();
        let row = params.user_emb.row_mut(u);
        for d in 0..k {
            row[d] = (a[d] * (target[d] - pair[d]) + WRITE_BACK_RIDGE * row[d])
                / (a[d] * a[d] + WRITE_BACK_RIDGE);
        }
    }
}

/// One propagation round. Returns the new social matrix and the objective terms.
pub fn propagation_round(
    data: &Dataset,
    params: &mut ModelParameters,
    social: &Matrix,
    config: &TrainConfig,
) -> Result<(Matrix, f64, f64)> {
    let anchors = build_anchors(data, params, social, config.handoff)?;
    let problem = PropagationProblem::new(&data.social, &anchors, config.hp.tradeoff)
        .with_solver(config.solver)
        .with_tolerance(config.tolerance)
        .with_max_iterations(config.max_propagation_iterations);
    let out = propagate(&problem)?.embeddings;
    write_back(data, params, &out, config.handoff);
    let bridge: Vec<usize> = data.social.bridge_pairs().iter().map(|&(s, _)| s).collect();
    let obj = social_objective(&data.social, &out, &anchors, &bridge);
    Ok((out, obj.smoothness, obj.fitting))
}

/// Alternating optimization with early stopping on bridge-user validation AUC.
pub fn fit(data: &Dataset, split: &SplitSpec, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if data.social.bridge_pairs().is_empty() {
        return Err(Error::InvalidConfig("training needs at least one bridge user".into()));
    }
    let hp = &config.hp;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut params = ModelParameters::init(
        data.num_users(),
        data.num_items(),
        data.attributes.num_attributes(),
        hp,
        &mut rng,
    );
    let mut social = initial_social(data, &params, config, &mut rng)?;
    let bridge: Vec<usize> = data.social.bridge_pairs().iter().map(|&(s, _)| s).collect();

    let mut history = Vec::with_capacity(config.outer_iterations);
    let mut best: Option<(f64, usize, ModelParameters, Matrix)> = None;
    let mut since_best = 0;
    for iteration in 1..=config.outer_iterations {
        let mut loss = 0.0;
        for _ in 0..config.inner_epochs {
            loss += train_epoch(&mut params, data, split, hp, &mut rng)?;
        }
        if config.inner_epochs > 0 {
            loss /= config.inner_epochs as f64;
        }
        let (smoothness, fitting) = if config.propagate {
            let (next, s, f) = propagation_round(data, &mut params, &social, config)?;
            social = next;
            (s, f)
        } else {
            let anchors = build_anchors(data, &params, &social, config.handoff)?;
            let o = social_objective(&data.social, &social, &anchors, &bridge);
            (o.smoothness, o.fitting)
        };
        let val = validation_report(&params, data, split, config.recall_k)?;
        history.push(IterationRecord {
            iteration,
            loss,
            smoothness,
            fitting,
            val_auc: val.mean_auc,
        });
        let improved = best.as_ref().is_none_or(|b| val.mean_auc > b.0);
        if improved {
            best = Some((val.mean_auc, iteration, params.clone(), social.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, best_iteration, params, social) = best.expect("at least one iteration ran");
    Ok(FitResult {
        params,
        social,
        history,
        best_iteration,
    })
}

fn validation_report(
    params: &ModelParameters,
    data: &Dataset,
    split: &SplitSpec,
    k: usize,
) -> Result<EvalReport> {
    evaluate_holdout(
        |u, i| predict(params, u, i, &data.attributes),
        data,
        split,
        k,
        Holdout::Validation,
    )
}

/// Score of a social user for an item: the user's social row is merged with
/// the item's pooled vector and passed through the shared hidden stack.
pub fn predict_social(
    params: &ModelParameters,
    social: &Matrix,
    social_user: usize,
    item: usize,
    catalog: &AttributeCatalog,
) -> Result<f64> {
    if social_user >= social.rows() {
        return Err(Error::IndexOutOfRange {
            kind: "social user",
            index: social_user,
            len: social.rows(),
        });
    }
    let q = params.pool_item(catalog, item)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let trace = forward_pooled(
        params,
        social_user,
        item,
        social.row(social_user).to_vec(),
        q,
        Mode::Eval,
        &mut rng,
    )?;
    Ok(trace.prediction)
}

/// Held-out preferences of non-bridge social users, from synthetic ground truth.
pub fn social_targets(data: &Dataset) -> Vec<Target> {
    let Some(truth) = &data.truth else {
        return Vec::new();
    };
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); data.social.num_users()];
    for &(s, i) in &truth.social_preferences {
        if !data.social.is_bridge(s) {
            by_user[s].push(i);
        }
    }
    by_user
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(user, mut positives)| {
            positives.sort_unstable();
            Target { user, positives }
        })
        .collect()
}

/// Evaluates social-user predictions against held-out synthetic preferences.
pub fn evaluate_social(
    params: &ModelParameters,
    social: &Matrix,
    data: &Dataset,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let targets = social_targets(data);
    evaluate_targets(
        &targets,
        data.num_items(),
        k,
        seed,
        |_, _| false,
        |s, i| predict_social(params, social, s, i, &data.attributes),
    )
}

//! Information-domain training: triplet sampling, the squared pairwise
//! ranking loss and mini-batch Adagrad epochs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, InteractionTable, SplitSpec};
use crate::error::{Error, Result};
use crate::pooling::{adagrad_step, backward_into, forward, GradientSet, HyperParams, Mode, ModelParameters};

/// Rejection-sampling attempts before falling back to an explicit scan.
const REJECTION_TRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Draws an item the user never interacted with (in any partition), uniformly.
pub fn sample_negative<R: Rng + ?Sized>(
    table: &InteractionTable,
    user: usize,
    rng: &mut R,
) -> Result<usize> {
    let n = table.num_items();
    let seen = table.items_of(user).len();
    if seen >= n {
        return Err(Error::ExhaustedNegatives(user));
    }
    for _ in 0..REJECTION_TRIES {
        let j = rng.random_range(0..n);
        if !table.contains(user, j) {
            return Ok(j);
        }
    }
    let candidates: Vec<usize> = (0..n).filter(|&j| !table.contains(user, j)).collect();
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// `batch_size` training pairs drawn uniformly with replacement, each with one
/// uniformly drawn negative.
pub fn sample_batch<R: Rng + ?Sized>(
    table: &InteractionTable,
    split: &SplitSpec,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    if split.train_pairs.is_empty() {
        return Err(Error::InvalidConfig("no training interactions".into()));
    }
    (0..batch_size)
        .map(|_| {
            let (user, positive) = split.train_pairs[rng.random_range(0..split.train_pairs.len())];
            let negative = sample_negative(table, user, rng)?;
            Ok(Triplet {
                user,
                positive,
                negative,
            })
        })
        .collect()
}

/// Every training pair once, shuffled, each with a freshly drawn negative,
/// chunked into mini-batches.
pub fn epoch_batches<R: Rng + ?Sized>(
    table: &InteractionTable,
    split: &SplitSpec,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Triplet>>> {
    if batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut pairs = split.train_pairs.clone();
    pairs.shuffle(rng);
    let triplets = pairs
        .into_iter()
        .map(|(user, positive)| {
            Ok(Triplet {
                user,
                positive,
                negative: sample_negative(table, user, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(triplets.chunks(batch_size).map(<[Triplet]>::to_vec).collect())
}

/// Squared pairwise regression loss `(ŷ_ui − ŷ_uj − 1)²`.
#[inline]
pub fn triplet_loss(pos_score: f64, neg_score: f64) -> f64 {
    let r = pos_score - neg_score - 1.0;
    r * r
}

/// `∂loss/∂ŷ_ui`; the derivative with respect to `ŷ_uj` is its negation.
#[inline]
pub fn triplet_loss_grad(pos_score: f64, neg_score: f64) -> f64 {
    2.0 * (pos_score - neg_score - 1.0)
}

pub(crate) fn numeric_failure(batch: &[Triplet], what: &str) -> Error {
    let dump: Vec<String> = batch
        .iter()
        .map(|t| format!("({},{},{})", t.user, t.positive, t.negative))
        .collect();
    Error::NumericFailure(format!("{what}; batch (user,pos,neg) = [{}]", dump.join(" ")))
}

/// Applies one mini-batch: mean gradient over its triplets, one Adagrad step.
/// Returns the summed loss of the batch measured before the update.
pub fn train_batch<R: Rng + ?Sized>(
    params: &mut ModelParameters,
    data: &Dataset,
    batch: &[Triplet],
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let mode = Mode::Train {
        dropout: hp.dropout,
    };
    let catalog = &data.attributes;
    let mut grads = GradientSet::zeros_like(params);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let pos = forward(params, t.user, t.positive, catalog, mode, rng)?;
        let neg = forward(params, t.user, t.negative, catalog, mode, rng)?;
        loss += triplet_loss(pos.prediction, neg.prediction);
        let g = triplet_loss_grad(pos.prediction, neg.prediction) * scale;
        backward_into(&pos, params, catalog, g, &mut grads)?;
        backward_into(&neg, params, catalog, -g, &mut grads)?;
    }
    if !loss.is_finite() {
        return Err(numeric_failure(batch, "non-finite loss"));
    }
    if !grads.is_finite() {
        return Err(numeric_failure(batch, "non-finite gradient"));
    }
    if hp.learning_rate > 0.0 {
        adagrad_step(params, &grads, hp.learning_rate);
    }
    Ok(loss)
}

/// One pass over the training pairs. Returns the mean triplet loss.
pub fn train_epoch<R: Rng + ?Sized>(
    params: &mut ModelParameters,
    data: &Dataset,
    split: &SplitSpec,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let batches = epoch_batches(&data.interactions, split, hp.batch_size, rng)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in &batches {
        total += train_batch(params, data, batch, hp, rng)?;
        count += batch.len();
    }
    if !params.is_finite() {
        return Err(Error::NumericFailure("parameters became non-finite".into()));
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

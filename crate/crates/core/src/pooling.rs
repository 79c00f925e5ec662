//! Attribute-aware deep collaborative filtering network.
//!
//! Each side (user, item) is pooled from its ID embedding and attribute
//! embeddings with pairwise pooling, the two pooled vectors are merged by
//! element-wise product, passed through a stack of equal-width ReLU layers and
//! reduced to a scalar score by a prediction weight vector.
//!
//! Gradients are computed by hand in [`backward`]; [`adagrad_step`] applies
//! them sparsely to embedding rows and densely to layer weights.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::AttributeCatalog;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const ADAGRAD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub embedding_size: usize,
    pub num_hidden_layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Fitting weight `μ` of the social objective.
    pub tradeoff: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            embedding_size: 16,
            num_hidden_layers: 2,
            dropout: 0.2,
            learning_rate: 0.1,
            batch_size: 256,
            tradeoff: 0.7,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.embedding_size == 0 {
            return bad("embedding size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout ratio must lie in [0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a nonnegative finite number");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.tradeoff > 0.0 && self.tradeoff.is_finite()) {
            return bad("tradeoff mu must be positive");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("init std must be positive");
        }
        Ok(())
    }
}

/// Per-tensor Adagrad accumulators, shaped like the parameters they track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub user_emb: Matrix,
    pub item_emb: Matrix,
    pub attr_emb: Matrix,
    pub hidden_weights: Vec<Matrix>,
    pub hidden_biases: Vec<Vec<f64>>,
    pub pred_weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub user_emb: Matrix,
    pub item_emb: Matrix,
    /// Shared by user-side and item-side attributes.
    pub attr_emb: Matrix,
    /// `K × K` each.
    pub hidden_weights: Vec<Matrix>,
    pub hidden_biases: Vec<Vec<f64>>,
    pub pred_weight: Vec<f64>,
    pub adagrad_acc: Accumulators,
}

impl ModelParameters {
    /// Every tensor drawn from `N(0, init_std²)`; accumulators start at zero.
    pub fn init<R: Rng + ?Sized>(
        num_users: usize,
        num_items: usize,
        num_attributes: usize,
        hp: &HyperParams,
        rng: &mut R,
    ) -> Self {
        let k = hp.embedding_size;
        let normal = Normal::new(0.0, hp.init_std).expect("init std is validated positive");
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| normal.sample(&mut *rng))
        };
        let user_emb = draw(num_users, k);
        let item_emb = draw(num_items, k);
        let attr_emb = draw(num_attributes, k);
        let mut hidden_weights = Vec::with_capacity(hp.num_hidden_layers);
        let mut hidden_biases = Vec::with_capacity(hp.num_hidden_layers);
        for _ in 0..hp.num_hidden_layers {
            hidden_weights.push(draw(k, k));
            hidden_biases.push(draw(1, k).as_slice().to_vec());
        }
        let pred_weight = draw(1, k).as_slice().to_vec();
        let adagrad_acc = Accumulators {
            user_emb: Matrix::zeros(num_users, k),
            item_emb: Matrix::zeros(num_items, k),
            attr_emb: Matrix::zeros(num_attributes, k),
            hidden_weights: (0..hp.num_hidden_layers).map(|_| Matrix::zeros(k, k)).collect(),
            hidden_biases: vec![vec![0.0; k]; hp.num_hidden_layers],
            pred_weight: vec![0.0; k],
        };
        Self {
            user_emb,
            item_emb,
            attr_emb,
            hidden_weights,
            hidden_biases,
            pred_weight,
            adagrad_acc,
        }
    }

    pub fn embedding_size(&self) -> usize {
        self.pred_weight.len()
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.hidden_weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.user_emb.is_finite()
            && self.item_emb.is_finite()
            && self.attr_emb.is_finite()
            && self.hidden_weights.iter().all(Matrix::is_finite)
            && self
                .hidden_biases
                .iter()
                .chain(std::iter::once(&self.pred_weight))
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Pooled user representation `p_u` (no dropout).
    pub fn pool_user(&self, catalog: &AttributeCatalog, user: usize) -> Result<Vec<f64>> {
        check_index("user", user, self.user_emb.rows())?;
        let attrs = gather(&self.attr_emb, catalog.user(user))?;
        pairwise_pool(self.user_emb.row(user), &attrs)
    }

    /// Pooled item representation `q_i` (no dropout).
    pub fn pool_item(&self, catalog: &AttributeCatalog, item: usize) -> Result<Vec<f64>> {
        check_index("item", item, self.item_emb.rows())?;
        let attrs = gather(&self.attr_emb, catalog.item(item))?;
        pairwise_pool(self.item_emb.row(item), &attrs)
    }
}

fn check_index(kind: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        Err(Error::IndexOutOfRange { kind, index, len })
    } else {
        Ok(())
    }
}

fn gather<'a>(table: &'a Matrix, rows: &[usize]) -> Result<Vec<&'a [f64]>> {
    rows.iter()
        .map(|&a| {
            check_index("attribute", a, table.rows())?;
            Ok(table.row(a))
        })
        .collect()
}

/// Pairwise pooling of an ID embedding with its attribute embeddings:
/// `Σ_t id⊙g_t + Σ_{t<t'} g_t⊙g_t'`, evaluated in `O(K·V)` as
/// `½[(id + Σg)² − id² − Σg²]`. With no attributes the ID embedding is returned.
pub fn pairwise_pool(id_vec: &[f64], attr_vecs: &[&[f64]]) -> Result<Vec<f64>> {
    let k = id_vec.len();
    for g in attr_vecs {
        if g.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: g.len(),
            });
        }
    }
    if attr_vecs.is_empty() {
        return Ok(id_vec.to_vec());
    }
    let mut sum = id_vec.to_vec();
    let mut sq: Vec<f64> = id_vec.iter().map(|x| x * x).collect();
    for g in attr_vecs {
        for d in 0..k {
            sum[d] += g[d];
            sq[d] += g[d] * g[d];
        }
    }
    Ok(sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| 0.5 * (s * s - q))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout: f64 },
    Eval,
}

/// Intermediate values of one forward pass, kept for [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub user: usize,
    pub item: usize,
    pub pooled_user: Vec<f64>,
    pub pooled_item: Vec<f64>,
    /// Inverted-dropout multipliers (`0` or `1/(1-ρ)`); `None` when no dropout ran.
    pub user_mask: Option<Vec<f64>>,
    pub item_mask: Option<Vec<f64>>,
    pub merged: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    /// Post-ReLU, post-dropout hidden outputs `e_1..e_L`.
    pub hidden: Vec<Vec<f64>>,
    pub hidden_masks: Vec<Option<Vec<f64>>>,
    pub prediction: f64,
}

impl ForwardTrace {
    /// Input to the prediction layer: `e_L`, or the merged vector when `L = 0`.
    pub fn last_layer(&self) -> &[f64] {
        self.hidden.last().unwrap_or(&self.merged)
    }
}

fn dropout_mask<R: Rng + ?Sized>(k: usize, ratio: f64, rng: &mut R) -> Option<Vec<f64>> {
    if ratio <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - ratio);
    Some(
        (0..k)
            .map(|_| if rng.random::<f64>() < ratio { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(v: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

/// Runs the network for `(user, item)`.
pub fn forward<R: Rng + ?Sized>(
    params: &ModelParameters,
    user: usize,
    item: usize,
    catalog: &AttributeCatalog,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace> {
    let p = params.pool_user(catalog, user)?;
    let q = params.pool_item(catalog, item)?;
    forward_pooled(params, user, item, p, q, mode, rng)
}

/// Forward pass from already pooled user and item vectors.
pub fn forward_pooled<R: Rng + ?Sized>(
    params: &ModelParameters,
    user: usize,
    item: usize,
    pooled_user: Vec<f64>,
    pooled_item: Vec<f64>,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace> {
    let k = params.embedding_size();
    for v in [&pooled_user, &pooled_item] {
        if v.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: v.len(),
            });
        }
    }
    let ratio = match mode {
        Mode::Train { dropout } => dropout,
        Mode::Eval => 0.0,
    };
    let user_mask = dropout_mask(k, ratio, rng);
    let item_mask = dropout_mask(k, ratio, rng);
    let pu = apply_mask(&pooled_user, &user_mask);
    let qi = apply_mask(&pooled_item, &item_mask);
    let merged: Vec<f64> = pu.iter().zip(&qi).map(|(a, b)| a * b).collect();

    let layers = params.num_hidden_layers();
    let mut pre_activations = Vec::with_capacity(layers);
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(layers);
    let mut hidden_masks = Vec::with_capacity(layers);
    for l in 0..layers {
        let input = hidden.last().unwrap_or(&merged);
        let mut z = vec![0.0; k];
        params.hidden_weights[l].matvec(input, &mut z);
        for (zi, bi) in z.iter_mut().zip(&params.hidden_biases[l]) {
            *zi += bi;
        }
        let act: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        let mask = dropout_mask(k, ratio, rng);
        let out = apply_mask(&act, &mask);
        pre_activations.push(z);
        hidden.push(out);
        hidden_masks.push(mask);
    }
    let last = hidden.last().unwrap_or(&merged);
    let prediction = crate::linalg::dot(&params.pred_weight, last);
    Ok(ForwardTrace {
        user,
        item,
        pooled_user,
        pooled_item,
        user_mask,
        item_mask,
        merged,
        pre_activations,
        hidden,
        hidden_masks,
        prediction,
    })
}

/// Eval-mode score for `(user, item)`.
pub fn predict(
    params: &ModelParameters,
    user: usize,
    item: usize,
    catalog: &AttributeCatalog,
) -> Result<f64> {
    // Eval mode draws no random numbers.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    Ok(forward(params, user, item, catalog, Mode::Eval, &mut rng)?.prediction)
}

/// Sparse gradient: only touched embedding rows are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    pub attr_rows: BTreeMap<usize, Vec<f64>>,
    pub hidden_weights: Vec<Matrix>,
    pub hidden_biases: Vec<Vec<f64>>,
    pub pred_weight: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        let k = params.embedding_size();
        let l = params.num_hidden_layers();
        Self {
            user_rows: BTreeMap::new(),
            item_rows: BTreeMap::new(),
            attr_rows: BTreeMap::new(),
            hidden_weights: (0..l).map(|_| Matrix::zeros(k, k)).collect(),
            hidden_biases: vec![vec![0.0; k]; l],
            pred_weight: vec![0.0; k],
        }
    }

    pub fn is_finite(&self) -> bool {
        let rows_ok = |m: &BTreeMap<usize, Vec<f64>>| {
            m.values().all(|r| r.iter().all(|x| x.is_finite()))
        };
        rows_ok(&self.user_rows)
            && rows_ok(&self.item_rows)
            && rows_ok(&self.attr_rows)
            && self.hidden_weights.iter().all(Matrix::is_finite)
            && self
                .hidden_biases
                .iter()
                .chain(std::iter::once(&self.pred_weight))
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn add_row(map: &mut BTreeMap<usize, Vec<f64>>, row: usize, delta: &[f64]) {
    let entry = map.entry(row).or_insert_with(|| vec![0.0; delta.len()]);
    for (e, d) in entry.iter_mut().zip(delta) {
        *e += d;
    }
}

fn check_trace(trace: &ForwardTrace, params: &ModelParameters) -> Result<()> {
    let k = params.embedding_size();
    let l = params.num_hidden_layers();
    let mismatch = |m: String| Err(Error::TraceMismatch(m));
    if trace.merged.len() != k || trace.pooled_user.len() != k || trace.pooled_item.len() != k {
        return mismatch(format!("vector width differs from K = {k}"));
    }
    if trace.hidden.len() != l || trace.pre_activations.len() != l || trace.hidden_masks.len() != l
    {
        return mismatch(format!(
            "trace has {} hidden layers, parameters have {l}",
            trace.hidden.len()
        ));
    }
    if trace.user >= params.user_emb.rows() || trace.item >= params.item_emb.rows() {
        return mismatch("trace indices exceed embedding tables".into());
    }
    Ok(())
}

/// Gradient of `upstream_grad · ŷ` with respect to every parameter the trace touched.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParameters,
    catalog: &AttributeCatalog,
    upstream_grad: f64,
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_into(trace, params, catalog, upstream_grad, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into an existing gradient set.
pub fn backward_into(
    trace: &ForwardTrace,
    params: &ModelParameters,
    catalog: &AttributeCatalog,
    upstream_grad: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    check_trace(trace, params)?;
    let layers = params.num_hidden_layers();

    // ŷ = w · e_L
    for (g, e) in grads.pred_weight.iter_mut().zip(trace.last_layer()) {
        *g += upstream_grad * e;
    }
    let mut delta: Vec<f64> = params
        .pred_weight
        .iter()
        .map(|w| upstream_grad * w)
        .collect();

    for l in (0..layers).rev() {
        let z = &trace.pre_activations[l];
        let mask = &trace.hidden_masks[l];
        for d in 0..delta.len() {
            let m = mask.as_ref().map_or(1.0, |m| m[d]);
            if z[d] <= 0.0 {
                delta[d] = 0.0;
            } else {
                delta[d] *= m;
            }
        }
        let input = if l == 0 {
            &trace.merged
        } else {
            &trace.hidden[l - 1]
        };
        let gw = &mut grads.hidden_weights[l];
        for (r, &dr) in delta.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            for (g, x) in gw.row_mut(r).iter_mut().zip(input) {
                *g += dr * x;
            }
        }
        for (g, d) in grads.hidden_biases[l].iter_mut().zip(&delta) {
            *g += d;
        }
        let mut next = vec![0.0; delta.len()];
        params.hidden_weights[l].matvec_t(&delta, &mut next);
        delta = next;
    }

    // merged = (p ⊙ m_p) ⊙ (q ⊙ m_q)
    let pu = apply_mask(&trace.pooled_user, &trace.user_mask);
    let qi = apply_mask(&trace.pooled_item, &trace.item_mask);
    let d_pool_user = apply_mask(
        &delta.iter().zip(&qi).map(|(d, q)| d * q).collect::<Vec<_>>(),
        &trace.user_mask,
    );
    let d_pool_item = apply_mask(
        &delta.iter().zip(&pu).map(|(d, p)| d * p).collect::<Vec<_>>(),
        &trace.item_mask,
    );

    pool_backward(
        &d_pool_user,
        params.user_emb.row(trace.user),
        catalog.user(trace.user),
        &params.attr_emb,
        trace.user,
        &mut grads.user_rows,
        &mut grads.attr_rows,
    );
    pool_backward(
        &d_pool_item,
        params.item_emb.row(trace.item),
        catalog.item(trace.item),
        &params.attr_emb,
        trace.item,
        &mut grads.item_rows,
        &mut grads.attr_rows,
    );
    Ok(())
}

/// Reverse pass through pairwise pooling. With `s = id + Σg`:
/// `∂p/∂id = s − id` and `∂p/∂g_t = s − g_t`, element-wise.
fn pool_backward(
    d_pool: &[f64],
    id_vec: &[f64],
    attrs: &[usize],
    attr_table: &Matrix,
    id_row: usize,
    id_grads: &mut BTreeMap<usize, Vec<f64>>,
    attr_grads: &mut BTreeMap<usize, Vec<f64>>,
) {
    if attrs.is_empty() {
        add_row(id_grads, id_row, d_pool);
        return;
    }
    let k = id_vec.len();
    let mut sum = id_vec.to_vec();
    for &a in attrs {
        for (s, g) in sum.iter_mut().zip(attr_table.row(a)) {
            *s += g;
        }
    }
    let d_id: Vec<f64> = (0..k).map(|d| d_pool[d] * (sum[d] - id_vec[d])).collect();
    add_row(id_grads, id_row, &d_id);
    for &a in attrs {
        let g = attr_table.row(a);
        let d_attr: Vec<f64> = (0..k).map(|d| d_pool[d] * (sum[d] - g[d])).collect();
        add_row(attr_grads, a, &d_attr);
    }
}

fn adagrad_slice(theta: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64) {
    for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        if g == 0.0 {
            continue;
        }
        *a += g * g;
        *t -= lr * g / (a.sqrt() + ADAGRAD_EPSILON);
    }
}

/// Adagrad update of every touched scalar: `acc += g²; θ −= lr·g/(√acc + ε)`.
pub fn adagrad_step(params: &mut ModelParameters, grads: &GradientSet, lr: f64) {
    let acc = &mut params.adagrad_acc;
    for (&r, g) in &grads.user_rows {
        adagrad_slice(params.user_emb.row_mut(r), acc.user_emb.row_mut(r), g, lr);
    }
    for (&r, g) in &grads.item_rows {
        adagrad_slice(params.item_emb.row_mut(r), acc.item_emb.row_mut(r), g, lr);
    }
    for (&r, g) in &grads.attr_rows {
        adagrad_slice(params.attr_emb.row_mut(r), acc.attr_emb.row_mut(r), g, lr);
    }
    for l in 0..params.hidden_weights.len() {
        adagrad_slice(
            params.hidden_weights[l].as_mut_slice(),
            acc.hidden_weights[l].as_mut_slice(),
            grads.hidden_weights[l].as_slice(),
            lr,
        );
        adagrad_slice(
            &mut params.hidden_biases[l],
            &mut acc.hidden_biases[l],
            &grads.hidden_biases[l],
            lr,
        );
    }
    adagrad_slice(&mut params.pred_weight, &mut acc.pred_weight, &grads.pred_weight, lr);
}

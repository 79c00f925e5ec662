//! Neural social collaborative ranking.
//!
//! Items from an information domain (user–item interactions plus categorical
//! attributes) are ranked for users of a social network. A pairwise-pooling
//! neural ranker learns user and item embeddings from interactions; bridge
//! users, who exist on both sides, hand their embeddings to a normalized
//! graph-Laplacian propagation that places every social user in the same space.
//!
//! - [`data`]: dataset bundle, holdout split
//! - [`pooling`]: the network, its gradients and Adagrad
//! - [`trainer`]: triplet sampling and the pairwise loss
//! - [`propagation`]: social propagation solvers
//! - [`alternating`]: the outer training loop and social prediction
//! - [`baselines`]: ItemPop, MF, SFM, SR
//! - [`eval`]: AUC, Recall@K, paired t-test
//! - [`io`], [`synth`]: files, checkpoints and synthetic data

pub mod alternating;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod pooling;
pub mod propagation;
pub mod synth;
pub mod trainer;

pub use alternating::{fit, predict_social, FitResult, IterationRecord, TrainConfig};
pub use data::{
    build_split, AttributeCatalog, Dataset, Interaction, InteractionTable, SocialGraph, SplitSpec,
    Vocabularies,
};
pub use error::{Error, Result};
pub use eval::{evaluate_model, paired_ttest, user_auc, user_recall_at_k, EvalReport};
pub use linalg::Matrix;
pub use pooling::{
    adagrad_step, backward, forward, pairwise_pool, predict, ForwardTrace, GradientSet,
    HyperParams, Mode, ModelParameters,
};
pub use propagation::{normalized_adjacency, propagate, social_objective, PropagationProblem, Solver};
pub use synth::{generate, SyntheticSpec};
pub use trainer::{sample_batch, train_epoch, triplet_loss, Triplet};

//! Holdout evaluation: per-user AUC and Recall@K with aggregate means, and a
//! paired t-test for comparing two models over the same users.

use std::collections::HashSet;
use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, SplitSpec};
use crate::error::{Error, Result};

/// Tag recorded in reports: negatives are every item the user never touched.
pub const NEGATIVES_ALL_UNOBSERVED: &str = "all-unobserved";

/// Fraction of (positive, negative) pairs ranked strictly correctly; ties count
/// as failures.
pub fn user_auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::EmptySide);
    }
    let mut neg = neg_scores.to_vec();
    neg.sort_by(f64::total_cmp);
    let correct: u64 = pos_scores
        .iter()
        .map(|&p| neg.partition_point(|&n| n < p) as u64)
        .sum();
    Ok(correct as f64 / (pos_scores.len() as u64 * neg.len() as u64) as f64)
}

/// `|relevant ∩ top-K| / |relevant|`.
pub fn user_recall_at_k(ranked_items: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("recall cutoff K must be at least 1".into()));
    }
    let hits = ranked_items
        .iter()
        .take(k)
        .filter(|i| relevant.contains(i))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Items ordered by descending score, ties broken by ascending item index.
pub fn rank_items(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub auc: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_user: Vec<UserMetrics>,
    pub mean_auc: f64,
    pub mean_recall: f64,
    pub k: usize,
    pub negative_policy: String,
    pub seed: u64,
    /// Users skipped because their positive set was empty.
    pub excluded_users: usize,
}

impl EvalReport {
    pub fn aucs(&self) -> Vec<f64> {
        self.per_user.iter().map(|m| m.auc).collect()
    }

    pub fn recalls(&self) -> Vec<f64> {
        self.per_user.iter().map(|m| m.recall).collect()
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8}  {:>8}  {:>8}", "user", "auc", format!("R@{}", self.k));
        for m in &self.per_user {
            let _ = writeln!(s, "{:>8}  {:>8.4}  {:>8.4}", m.user, m.auc, m.recall);
        }
        let _ = writeln!(
            s,
            "{:>8}  {:>8.4}  {:>8.4}",
            "mean", self.mean_auc, self.mean_recall
        );
        let _ = writeln!(
            s,
            "users={} excluded={} negatives={} seed={}",
            self.per_user.len(),
            self.excluded_users,
            self.negative_policy,
            self.seed
        );
        s
    }

    /// Header-bearing TSV: one row per user and a final `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("user\tauc\trecall_at_{}\n", self.k);
        for m in &self.per_user {
            let _ = writeln!(s, "{}\t{}\t{}", m.user, m.auc, m.recall);
        }
        let _ = writeln!(s, "mean\t{}\t{}", self.mean_auc, self.mean_recall);
        s
    }
}

/// One evaluation target: a user and its held-out relevant items.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub user: usize,
    pub positives: Vec<usize>,
}

/// Scores every target user over `positives ∪ negatives`, where negatives are
/// the items for which `observed(user, item)` is false and that are not positive.
pub fn evaluate_targets<S, O>(
    targets: &[Target],
    num_items: usize,
    k: usize,
    seed: u64,
    mut observed: O,
    mut scorer: S,
) -> Result<EvalReport>
where
    S: FnMut(usize, usize) -> Result<f64>,
    O: FnMut(usize, usize) -> bool,
{
    let mut per_user = Vec::with_capacity(targets.len());
    let mut excluded_users = 0;
    for t in targets {
        if t.positives.is_empty() {
            excluded_users += 1;
            continue;
        }
        let relevant: HashSet<usize> = t.positives.iter().copied().collect();
        let mut pool = Vec::with_capacity(num_items);
        let mut pos = Vec::with_capacity(relevant.len());
        let mut neg = Vec::with_capacity(num_items);
        for item in 0..num_items {
            let is_pos = relevant.contains(&item);
            if !is_pos && observed(t.user, item) {
                continue;
            }
            let s = scorer(t.user, item)?;
            if is_pos {
                pos.push(s);
            } else {
                neg.push(s);
            }
            pool.push((item, s));
        }
        let auc = user_auc(&pos, &neg)?;
        rank_items(&mut pool);
        let ranked: Vec<usize> = pool.iter().map(|&(i, _)| i).collect();
        let recall = user_recall_at_k(&ranked, &relevant, k)?;
        per_user.push(UserMetrics {
            user: t.user,
            auc,
            recall,
        });
    }
    if per_user.is_empty() {
        return Err(Error::NoTestUsers);
    }
    let n = per_user.len() as f64;
    let mean_auc = per_user.iter().map(|m| m.auc).sum::<f64>() / n;
    let mean_recall = per_user.iter().map(|m| m.recall).sum::<f64>() / n;
    Ok(EvalReport {
        per_user,
        mean_auc,
        mean_recall,
        k,
        negative_policy: NEGATIVES_ALL_UNOBSERVED.into(),
        seed,
        excluded_users,
    })
}

/// Which held-out partition of the bridge users to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holdout {
    Validation,
    Test,
}

/// Bridge-user holdout evaluation of an information-domain scorer.
pub fn evaluate_model<S>(
    scorer: S,
    data: &Dataset,
    split: &SplitSpec,
    k: usize,
) -> Result<EvalReport>
where
    S: FnMut(usize, usize) -> Result<f64>,
{
    evaluate_holdout(scorer, data, split, k, Holdout::Test)
}

pub fn evaluate_holdout<S>(
    scorer: S,
    data: &Dataset,
    split: &SplitSpec,
    k: usize,
    holdout: Holdout,
) -> Result<EvalReport>
where
    S: FnMut(usize, usize) -> Result<f64>,
{
    let targets: Vec<Target> = split
        .bridge
        .iter()
        .map(|(&user, s)| Target {
            user,
            positives: match holdout {
                Holdout::Test => s.test.clone(),
                Holdout::Validation => s.validation.clone(),
            },
        })
        .collect();
    let table = &data.interactions;
    evaluate_targets(
        &targets,
        data.num_items(),
        k,
        split.seed,
        |u, i| table.contains(u, i),
        scorer,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub degrees_of_freedom: usize,
}

/// Paired two-sided t-test on per-user metrics.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DegenerateInput("samples have different lengths"));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateInput("need at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateInput("differences have zero variance"));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|_| Error::DegenerateInput("invalid degrees of freedom"))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest {
        t,
        p,
        degrees_of_freedom: n - 1,
    })
}

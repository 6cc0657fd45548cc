//! Grouped stratified folds, split enumeration, metrics and aggregation.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fold assignment of every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub n_folds: usize,
    pub fold_of: Vec<usize>,
}

impl SplitPlan {
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn members_of(&self, folds: &[usize]) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| folds.contains(&self.fold_of[i])).collect()
    }
}

/// Greedy stratified group k-fold.
///
/// Groups are visited in order of decreasing imbalance between their class
/// counts (seeded shuffle first, so equal-imbalance groups are visited in a
/// seeded order). Each group goes to the fold minimizing
/// `Σ_c Σ_f (n_fc / n_c - 1/K)^2`, the squared deviation of every fold's
/// share of each class from an even share. Ties go to the smaller fold,
/// then to a seeded random fold.
pub fn stratified_group_kfold<G: AsRef<str>>(
    labels: &[u8],
    groups: &[G],
    n_folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if labels.len() != groups.len() {
        return Err(invalid!("{} labels but {} group ids", labels.len(), groups.len()));
    }
    if n_folds < 2 {
        return Err(invalid!("need at least 2 folds"));
    }
    let mut counts: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    for (g, &y) in groups.iter().zip(labels) {
        if y > 1 {
            return Err(invalid!("labels must be 0 or 1"));
        }
        counts.entry(g.as_ref()).or_default()[y as usize] += 1;
    }
    if counts.len() < n_folds {
        return Err(invalid!("{} groups cannot fill {n_folds} folds", counts.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(&str, [usize; 2])> = counts.into_iter().collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|(_, c)| std::cmp::Reverse(c[0].abs_diff(c[1])));

    let totals = [
        labels.iter().filter(|&&y| y == 0).count(),
        labels.iter().filter(|&&y| y == 1).count(),
    ];
    let share = 1.0 / n_folds as f64;
    let mut fold_counts = vec![[0usize; 2]; n_folds];
    let mut assignment: HashMap<&str, usize> = HashMap::new();

    let cost = |fc: &[[usize; 2]]| -> f64 {
        (0..2)
            .filter(|&c| totals[c] > 0)
            .map(|c| {
                fc.iter()
                    .map(|f| (f[c] as f64 / totals[c] as f64 - share).powi(2))
                    .sum::<f64>()
            })
            .sum()
    };

    for (g, c) in order {
        let mut priority: Vec<usize> = (0..n_folds).collect();
        priority.shuffle(&mut rng);
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for f in 0..n_folds {
            fold_counts[f][0] += c[0];
            fold_counts[f][1] += c[1];
            let key = (cost(&fold_counts), fold_counts[f][0] + fold_counts[f][1] - c[0] - c[1], priority[f], f);
            fold_counts[f][0] -= c[0];
            fold_counts[f][1] -= c[1];
            let better = match best {
                None => true,
                Some((bc, bs, bp, _)) => {
                    if (key.0 - bc).abs() > 1e-12 {
                        key.0 < bc
                    } else {
                        (key.1, key.2) < (bs, bp)
                    }
                }
            };
            if better {
                best = Some(key);
            }
        }
        let f = best.expect("at least one fold").3;
        fold_counts[f][0] += c[0];
        fold_counts[f][1] += c[1];
        assignment.insert(g, f);
    }
    if let Some(empty) = fold_counts.iter().position(|f| f[0] + f[1] == 0) {
        return Err(invalid!("fold {empty} received no group"));
    }
    Ok(SplitPlan {
        n_folds,
        fold_of: groups.iter().map(|g| assignment[g.as_ref()]).collect(),
    })
}

/// One train/test configuration: held-out test folds and the labeled
/// subset of the remaining training folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combo {
    pub id: usize,
    pub test_folds: Vec<usize>,
    pub labeled_folds: Vec<usize>,
    /// Training folds not labeled; their clips join the unlabeled pool.
    pub unlabeled_folds: Vec<usize>,
}

impl Combo {
    pub fn describe(folds: &[usize]) -> String {
        folds.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("+")
    }
}

fn subsets_of_size(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn go(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Every choice of `n_test` test folds crossed with every nonempty labeled
/// subset of the remaining folds, ordered by test folds, then labeled-subset
/// size, then lexicographically.
pub fn enumerate_combos(n_folds: usize, n_test: usize) -> Result<Vec<Combo>> {
    if n_test == 0 || n_test >= n_folds {
        return Err(invalid!("need 0 < n_test < n_folds (got {n_test} of {n_folds})"));
    }
    let all: Vec<usize> = (0..n_folds).collect();
    let mut combos = Vec::new();
    for test in subsets_of_size(&all, n_test) {
        let rest: Vec<usize> = all.iter().copied().filter(|f| !test.contains(f)).collect();
        for k in 1..=rest.len() {
            for labeled in subsets_of_size(&rest, k) {
                let unlabeled = rest.iter().copied().filter(|f| !labeled.contains(f)).collect();
                combos.push(Combo {
                    id: combos.len(),
                    test_folds: test.clone(),
                    labeled_folds: labeled,
                    unlabeled_folds: unlabeled,
                });
            }
        }
    }
    Ok(combos)
}

/// Mann-Whitney area under the ROC curve:
/// `(concordant + ties / 2) / (n_pos * n_neg)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (twice, pairs) = roc_auc_counts(scores, labels)?;
    Ok(twice as f64 / (2 * pairs) as f64)
}

/// `(2 * concordant + tied, n_pos * n_neg)` in exact integers.
pub fn roc_auc_counts(scores: &[f64], labels: &[u8]) -> Result<(u128, u128)> {
    if scores.len() != labels.len() {
        return Err(invalid!("{} scores but {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid!("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(invalid!("ROC-AUC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut concordant, mut tied) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        concordant += pos * neg_below;
        tied += pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok((2 * concordant + tied, n_pos * n_neg))
}

/// Hard predictions from positive-class probabilities (`p > 0.5`).
pub fn predict_at_half(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > 0.5)).collect()
}

/// Unweighted mean of the two per-class F1 scores; a class with no true
/// and no predicted members scores 0.
pub fn macro_f1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(invalid!("{} predictions but {} labels", predictions.len(), labels.len()));
    }
    let f1 = |c: u8| {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p == c, y == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    Ok((f1(0) + f1(1)) / 2.0)
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub combo_id: usize,
    pub test_folds: String,
    pub labeled_folds: String,
    pub n_labeled_folds: usize,
    pub labeled_fraction: f64,
    pub algorithm: String,
    pub target: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

impl ResultRecord {
    pub const HEADER: [&'static str; 10] = [
        "combo_id",
        "test_folds",
        "labeled_folds",
        "n_labeled_folds",
        "labeled_fraction",
        "algorithm",
        "target",
        "metric",
        "value",
        "seed",
    ];
}

/// Mean and standard error of one (algorithm, target, metric, labeled
/// folds) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub target: String,
    pub metric: String,
    pub n_labeled_folds: usize,
    pub labeled_fraction: f64,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over √n; 0 when `n == 1`.
    pub std_error: f64,
    /// False when the cell has a single record.
    pub se_defined: bool,
}

pub fn aggregate(records: &[ResultRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(&str, &str, &str, usize), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((&r.algorithm, &r.target, &r.metric, r.n_labeled_folds))
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|((algorithm, target, metric, k), rs)| {
            let n = rs.len();
            let mean = rs.iter().map(|r| r.value).sum::<f64>() / n as f64;
            let (std_error, se_defined) = if n > 1 {
                let var = rs.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var.sqrt() / (n as f64).sqrt(), true)
            } else {
                (0.0, false)
            };
            CellSummary {
                algorithm: algorithm.to_string(),
                target: target.to_string(),
                metric: metric.to_string(),
                n_labeled_folds: k,
                labeled_fraction: rs[0].labeled_fraction,
                n,
                mean,
                std_error,
                se_defined,
            }
        })
        .collect()
}

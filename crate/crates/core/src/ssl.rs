//! Semi-supervised wrappers around the linear base classifier:
//! self-training and two-view co-training.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear::{self, LinearModel, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sl")]
    Supervised,
    #[serde(rename = "self")]
    SelfTraining,
    #[serde(rename = "cotrain-split")]
    CotrainModalitySplit,
    #[serde(rename = "cotrain-fused")]
    CotrainModalityFused,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Supervised,
        Method::SelfTraining,
        Method::CotrainModalitySplit,
        Method::CotrainModalityFused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Supervised => "sl",
            Method::SelfTraining => "self",
            Method::CotrainModalitySplit => "cotrain-split",
            Method::CotrainModalityFused => "cotrain-fused",
        }
    }

    pub fn is_cotraining(self) -> bool {
        matches!(self, Method::CotrainModalitySplit | Method::CotrainModalityFused)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid!("unknown method {s:?} (valid: sl, self, cotrain-split, cotrain-fused)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Adopt every sample whose confidence reaches the threshold.
    Threshold,
    /// Adopt the `k_best` most confident samples.
    KBest,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Criterion::Threshold),
            "k_best" => Ok(Criterion::KBest),
            _ => Err(invalid!("unknown criterion {s:?} (expected threshold or k_best)")),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Threshold => "threshold",
            Criterion::KBest => "k_best",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub criterion: Criterion,
    pub threshold: f64,
    pub k_best: usize,
    pub max_iters: usize,
    pub base: SgdConfig,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Threshold,
            threshold: 0.75,
            k_best: 10,
            max_iters: 10,
            base: SgdConfig::default(),
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.k_best == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("k_best and max_iters must be >= 1".into()));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Row index into the unlabeled set.
    pub index: usize,
    pub label: u8,
    pub confidence: f64,
    /// Nominating classifier under co-training.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nominated_by: Option<View>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub adopted: Vec<PseudoLabel>,
    /// Unlabeled rows nominated with conflicting labels and left unlabeled.
    pub conflicts: Vec<usize>,
    /// Labeled pool size(s) the classifier(s) were fit on this iteration.
    pub pool_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ExhaustedUnlabeled,
    NoConfident,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelTrace {
    pub iterations: Vec<Iteration>,
    pub termination: Termination,
}

impl PseudoLabelTrace {
    pub fn n_pseudo_labeled(&self) -> usize {
        let mut seen = BTreeSet::new();
        for it in &self.iterations {
            seen.extend(it.adopted.iter().map(|p| p.index));
        }
        seen.len()
    }
}

fn confidence(p: f64) -> f64 {
    p.max(1.0 - p)
}

/// Picks unlabeled rows to adopt. `candidates` pairs row index with the
/// positive-class probability. Ties keep lower indices first.
fn select(candidates: &[(usize, f64)], cfg: &SslConfig) -> Vec<PseudoLabel> {
    let mut picked: Vec<PseudoLabel> = candidates
        .iter()
        .map(|&(index, p)| PseudoLabel {
            index,
            label: u8::from(p > 0.5),
            confidence: confidence(p),
            nominated_by: None,
        })
        .collect();
    match cfg.criterion {
        Criterion::Threshold => picked.retain(|c| c.confidence >= cfg.threshold),
        Criterion::KBest => {
            picked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.index.cmp(&b.index)));
            picked.truncate(cfg.k_best);
            picked.sort_by_key(|c| c.index);
        }
    }
    picked
}

/// Labeled rows followed by the chosen unlabeled rows.
fn pool(
    x_lab: ArrayView2<f64>,
    y_lab: &[u8],
    x_unlab: ArrayView2<f64>,
    pseudo: &[(usize, u8)],
) -> (Array2<f64>, Vec<u8>) {
    let idx: Vec<usize> = pseudo.iter().map(|p| p.0).collect();
    let extra = x_unlab.select(Axis(0), &idx);
    let x = concatenate(Axis(0), &[x_lab, extra.view()]).expect("same width");
    let mut y = y_lab.to_vec();
    y.extend(pseudo.iter().map(|p| p.1));
    (x, y)
}

fn check_labeled(x_lab: ArrayView2<f64>, y_lab: &[u8], x_unlab: ArrayView2<f64>) -> Result<()> {
    if x_lab.nrows() != y_lab.len() {
        return Err(invalid!("{} labeled rows but {} labels", x_lab.nrows(), y_lab.len()));
    }
    if x_unlab.nrows() > 0 && x_unlab.ncols() != x_lab.ncols() {
        return Err(invalid!("labeled and unlabeled feature widths differ"));
    }
    linear::class_weights(y_lab).map(|_| ())
}

/// Iterative self-training.
///
/// Each round fits the base classifier on the current pool (balanced
/// weights recomputed over the pool), scores the remaining unlabeled rows
/// and adopts the confident ones with their predicted labels. Stops when
/// nothing is adopted, nothing is left, or after `max_iters` rounds, in
/// which case the model is refit on the final pool.
pub fn self_train(
    x_lab: ArrayView2<f64>,
    y_lab: &[u8],
    x_unlab: ArrayView2<f64>,
    cfg: &SslConfig,
) -> Result<(LinearModel, PseudoLabelTrace)> {
    cfg.validate()?;
    check_labeled(x_lab, y_lab, x_unlab)?;
    let mut pseudo: Vec<(usize, u8)> = Vec::new();
    let mut remaining: Vec<usize> = (0..x_unlab.nrows()).collect();
    let mut iterations = Vec::new();

    for _ in 0..cfg.max_iters {
        let (x, y) = pool(x_lab, y_lab, x_unlab, &pseudo);
        let model = linear::fit(x.view(), &y, None, &cfg.base)?;
        if remaining.is_empty() {
            return Ok((model, PseudoLabelTrace { iterations, termination: Termination::ExhaustedUnlabeled }));
        }
        let probs = model.predict_proba(x_unlab.select(Axis(0), &remaining).view())?;
        let candidates: Vec<(usize, f64)> = remaining.iter().copied().zip(probs).collect();
        let adopted = select(&candidates, cfg);
        if adopted.is_empty() {
            iterations.push(Iteration { pool_sizes: vec![y.len()], ..Default::default() });
            return Ok((model, PseudoLabelTrace { iterations, termination: Termination::NoConfident }));
        }
        let taken: BTreeSet<usize> = adopted.iter().map(|p| p.index).collect();
        remaining.retain(|i| !taken.contains(i));
        pseudo.extend(adopted.iter().map(|p| (p.index, p.label)));
        iterations.push(Iteration {
            adopted,
            conflicts: Vec::new(),
            pool_sizes: vec![y.len()],
        });
    }
    let (x, y) = pool(x_lab, y_lab, x_unlab, &pseudo);
    let model = linear::fit(x.view(), &y, None, &cfg.base)?;
    let termination = if remaining.is_empty() {
        Termination::ExhaustedUnlabeled
    } else {
        Termination::MaxIters
    };
    Ok((model, PseudoLabelTrace { iterations, termination }))
}

/// Column views for fused co-training: a seeded permutation split in two,
/// the first view taking the extra column when the count is odd.
pub fn split_views_fused(n_columns: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_columns < 2 {
        return Err(invalid!("need at least 2 columns to split into views, got {n_columns}"));
    }
    let mut cols: Vec<usize> = (0..n_columns).collect();
    cols.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let b = cols.split_off(n_columns.div_ceil(2));
    Ok((cols, b))
}

/// The two classifiers of a co-trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTrained {
    pub a: LinearModel,
    pub b: LinearModel,
}

impl CoTrained {
    /// Mean of the two classifiers' probabilities.
    pub fn predict_proba(&self, xa: ArrayView2<f64>, xb: ArrayView2<f64>) -> Result<Vec<f64>> {
        let pa = self.a.predict_proba(xa)?;
        let pb = self.b.predict_proba(xb)?;
        Ok(pa.iter().zip(&pb).map(|(a, b)| 0.5 * (a + b)).collect())
    }
}

/// Seeds of the two view classifiers.
pub fn view_configs(base: &SgdConfig) -> (SgdConfig, SgdConfig) {
    let a = *base;
    let b = SgdConfig {
        seed: base.seed.wrapping_add(1),
        ..*base
    };
    (a, b)
}

/// Supervised fit of both view classifiers on the labeled rows only.
pub fn fit_views(
    lab: (ArrayView2<f64>, ArrayView2<f64>),
    y_lab: &[u8],
    base: &SgdConfig,
) -> Result<CoTrained> {
    let (ca, cb) = view_configs(base);
    Ok(CoTrained {
        a: linear::fit(lab.0, y_lab, None, &ca)?,
        b: linear::fit(lab.1, y_lab, None, &cb)?,
    })
}

/// Two-view co-training.
///
/// Each round fits one classifier per view on its own pool; each nominates
/// its confident unlabeled rows, which join the OTHER classifier's pool
/// with the nominator's label. Rows nominated by both with different
/// labels stay unlabeled this round. Every row is pseudo-labeled at most
/// once.
pub fn co_train(
    lab: (ArrayView2<f64>, ArrayView2<f64>),
    unlab: (ArrayView2<f64>, ArrayView2<f64>),
    y_lab: &[u8],
    cfg: &SslConfig,
) -> Result<(CoTrained, PseudoLabelTrace)> {
    cfg.validate()?;
    if lab.0.nrows() != lab.1.nrows() || unlab.0.nrows() != unlab.1.nrows() {
        return Err(invalid!("co-training views are not row-aligned"));
    }
    check_labeled(lab.0, y_lab, unlab.0)?;
    check_labeled(lab.1, y_lab, unlab.1)?;
    let (cfg_a, cfg_b) = view_configs(&cfg.base);

    // pool_a holds rows labeled by B for A, and vice versa
    let mut pool_a: Vec<(usize, u8)> = Vec::new();
    let mut pool_b: Vec<(usize, u8)> = Vec::new();
    let mut remaining: Vec<usize> = (0..unlab.0.nrows()).collect();
    let mut iterations = Vec::new();

    let fit_both = |pa: &[(usize, u8)], pb: &[(usize, u8)]| -> Result<(CoTrained, Vec<usize>)> {
        let (xa, ya) = pool(lab.0, y_lab, unlab.0, pa);
        let (xb, yb) = pool(lab.1, y_lab, unlab.1, pb);
        let models = CoTrained {
            a: linear::fit(xa.view(), &ya, None, &cfg_a)?,
            b: linear::fit(xb.view(), &yb, None, &cfg_b)?,
        };
        Ok((models, vec![ya.len(), yb.len()]))
    };

    for _ in 0..cfg.max_iters {
        let (models, sizes) = fit_both(&pool_a, &pool_b)?;
        if remaining.is_empty() {
            return Ok((models, PseudoLabelTrace { iterations, termination: Termination::ExhaustedUnlabeled }));
        }
        let pa = models.a.predict_proba(unlab.0.select(Axis(0), &remaining).view())?;
        let pb = models.b.predict_proba(unlab.1.select(Axis(0), &remaining).view())?;
        let by_a = select(&remaining.iter().copied().zip(pa).collect::<Vec<_>>(), cfg);
        let by_b = select(&remaining.iter().copied().zip(pb).collect::<Vec<_>>(), cfg);

        let label_b: std::collections::BTreeMap<usize, u8> = by_b.iter().map(|p| (p.index, p.label)).collect();
        let label_a: std::collections::BTreeMap<usize, u8> = by_a.iter().map(|p| (p.index, p.label)).collect();
        let conflicts: BTreeSet<usize> = label_a
            .iter()
            .filter(|(i, l)| label_b.get(i).is_some_and(|m| m != *l))
            .map(|(i, _)| *i)
            .collect();

        let mut adopted = Vec::new();
        for (nominations, view, target) in [(&by_a, View::A, &mut pool_b), (&by_b, View::B, &mut pool_a)] {
            for p in nominations.iter().filter(|p| !conflicts.contains(&p.index)) {
                target.push((p.index, p.label));
                adopted.push(PseudoLabel {
                    nominated_by: Some(view),
                    ..p.clone()
                });
            }
        }
        let conflicts: Vec<usize> = conflicts.into_iter().collect();
        if adopted.is_empty() {
            iterations.push(Iteration { adopted, conflicts, pool_sizes: sizes });
            return Ok((models, PseudoLabelTrace { iterations, termination: Termination::NoConfident }));
        }
        let taken: BTreeSet<usize> = adopted.iter().map(|p| p.index).collect();
        remaining.retain(|i| !taken.contains(i));
        iterations.push(Iteration { adopted, conflicts, pool_sizes: sizes });
    }
    let (models, _) = fit_both(&pool_a, &pool_b)?;
    let termination = if remaining.is_empty() {
        Termination::ExhaustedUnlabeled
    } else {
        Termination::MaxIters
    };
    Ok((models, PseudoLabelTrace { iterations, termination }))
}

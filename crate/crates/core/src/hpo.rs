//! Tree-structured Parzen estimator search over the classifier and
//! pseudo-labeling hyperparameters.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::statistics::Distribution;

use crate::error::{invalid, Error, Result};
use crate::features::Retention;
use crate::linear::{Loss, Penalty};
use crate::ssl::{Criterion, Method, SslConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dim {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Categorical { choices: Vec<String> },
}

impl Dim {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidConfig(format!("parameter {name}: {why}")));
        match self {
            Dim::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => bad("need finite lo < hi"),
            Dim::LogUniform { lo, hi } if !(*lo > 0.0 && hi.is_finite() && lo < hi) => bad("need 0 < lo < hi"),
            Dim::Categorical { choices } if choices.is_empty() => bad("no choices"),
            _ => Ok(()),
        }
    }

    /// Bounds in sampling coordinates (natural log for log-uniform).
    fn internal_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Dim::Uniform { lo, hi } => Some((lo, hi)),
            Dim::LogUniform { lo, hi } => Some((lo.ln(), hi.ln())),
            Dim::Categorical { .. } => None,
        }
    }

    fn to_internal(&self, v: f64) -> f64 {
        match self {
            Dim::LogUniform { .. } => v.ln(),
            _ => v,
        }
    }

    fn from_internal(&self, u: f64) -> f64 {
        match *self {
            Dim::LogUniform { lo, hi } => u.exp().clamp(lo, hi),
            Dim::Uniform { lo, hi } => u.clamp(lo, hi),
            Dim::Categorical { .. } => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Float(f64),
    Choice(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Choice(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Choice(s) => Some(s),
            Value::Float(_) => None,
        }
    }
}

pub type Assignment = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<(String, Dim)>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidConfig("empty search space".into()));
        }
        for (name, d) in &self.dims {
            d.validate(name)?;
        }
        Ok(())
    }

    /// The classifier space; pseudo-labeling dimensions are added for
    /// semi-supervised methods.
    pub fn for_method(method: Method) -> Self {
        let cat = |xs: &[&str]| Dim::Categorical {
            choices: xs.iter().map(|s| s.to_string()).collect(),
        };
        let mut dims = vec![
            ("pca".to_string(), cat(&["off", "on"])),
            ("pca_fraction".to_string(), Dim::Uniform { lo: 0.2, hi: 1.0 }),
            ("loss".to_string(), cat(&["log_loss", "modified_huber"])),
            ("penalty".to_string(), cat(&["l1", "l2"])),
            ("alpha".to_string(), Dim::LogUniform { lo: 1e-5, hi: 1e-2 }),
        ];
        if method != Method::Supervised {
            dims.push(("criterion".to_string(), cat(&["threshold", "k_best"])));
            dims.push(("threshold".to_string(), Dim::Uniform { lo: 0.0, hi: 1.0 }));
        }
        Self { dims }
    }

    pub fn contains(&self, a: &Assignment) -> bool {
        self.dims.iter().all(|(name, d)| match (d, a.get(name)) {
            (Dim::Uniform { lo, hi } | Dim::LogUniform { lo, hi }, Some(Value::Float(v))) => {
                (*lo..=*hi).contains(v)
            }
            (Dim::Categorical { choices }, Some(Value::Choice(c))) => choices.contains(c),
            _ => false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Assignment,
    pub state: TrialState,
    /// Maximized; `None` for failed trials.
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Tpe(TpeConfig),
    Random,
}

/// RNG for the `trial`-th suggestion of a study.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn sample_random(space: &SearchSpace, rng: &mut impl RngCore) -> Assignment {
    space
        .dims
        .iter()
        .map(|(name, d)| {
            let v = match d {
                Dim::Categorical { choices } => Value::Choice(choices[rng.random_range(0..choices.len())].clone()),
                _ => {
                    let (lo, hi) = d.internal_bounds().expect("numeric dim");
                    Value::Float(d.from_internal(lo + (hi - lo) * rng.random::<f64>()))
                }
            };
            (name.clone(), v)
        })
        .collect()
}

/// One-dimensional mixture of Gaussians truncated to `[lo, hi]`, with a
/// wide prior component centered on the interval.
struct Parzen {
    lo: f64,
    hi: f64,
    kernels: Vec<(Normal, f64)>,
}

impl Parzen {
    fn fit(points: &[f64], lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let n = points.len();
        let sd = if n > 1 {
            let m = points.iter().sum::<f64>() / n as f64;
            (points.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        // Silverman's rule, clipped so a kernel never gets narrower than
        // range / min(100, n + 1) or wider than the range
        let min_bw = range / (n as f64 + 1.0).min(100.0);
        let bw = (1.06 * sd * (n as f64).powf(-0.2)).clamp(min_bw, range);
        let kernels = points
            .iter()
            .map(|&p| (p, bw))
            .chain(std::iter::once((lo + range / 2.0, range)))
            .map(|(m, s)| {
                let nd = Normal::new(m, s).expect("positive sigma");
                let mass = (nd.cdf(hi) - nd.cdf(lo)).max(1e-300);
                (nd, mass)
            })
            .collect();
        Self { lo, hi, kernels }
    }

    fn sample(&self, rng: &mut impl RngCore) -> f64 {
        let nd = self.kernels[rng.random_range(0..self.kernels.len())].0;
        let (a, b) = (nd.cdf(self.lo), nd.cdf(self.hi));
        let u = a + (b - a) * rng.random::<f64>();
        let x = nd.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        if x.is_finite() {
            x.clamp(self.lo, self.hi)
        } else {
            nd.mean().unwrap_or(self.lo).clamp(self.lo, self.hi)
        }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let total: f64 = self.kernels.iter().map(|(nd, mass)| nd.pdf(x) / mass).sum();
        (total / self.kernels.len() as f64).max(1e-300).ln()
    }
}

/// Categorical frequencies with add-one smoothing.
fn categorical_weights(counts: &[usize]) -> Vec<f64> {
    let total = counts.iter().sum::<usize>() + counts.len();
    counts.iter().map(|&c| (c + 1) as f64 / total as f64).collect()
}

fn pick(weights: &[f64], rng: &mut impl RngCore) -> usize {
    let mut u = rng.random::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Next parameters given the study history. Trial `history.len()` draws
/// from its own RNG stream, so the result depends only on
/// `(history, space, seed)`.
pub fn suggest(history: &[Trial], space: &SearchSpace, seed: u64, sampler: Sampler) -> Result<Assignment> {
    space.validate()?;
    let mut rng = trial_rng(seed, history.len());
    let mut done: Vec<&Trial> = history
        .iter()
        .filter(|t| t.state == TrialState::Complete && t.objective.is_some_and(f64::is_finite))
        .collect();
    let cfg = match sampler {
        Sampler::Tpe(cfg) if done.len() >= cfg.n_startup.max(2) => cfg,
        _ => return Ok(sample_random(space, &mut rng)),
    };
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) || cfg.n_candidates == 0 {
        return Err(Error::InvalidConfig("TPE needs 0 < gamma < 1 and at least one candidate".into()));
    }
    // best first; stable, so equal objectives keep trial order
    done.sort_by(|a, b| b.objective.unwrap().total_cmp(&a.objective.unwrap()));
    let n_good = ((cfg.gamma * done.len() as f64).ceil() as usize).clamp(1, done.len() - 1);
    let (good, bad) = done.split_at(n_good);

    let mut candidates: Vec<Assignment> = vec![Assignment::new(); cfg.n_candidates];
    let mut scores = vec![0.0; cfg.n_candidates];
    for (name, d) in &space.dims {
        match d {
            Dim::Categorical { choices } => {
                let count = |ts: &[&Trial]| -> Vec<usize> {
                    let mut c = vec![0; choices.len()];
                    for t in ts {
                        if let Some(i) = t.params.get(name).and_then(Value::as_str).and_then(|s| choices.iter().position(|x| x == s)) {
                            c[i] += 1;
                        }
                    }
                    c
                };
                let (wg, wb) = (categorical_weights(&count(good)), categorical_weights(&count(bad)));
                for (cand, score) in candidates.iter_mut().zip(scores.iter_mut()) {
                    let i = pick(&wg, &mut rng);
                    *score += wg[i].ln() - wb[i].ln();
                    cand.insert(name.clone(), Value::Choice(choices[i].clone()));
                }
            }
            _ => {
                let (lo, hi) = d.internal_bounds().expect("numeric dim");
                let points = |ts: &[&Trial]| -> Vec<f64> {
                    ts.iter()
                        .filter_map(|t| t.params.get(name).and_then(Value::as_f64))
                        .map(|v| d.to_internal(v))
                        .collect()
                };
                let (pg, pb) = (Parzen::fit(&points(good), lo, hi), Parzen::fit(&points(bad), lo, hi));
                for (cand, score) in candidates.iter_mut().zip(scores.iter_mut()) {
                    let u = pg.sample(&mut rng);
                    *score += pg.log_pdf(u) - pb.log_pdf(u);
                    cand.insert(name.clone(), Value::Float(d.from_internal(u)));
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(candidates.swap_remove(best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub trials: Vec<Trial>,
    /// Index of the best complete trial; earliest wins ties.
    pub best: Option<usize>,
}

impl Study {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }
}

/// Runs `n_trials` sequential suggestions. Evaluator errors and non-finite
/// objectives are recorded as failed trials.
pub fn optimize<F>(space: &SearchSpace, n_trials: usize, seed: u64, sampler: Sampler, mut evaluate: F) -> Result<Study>
where
    F: FnMut(&Assignment) -> std::result::Result<f64, String>,
{
    if n_trials == 0 {
        return Err(invalid!("n_trials must be >= 1"));
    }
    let mut trials: Vec<Trial> = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let params = suggest(&trials, space, seed, sampler)?;
        let (state, objective, error) = match evaluate(&params) {
            Ok(v) if v.is_finite() => (TrialState::Complete, Some(v), None),
            Ok(v) => (TrialState::Failed, None, Some(format!("non-finite objective {v}"))),
            Err(e) => (TrialState::Failed, None, Some(e)),
        };
        trials.push(Trial {
            index,
            params,
            state,
            objective,
            error,
        });
    }
    let mut best: Option<usize> = None;
    for (i, t) in trials.iter().enumerate() {
        if let Some(v) = t.objective {
            if best.is_none_or(|b| v > trials[b].objective.unwrap()) {
                best = Some(i);
            }
        }
    }
    Ok(Study { trials, best })
}

/// Typed view of an assignment from [`SearchSpace::for_method`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub retention: Retention,
    pub loss: Loss,
    pub penalty: Penalty,
    pub alpha: f64,
    pub criterion: Criterion,
    pub threshold: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        let ssl = SslConfig::default();
        Self {
            retention: Retention::Off,
            loss: ssl.base.loss,
            penalty: ssl.base.penalty,
            alpha: ssl.base.alpha,
            criterion: ssl.criterion,
            threshold: ssl.threshold,
        }
    }
}

impl HyperParams {
    /// Missing pseudo-labeling entries keep their defaults.
    pub fn from_assignment(a: &Assignment) -> Result<Self> {
        let d = Self::default();
        let text = |k: &str| a.get(k).and_then(Value::as_str);
        let num = |k: &str| a.get(k).and_then(Value::as_f64);
        let retention = match text("pca") {
            Some("off") | None => Retention::Off,
            Some("on") => Retention::Fraction(num("pca_fraction").ok_or_else(|| invalid!("pca=on without pca_fraction"))?),
            Some(other) => return Err(invalid!("unknown pca mode {other:?}")),
        };
        let hp = Self {
            retention,
            loss: text("loss").map(str::parse).transpose()?.unwrap_or(d.loss),
            penalty: text("penalty").map(str::parse).transpose()?.unwrap_or(d.penalty),
            alpha: num("alpha").unwrap_or(d.alpha),
            criterion: text("criterion").map(str::parse).transpose()?.unwrap_or(d.criterion),
            threshold: num("threshold").unwrap_or(d.threshold),
        };
        hp.retention.validate()?;
        Ok(hp)
    }

    /// `base` with these values substituted; epochs, seeds and iteration
    /// caps are kept.
    pub fn apply(&self, base: &SslConfig) -> SslConfig {
        let mut c = *base;
        c.base.loss = self.loss;
        c.base.penalty = self.penalty;
        c.base.alpha = self.alpha;
        c.criterion = self.criterion;
        c.threshold = self.threshold;
        c
    }
}

/// Tuned parameters for one (method, target, labeled-fold count) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedCell {
    pub method: Method,
    pub target: String,
    pub n_labeled_folds: usize,
    pub params: HyperParams,
    pub objective: Option<f64>,
}

/// Contents of a `params.json` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub cells: Vec<TunedCell>,
}

impl ParamsFile {
    /// Exact cell match first, then the same method and target with the
    /// nearest labeled-fold count.
    pub fn lookup(&self, method: Method, target: &str, n_labeled_folds: usize) -> Option<&HyperParams> {
        self.cells
            .iter()
            .filter(|c| c.method == method && c.target == target)
            .min_by_key(|c| (c.n_labeled_folds.abs_diff(n_labeled_folds), c.n_labeled_folds))
            .map(|c| &c.params)
    }

    pub fn insert(&mut self, cell: TunedCell) {
        self.cells
            .retain(|c| !(c.method == cell.method && c.target == cell.target && c.n_labeled_folds == cell.n_labeled_folds));
        self.cells.push(cell);
        self.cells
            .sort_by(|a, b| (a.method.as_str(), &a.target, a.n_labeled_folds).cmp(&(b.method.as_str(), &b.target, b.n_labeled_folds)));
    }
}

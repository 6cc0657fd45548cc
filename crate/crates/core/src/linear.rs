//! Linear binary classifier trained by plain stochastic gradient descent
//! with balanced class weights.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, CowArray, Ix2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    LogLoss,
    ModifiedHuber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

impl Loss {
    pub fn as_str(self) -> &'static str {
        match self {
            Loss::LogLoss => "log_loss",
            Loss::ModifiedHuber => "modified_huber",
        }
    }

    /// Loss at margin score `p` for target `y` in {-1, +1}.
    pub fn loss(self, p: f64, y: f64) -> f64 {
        let z = p * y;
        match self {
            Loss::LogLoss => {
                // log(1 + exp(-z)) without overflow
                if z > 18.0 {
                    (-z).exp()
                } else if z < -18.0 {
                    -z
                } else {
                    (-z).exp().ln_1p()
                }
            }
            Loss::ModifiedHuber => {
                if z >= 1.0 {
                    0.0
                } else if z >= -1.0 {
                    (1.0 - z).powi(2)
                } else {
                    -4.0 * z
                }
            }
        }
    }

    /// Derivative of [`Loss::loss`] with respect to `p`.
    pub fn dloss(self, p: f64, y: f64) -> f64 {
        let z = p * y;
        match self {
            Loss::LogLoss => {
                if z > 18.0 {
                    -y * (-z).exp()
                } else if z < -18.0 {
                    -y
                } else {
                    -y / (z.exp() + 1.0)
                }
            }
            Loss::ModifiedHuber => {
                if z >= 1.0 {
                    0.0
                } else if z >= -1.0 {
                    -2.0 * (1.0 - z) * y
                } else {
                    -4.0 * y
                }
            }
        }
    }

    /// Probability of the positive class for a decision score.
    pub fn probability(self, score: f64) -> f64 {
        match self {
            Loss::LogLoss => 1.0 / (1.0 + (-score).exp()),
            Loss::ModifiedHuber => (score.clamp(-1.0, 1.0) + 1.0) / 2.0,
        }
    }
}

impl Penalty {
    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        }
    }

    /// `||w||_1` or `||w||^2 / 2`.
    pub fn value(self, w: &[f64]) -> f64 {
        match self {
            Penalty::L1 => w.iter().map(|v| v.abs()).sum(),
            Penalty::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_loss" => Ok(Loss::LogLoss),
            "modified_huber" => Ok(Loss::ModifiedHuber),
            _ => Err(invalid!("unknown loss {s:?} (expected log_loss or modified_huber)")),
        }
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(invalid!("unknown penalty {s:?} (expected l1 or l2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub loss: Loss,
    pub penalty: Penalty,
    pub alpha: f64,
    pub max_epochs: usize,
    /// Minimum per-epoch objective improvement.
    pub tol: f64,
    /// Consecutive epochs below `tol` before stopping.
    pub n_iter_no_change: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            loss: Loss::LogLoss,
            penalty: Penalty::L2,
            alpha: 1e-4,
            max_epochs: 1000,
            tol: 1e-3,
            n_iter_no_change: 5,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.max_epochs == 0 || self.n_iter_no_change == 0 {
            return Err(Error::InvalidConfig("max_epochs and n_iter_no_change must be >= 1".into()));
        }
        Ok(())
    }
}

/// Balanced weights `n / (2 * n_c)` for classes 0 and 1.
pub fn class_weights(y: &[u8]) -> Result<[f64; 2]> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(invalid!("labels contain a single class ({neg} negatives, {pos} positives)"));
    }
    let n = y.len() as f64;
    Ok([n / (2.0 * neg as f64), n / (2.0 * pos as f64)])
}

fn signed(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Per-sample weights: balanced class weight times optional sample weight.
fn effective_weights(y: &[u8], sample_weight: Option<&[f64]>) -> Result<Vec<f64>> {
    let cw = class_weights(y)?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, &c)| cw[c as usize] * sample_weight.map_or(1.0, |s| s[i]))
        .collect())
}

/// Regularized empirical risk:
/// `(1/n) Σ w_i loss(y_i, x_i·coef + b) + alpha * penalty(coef)`.
pub fn objective(
    coef: &[f64],
    intercept: f64,
    x: ArrayView2<f64>,
    y: &[u8],
    weights: &[f64],
    loss: Loss,
    penalty: Penalty,
    alpha: f64,
) -> f64 {
    let n = x.nrows() as f64;
    let risk: f64 = x
        .rows()
        .into_iter()
        .zip(y.iter().zip(weights))
        .map(|(row, (&yi, &wi))| {
            let p = row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>() + intercept;
            wi * loss.loss(p, signed(yi))
        })
        .sum();
    risk / n + alpha * penalty.value(coef)
}

/// (Sub)gradient of [`objective`] with respect to `(coef, intercept)`.
pub fn objective_gradient(
    coef: &[f64],
    intercept: f64,
    x: ArrayView2<f64>,
    y: &[u8],
    weights: &[f64],
    loss: Loss,
    penalty: Penalty,
    alpha: f64,
) -> (Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let mut g = vec![0.0; coef.len()];
    let mut gb = 0.0;
    for (row, (&yi, &wi)) in x.rows().into_iter().zip(y.iter().zip(weights)) {
        let p = row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>() + intercept;
        let d = wi * loss.dloss(p, signed(yi)) / n;
        for (gj, xj) in g.iter_mut().zip(row.iter()) {
            *gj += d * xj;
        }
        gb += d;
    }
    for (gj, &w) in g.iter_mut().zip(coef) {
        *gj += alpha
            * match penalty {
                Penalty::L2 => w,
                Penalty::L1 => w.signum() * f64::from(w != 0.0),
            };
    }
    (g, gb)
}

/// A fitted linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub config: SgdConfig,
    /// Epochs actually run.
    pub epochs: usize,
}

/// Fits by per-sample SGD on a seeded shuffle each epoch.
///
/// Step size follows `1 / (alpha * (t0 + t))` where `t0` makes the first
/// step equal to the typical weight scale `alpha^(-1/4)`. L2 shrinks the
/// weights multiplicatively before each step; L1 applies cumulative
/// truncation, so coordinates that cross zero stop at zero.
pub fn fit(x: ArrayView2<f64>, y: &[u8], sample_weight: Option<&[f64]>, cfg: &SgdConfig) -> Result<LinearModel> {
    cfg.validate()?;
    let (n, d) = x.dim();
    if n != y.len() {
        return Err(invalid!("{n} rows but {} labels", y.len()));
    }
    if n < 2 {
        return Err(invalid!("need at least 2 training rows, got {n}"));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(invalid!("labels must be 0 or 1, found {bad}"));
    }
    if let Some(sw) = sample_weight {
        if sw.len() != n || sw.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid!("sample weights must be {n} finite non-negative values"));
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("training features contain non-finite values"));
    }
    let weights = effective_weights(y, sample_weight)?;
    let xs: CowArray<f64, Ix2> = x.as_standard_layout();
    let data = xs.as_slice().expect("standard layout");
    let targets: Vec<f64> = y.iter().map(|&v| signed(v)).collect();

    let alpha = cfg.alpha;
    let typw = (1.0 / alpha.sqrt()).sqrt();
    let eta0 = typw / cfg.loss.dloss(-typw, 1.0).abs().max(1.0);
    let t0 = 1.0 / (eta0 * alpha);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    // cumulative L1 penalty bookkeeping
    let mut u = 0.0;
    let mut q = vec![0.0; d];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0.0f64;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut epochs = 0;

    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let row = &data[i * d..(i + 1) * d];
            let eta = 1.0 / (alpha * (t0 + t));
            let p = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let step = -eta * weights[i] * cfg.loss.dloss(p, targets[i]);
            if cfg.penalty == Penalty::L2 {
                let shrink = (1.0 - eta * alpha).max(0.0);
                w.iter_mut().for_each(|v| *v *= shrink);
            }
            if step != 0.0 {
                for (wj, xj) in w.iter_mut().zip(row) {
                    *wj += step * xj;
                }
                b += step;
            }
            if cfg.penalty == Penalty::L1 {
                u += eta * alpha;
                for (wj, qj) in w.iter_mut().zip(q.iter_mut()) {
                    let z = *wj;
                    if z > 0.0 {
                        *wj = (z - (u + *qj)).max(0.0);
                    } else if z < 0.0 {
                        *wj = (z + (u - *qj)).min(0.0);
                    }
                    *qj += *wj - z;
                }
            }
            t += 1.0;
        }
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::Numerical("SGD diverged".into()));
        }
        let obj = objective(&w, b, xs.view(), y, &weights, cfg.loss, cfg.penalty, alpha);
        if obj > best - cfg.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(obj);
        if stale >= cfg.n_iter_no_change {
            break;
        }
    }
    Ok(LinearModel {
        weights: w,
        intercept: b,
        config: *cfg,
        epochs,
    })
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(invalid!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            ));
        }
        Ok(x.rows()
            .into_iter()
            .map(|r| r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect())
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision(x)?
            .into_iter()
            .map(|s| self.config.loss.probability(s))
            .collect())
    }

    /// Flat `key=value` record; reals carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let real = |v: f64| format!("{v:.16e}");
        let weights: Vec<String> = self.weights.iter().map(|&v| real(v)).collect();
        format!(
            "loss={}\npenalty={}\nalpha={}\nmax_epochs={}\ntol={}\nn_iter_no_change={}\nseed={}\nepochs={}\nintercept={}\nweights={}\n",
            c.loss,
            c.penalty,
            real(c.alpha),
            c.max_epochs,
            real(c.tol),
            c.n_iter_no_change,
            c.seed,
            self.epochs,
            real(self.intercept),
            weights.join(",")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid!("model record line without '=': {line:?}"))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| invalid!("model record lacks {k}"));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| invalid!("bad {k}")) };
        let int = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| invalid!("bad {k}")) };
        let weights = match get("weights")? {
            "" => Vec::new(),
            s => s
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| invalid!("bad weight {v:?}")))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self {
            weights,
            intercept: num("intercept")?,
            config: SgdConfig {
                loss: get("loss")?.parse()?,
                penalty: get("penalty")?.parse()?,
                alpha: num("alpha")?,
                max_epochs: int("max_epochs")? as usize,
                tol: num("tol")?,
                n_iter_no_change: int("n_iter_no_change")? as usize,
                seed: int("seed")?,
            },
            epochs: int("epochs")? as usize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn balanced_weights() {
        let y = [1, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        let w = class_weights(&y).unwrap();
        assert_eq!(w, [2.5, 0.625]);
        assert_eq!(class_weights(&[0, 1, 0, 1, 0, 1, 1, 0, 1, 0]).unwrap(), [1.0, 1.0]);
        assert!(class_weights(&[1, 1, 1]).is_err());
    }

    #[test]
    fn separable_pair() {
        let x = array![[-1.0], [1.0]];
        let cfg = SgdConfig {
            alpha: 1e-5,
            ..Default::default()
        };
        let m = fit(x.view(), &[0, 1], None, &cfg).unwrap();
        assert!(m.weights[0] > 0.0);
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn same_seed_same_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((50, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = x.rows().into_iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.0)).collect();
        for penalty in [Penalty::L1, Penalty::L2] {
            let cfg = SgdConfig {
                penalty,
                seed: 42,
                ..Default::default()
            };
            let a = fit(x.view(), &y, None, &cfg).unwrap();
            let b = fit(x.view(), &y, None, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn probability_mapping() {
        for loss in [Loss::LogLoss, Loss::ModifiedHuber] {
            assert_eq!(loss.probability(0.0), 0.5);
        }
        assert_eq!(Loss::ModifiedHuber.probability(3.0), 1.0);
        assert!((Loss::LogLoss.probability(3f64.ln()) - 0.75).abs() < 1e-15);
        let mut last = 0.0;
        for i in -50..=50 {
            let s = i as f64 * 0.1;
            for loss in [Loss::LogLoss, Loss::ModifiedHuber] {
                assert!(loss.probability(s) >= 0.0);
            }
            let p = Loss::LogLoss.probability(s);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = LinearModel {
            weights: vec![1.0, 2.0],
            intercept: 0.0,
            config: SgdConfig::default(),
            epochs: 1,
        };
        assert!(m.decision(array![[1.0]].view()).is_err());
    }

    #[test]
    fn l1_produces_exact_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((200, 6), |_| rng.random_range(-1.0..1.0));
        let y: Vec<u8> = x.rows().into_iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let cfg = SgdConfig {
            penalty: Penalty::L1,
            alpha: 1e-2,
            ..Default::default()
        };
        let m = fit(x.view(), &y, None, &cfg).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.weights[1..].iter().filter(|w| **w == 0.0).count() >= 3, "{:?}", m.weights);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0], [f64::INFINITY]];
        assert!(fit(x.view(), &[0, 1], None, &SgdConfig::default()).is_err());
        let x = array![[0.0], [1.0]];
        assert!(fit(x.view(), &[1, 1], None, &SgdConfig::default()).is_err());
    }

    #[test]
    fn text_record_round_trip() {
        let m = LinearModel {
            weights: vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567],
            intercept: std::f64::consts::PI,
            config: SgdConfig {
                loss: Loss::ModifiedHuber,
                penalty: Penalty::L1,
                alpha: 3.3e-4,
                seed: 9,
                ..Default::default()
            },
            epochs: 17,
        };
        assert_eq!(LinearModel::from_text(&m.to_text()).unwrap(), m);
    }
}

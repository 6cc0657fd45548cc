//! End-to-end model for one training split: modality selection,
//! standardization and PCA fit on all training features, then the chosen
//! supervised or semi-supervised learner.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::Modality;
use crate::error::{invalid, Result};
use crate::features::{FusionLayout, Preprocessor, Retention};
use crate::linear::{self, LinearModel};
use crate::ssl::{self, CoTrained, Method, PseudoLabelTrace, SslConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    pub retention: Retention,
    pub ssl: SslConfig,
    /// Modalities fed to the model; all three by default.
    pub modalities: Vec<Modality>,
}

impl PipelineConfig {
    pub fn new(method: Method, retention: Retention, ssl: SslConfig) -> Self {
        Self {
            method,
            retention,
            ssl,
            modalities: Modality::ALL.to_vec(),
        }
    }
}

/// Maps full-width feature rows into one classifier's input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewTransform {
    pub input_columns: Vec<usize>,
    pub preprocessor: Preprocessor,
    /// Subset of preprocessed columns, for fused co-training views.
    pub output_columns: Option<Vec<usize>>,
}

impl ViewTransform {
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.preprocessor.apply(&x.select(Axis(1), &self.input_columns))?;
        Ok(match &self.output_columns {
            Some(cols) => z.select(Axis(1), cols),
            None => z,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transforms {
    Single(ViewTransform),
    Pair(ViewTransform, ViewTransform),
}

/// Fits the preprocessing for `method` on training rows (labeled and
/// unlabeled together; labels are never consulted).
pub fn fit_transforms(
    layout: FusionLayout,
    x_train: &Array2<f64>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Transforms> {
    if x_train.ncols() != layout.total() {
        return Err(invalid!("expected {} feature columns, got {}", layout.total(), x_train.ncols()));
    }
    let fit_view = |cols: Vec<usize>, min_components: usize| -> Result<ViewTransform> {
        let pre = Preprocessor::fit_with_min(&x_train.select(Axis(1), &cols), cfg.retention, min_components)?;
        Ok(ViewTransform {
            input_columns: cols,
            preprocessor: pre,
            output_columns: None,
        })
    };
    let selected = layout.columns(&cfg.modalities);
    if selected.is_empty() || cfg.modalities.iter().all(|&m| layout.block(m).is_empty()) {
        return Err(invalid!("no feature columns selected"));
    }
    match cfg.method {
        Method::Supervised | Method::SelfTraining => Ok(Transforms::Single(fit_view(selected, 1)?)),
        Method::CotrainModalityFused => {
            let mut base = fit_view(selected, 2)?;
            let (a, b) = ssl::split_views_fused(base.preprocessor.output_dim(), seed)?;
            base.output_columns = Some(a);
            let mut other = base.clone();
            other.output_columns = Some(b);
            Ok(Transforms::Pair(base, other))
        }
        Method::CotrainModalitySplit => {
            let want = |ms: &[Modality]| -> Vec<Modality> {
                ms.iter().copied().filter(|m| cfg.modalities.contains(m)).collect()
            };
            let audio = want(&[Modality::Audio]);
            let rest = want(&[Modality::Face, Modality::Text]);
            let width = |ms: &[Modality]| ms.iter().map(|&m| layout.block(m).len()).sum::<usize>();
            if width(&audio) == 0 {
                return Err(invalid!("modality-split co-training needs an audio block"));
            }
            if width(&rest) == 0 {
                return Err(invalid!("modality-split co-training needs a face or text block"));
            }
            Ok(Transforms::Pair(
                fit_view(layout.columns(&audio), 1)?,
                fit_view(layout.columns(&rest), 1)?,
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Single(LinearModel),
    Pair(CoTrained),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub method: Method,
    pub transforms: Transforms,
    pub learner: Learner,
    pub trace: Option<PseudoLabelTrace>,
}

impl FittedPipeline {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        match (&self.transforms, &self.learner) {
            (Transforms::Single(t), Learner::Single(m)) => m.predict_proba(t.apply(x)?.view()),
            (Transforms::Pair(ta, tb), Learner::Pair(m)) => {
                m.predict_proba(ta.apply(x)?.view(), tb.apply(x)?.view())
            }
            _ => Err(invalid!("pipeline transforms and learner disagree on view count")),
        }
    }
}

/// Trains `method` with already-fitted transforms.
pub fn fit_with_transforms(
    method: Method,
    transforms: Transforms,
    x_lab: &Array2<f64>,
    y_lab: &[u8],
    x_unlab: &Array2<f64>,
    ssl_cfg: &SslConfig,
) -> Result<FittedPipeline> {
    let (learner, trace) = match (&transforms, method) {
        (Transforms::Single(t), Method::Supervised) => {
            (Learner::Single(linear::fit(t.apply(x_lab)?.view(), y_lab, None, &ssl_cfg.base)?), None)
        }
        (Transforms::Single(t), Method::SelfTraining) => {
            let (m, trace) = ssl::self_train(t.apply(x_lab)?.view(), y_lab, t.apply(x_unlab)?.view(), ssl_cfg)?;
            (Learner::Single(m), Some(trace))
        }
        (Transforms::Pair(ta, tb), m) if m.is_cotraining() => {
            let (la, lb) = (ta.apply(x_lab)?, tb.apply(x_lab)?);
            let (ua, ub) = (ta.apply(x_unlab)?, tb.apply(x_unlab)?);
            let (models, trace) = ssl::co_train((la.view(), lb.view()), (ua.view(), ub.view()), y_lab, ssl_cfg)?;
            (Learner::Pair(models), Some(trace))
        }
        _ => return Err(invalid!("transforms do not match method {method}")),
    };
    Ok(FittedPipeline {
        method,
        transforms,
        learner,
        trace,
    })
}

/// The supervised counterpart of `method` on the same transforms: a single
/// classifier, or both view classifiers fit on labeled rows only.
pub fn fit_supervised_counterpart(
    method: Method,
    transforms: Transforms,
    x_lab: &Array2<f64>,
    y_lab: &[u8],
    ssl_cfg: &SslConfig,
) -> Result<FittedPipeline> {
    let learner = match &transforms {
        Transforms::Single(t) => Learner::Single(linear::fit(t.apply(x_lab)?.view(), y_lab, None, &ssl_cfg.base)?),
        Transforms::Pair(ta, tb) => Learner::Pair(ssl::fit_views(
            (ta.apply(x_lab)?.view(), tb.apply(x_lab)?.view()),
            y_lab,
            &ssl_cfg.base,
        )?),
    };
    Ok(FittedPipeline {
        method,
        transforms,
        learner,
        trace: None,
    })
}

/// Fits transforms on labeled plus unlabeled rows, then trains.
pub fn fit_pipeline(
    layout: FusionLayout,
    x_lab: &Array2<f64>,
    y_lab: &[u8],
    x_unlab: &Array2<f64>,
    cfg: &PipelineConfig,
) -> Result<FittedPipeline> {
    let all = ndarray::concatenate(Axis(0), &[x_lab.view(), x_unlab.view()])
        .map_err(|e| invalid!("labeled and unlabeled widths differ: {e}"))?;
    let transforms = fit_transforms(layout, &all, cfg, cfg.ssl.base.seed)?;
    fit_with_transforms(cfg.method, transforms, x_lab, y_lab, x_unlab, &cfg.ssl)
}

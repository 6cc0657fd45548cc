//! The experiment grid: every selected (test folds, labeled folds) combo,
//! method and target, run in parallel with deterministic output order.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{LabeledClip, Scale};
use crate::dataio::Modality;
use crate::error::{invalid, Error, Result};
use crate::evaluation::{
    enumerate_combos, macro_f1, predict_at_half, roc_auc, stratified_group_kfold, Combo, ResultRecord, SplitPlan,
};
use crate::features::FeatureTable;
use crate::hpo::{self, HyperParams, ParamsFile, Sampler, SearchSpace, Study, TunedCell};
use crate::pipeline::{self, PipelineConfig, Transforms};
use crate::ssl::{Method, SslConfig};

/// SplitMix64 finalizer; derives independent seeds from structured keys.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fold_salt(folds: &[usize]) -> u64 {
    folds.iter().fold(0xF01D, |acc, &f| mix_seed(acc, f as u64 + 1))
}

/// Feature table joined with labels and a grouped fold plan.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub table: FeatureTable,
    /// Table rows of labeled targeted clips.
    pub labeled_rows: Vec<usize>,
    pub fluidity: Vec<u8>,
    pub enjoyment: Vec<u8>,
    /// Table rows that never carry a label: non-targeted clips and
    /// targeted clips without a label row.
    pub extra_unlabeled: Vec<usize>,
    /// Fold of each entry of `labeled_rows`.
    pub plan: SplitPlan,
}

impl ExperimentData {
    /// Folds are stratified on the fluidity label and grouped by session.
    /// Labels of non-targeted clips are ignored.
    pub fn new(table: FeatureTable, labels: &[LabeledClip], n_folds: usize, seed: u64) -> Result<Self> {
        let index = table.index();
        let mut by_row: BTreeMap<usize, &LabeledClip> = BTreeMap::new();
        for l in labels {
            let &row = index
                .get(l.clip_id.as_str())
                .ok_or_else(|| invalid!("labeled clip {:?} has no feature row", l.clip_id))?;
            if table.kinds[row].is_targeted() {
                by_row.insert(row, l);
            }
        }
        if by_row.is_empty() {
            return Err(invalid!("no targeted clip has a label"));
        }
        let labeled_rows: Vec<usize> = by_row.keys().copied().collect();
        let fluidity: Vec<u8> = by_row.values().map(|l| l.label_fluidity).collect();
        let enjoyment: Vec<u8> = by_row.values().map(|l| l.label_enjoyment).collect();
        let extra_unlabeled = (0..table.len()).filter(|r| !by_row.contains_key(r)).collect();
        let groups: Vec<&str> = labeled_rows.iter().map(|&r| table.session_ids[r].as_str()).collect();
        let plan = stratified_group_kfold(&fluidity, &groups, n_folds, seed)?;
        drop(index);
        Ok(Self {
            table,
            labeled_rows,
            fluidity,
            enjoyment,
            extra_unlabeled,
            plan,
        })
    }

    pub fn labels(&self, target: Scale) -> &[u8] {
        match target {
            Scale::Fluidity => &self.fluidity,
            Scale::Enjoyment => &self.enjoyment,
        }
    }

    /// Table rows and labels of labeled clips in `folds`.
    pub fn fold_rows(&self, folds: &[usize], target: Scale) -> (Vec<usize>, Vec<u8>) {
        let labels = self.labels(target);
        self.plan
            .members_of(folds)
            .into_iter()
            .map(|i| (self.labeled_rows[i], labels[i]))
            .unzip()
    }

    /// Labeled, unlabeled and test rows of one combo.
    pub fn split(&self, combo: &Combo, target: Scale) -> Split {
        let (lab, y_lab) = self.fold_rows(&combo.labeled_folds, target);
        let (test, y_test) = self.fold_rows(&combo.test_folds, target);
        let (mut unlab, _) = self.fold_rows(&combo.unlabeled_folds, target);
        unlab.extend(&self.extra_unlabeled);
        unlab.sort_unstable();
        Split {
            lab,
            y_lab,
            unlab,
            test,
            y_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub lab: Vec<usize>,
    pub y_lab: Vec<u8>,
    pub unlab: Vec<usize>,
    pub test: Vec<usize>,
    pub y_test: Vec<u8>,
}

/// A method run on a modality subset, reported under `label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub method: Method,
    pub modalities: Vec<Modality>,
}

impl Variant {
    pub fn full(method: Method) -> Self {
        Self {
            label: method.as_str().to_string(),
            method,
            modalities: Modality::ALL.to_vec(),
        }
    }

    /// Self-training on each of the seven nonempty modality subsets.
    pub fn ablation_grid() -> Vec<Self> {
        let short = |m: Modality| match m {
            Modality::Audio => "A",
            Modality::Face => "F",
            Modality::Text => "T",
        };
        [
            vec![Modality::Audio],
            vec![Modality::Face],
            vec![Modality::Text],
            vec![Modality::Audio, Modality::Face],
            vec![Modality::Audio, Modality::Text],
            vec![Modality::Face, Modality::Text],
            Modality::ALL.to_vec(),
        ]
        .into_iter()
        .map(|mods| Self {
            label: format!(
                "self:{}",
                mods.iter().map(|&m| short(m)).collect::<Vec<_>>().join("+")
            ),
            method: Method::SelfTraining,
            modalities: mods,
        })
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub variants: Vec<Variant>,
    pub targets: Vec<Scale>,
    pub n_test: usize,
    /// Keep only combos with these labeled-fold counts.
    pub labeled_counts: Option<Vec<usize>>,
    /// Seeded subsample, balanced across labeled-fold counts.
    pub max_combos: Option<usize>,
    pub seed: u64,
    pub jobs: usize,
    /// Pseudo-labeling caps and SGD settings; tuned values override.
    pub ssl: SslConfig,
    pub params: ParamsFile,
}

impl SweepConfig {
    pub fn new(methods: &[Method], seed: u64) -> Self {
        Self {
            variants: methods.iter().map(|&m| Variant::full(m)).collect(),
            targets: Scale::ALL.to_vec(),
            n_test: 2,
            labeled_counts: None,
            max_combos: None,
            seed,
            jobs: 1,
            ssl: SslConfig::default(),
            params: ParamsFile::default(),
        }
    }

    pub fn hyperparams(&self, method: Method, target: Scale, k: usize) -> HyperParams {
        self.params.lookup(method, target.as_str(), k).copied().unwrap_or_default()
    }
}

/// Combos of the sweep: filtered by labeled-fold count, then optionally
/// subsampled round-robin across counts from seeded shuffles. Returned in
/// id order.
pub fn select_combos(n_folds: usize, n_test: usize, labeled_counts: Option<&[usize]>, max: Option<usize>, seed: u64) -> Result<Vec<Combo>> {
    let mut combos = enumerate_combos(n_folds, n_test)?;
    if let Some(ks) = labeled_counts {
        combos.retain(|c| ks.contains(&c.labeled_folds.len()));
    }
    if combos.is_empty() {
        return Err(invalid!("no combos match the requested labeled-fold counts"));
    }
    let Some(max) = max else { return Ok(combos) };
    if max == 0 {
        return Err(invalid!("max_combos must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xC0B0));
    let mut by_k: BTreeMap<usize, Vec<Combo>> = BTreeMap::new();
    for c in combos {
        by_k.entry(c.labeled_folds.len()).or_default().push(c);
    }
    for group in by_k.values_mut() {
        group.shuffle(&mut rng);
        group.reverse();
    }
    let mut picked = Vec::new();
    while picked.len() < max && by_k.values().any(|g| !g.is_empty()) {
        for group in by_k.values_mut() {
            if picked.len() < max {
                if let Some(c) = group.pop() {
                    picked.push(c);
                }
            }
        }
    }
    picked.sort_by_key(|c| c.id);
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub combo_id: usize,
    pub algorithm: String,
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<RunFailure>,
}

/// Fits and scores one variant on one split. `transforms` are fit on all
/// non-test rows, which every combo sharing the test folds has in common.
fn score(
    data: &ExperimentData,
    split: &Split,
    method: Method,
    transforms: Transforms,
    ssl: &SslConfig,
) -> Result<(f64, f64)> {
    let rows = |idx: &[usize]| -> Array2<f64> { data.table.rows(idx) };
    let fitted = pipeline::fit_with_transforms(method, transforms, &rows(&split.lab), &split.y_lab, &rows(&split.unlab), ssl)?;
    let p = fitted.predict_proba(&rows(&split.test))?;
    Ok((roc_auc(&p, &split.y_test)?, macro_f1(&predict_at_half(&p), &split.y_test)?))
}

type CacheKey = (Method, Vec<Modality>, String);

pub fn run_sweep(data: &ExperimentData, cfg: &SweepConfig) -> Result<SweepOutput> {
    if cfg.variants.is_empty() || cfg.targets.is_empty() {
        return Err(invalid!("sweep needs at least one method and one target"));
    }
    cfg.ssl.validate()?;
    let combos = select_combos(data.plan.n_folds, cfg.n_test, cfg.labeled_counts.as_deref(), cfg.max_combos, cfg.seed)?;
    let mut by_test: BTreeMap<Vec<usize>, Vec<&Combo>> = BTreeMap::new();
    for c in &combos {
        by_test.entry(c.test_folds.clone()).or_default().push(c);
    }
    let groups: Vec<(Vec<usize>, Vec<&Combo>)> = by_test.into_iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let results: Vec<Result<SweepOutput>> = pool.install(|| {
        groups
            .par_iter()
            .map(|(test_folds, group)| run_test_group(data, cfg, test_folds, group))
            .collect()
    });
    let mut out = SweepOutput::default();
    for r in results {
        let r = r?;
        out.records.extend(r.records);
        out.failures.extend(r.failures);
    }
    let order: HashMap<&str, usize> = cfg.variants.iter().enumerate().map(|(i, v)| (v.label.as_str(), i)).collect();
    let key = |alg: &str, target: &str| (order[alg], Scale::ALL.iter().position(|s| s.as_str() == target));
    out.records.sort_by(|a, b| {
        (a.combo_id, key(&a.algorithm, &a.target), &a.metric).cmp(&(b.combo_id, key(&b.algorithm, &b.target), &b.metric))
    });
    out.failures.sort_by(|a, b| {
        (a.combo_id, key(&a.algorithm, &a.target)).cmp(&(b.combo_id, key(&b.algorithm, &b.target)))
    });
    Ok(out)
}

fn run_test_group(data: &ExperimentData, cfg: &SweepConfig, test_folds: &[usize], group: &[&Combo]) -> Result<SweepOutput> {
    let mut cache: HashMap<CacheKey, Transforms> = HashMap::new();
    let train_rows: Vec<usize> = {
        let test: std::collections::HashSet<usize> = data
            .plan
            .members_of(test_folds)
            .into_iter()
            .map(|i| data.labeled_rows[i])
            .collect();
        (0..data.table.len()).filter(|r| !test.contains(r)).collect()
    };
    let transform_seed = mix_seed(cfg.seed, fold_salt(test_folds));
    let mut out = SweepOutput::default();
    for combo in group {
        let k = combo.labeled_folds.len();
        let fraction = k as f64 / data.plan.n_folds as f64;
        let run_seed = mix_seed(cfg.seed, combo.id as u64);
        for variant in &cfg.variants {
            for &target in &cfg.targets {
                let hp = cfg.hyperparams(variant.method, target, k);
                let mut ssl = hp.apply(&cfg.ssl);
                ssl.base.seed = run_seed;
                let pcfg = PipelineConfig {
                    method: variant.method,
                    retention: hp.retention,
                    ssl,
                    modalities: variant.modalities.clone(),
                };
                let key: CacheKey = (variant.method, variant.modalities.clone(), format!("{:?}", hp.retention));
                let outcome = (|| -> Result<(f64, f64)> {
                    let transforms = match cache.get(&key) {
                        Some(t) => t.clone(),
                        None => {
                            let t = pipeline::fit_transforms(
                                data.table.layout,
                                &data.table.rows(&train_rows),
                                &pcfg,
                                transform_seed,
                            )?;
                            cache.insert(key.clone(), t.clone());
                            t
                        }
                    };
                    score(data, &data.split(combo, target), variant.method, transforms, &pcfg.ssl)
                })();
                match outcome {
                    Ok((auc, f1)) => {
                        for (metric, value) in [("roc_auc", auc), ("macro_f1", f1)] {
                            out.records.push(ResultRecord {
                                combo_id: combo.id,
                                test_folds: Combo::describe(&combo.test_folds),
                                labeled_folds: Combo::describe(&combo.labeled_folds),
                                n_labeled_folds: k,
                                labeled_fraction: fraction,
                                algorithm: variant.label.clone(),
                                target: target.as_str().to_string(),
                                metric: metric.to_string(),
                                value,
                                seed: run_seed,
                            });
                        }
                    }
                    Err(e) => out.failures.push(RunFailure {
                        combo_id: combo.id,
                        algorithm: variant.label.clone(),
                        target: target.as_str().to_string(),
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub trials: usize,
    pub sampler: Sampler,
    pub seed: u64,
    /// Repetitions of the 80/20 split when only one fold is labeled.
    pub inner_repeats: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            sampler: Sampler::Tpe(hpo::TpeConfig::default()),
            seed: 0,
            inner_repeats: 5,
        }
    }
}

/// Inner validation splits of one combo's labeled folds: the last labeled
/// fold held out when there are two or more, otherwise repeated stratified
/// 80/20 splits of the single fold. Entries are (train, validation) table
/// rows with labels.
pub fn inner_splits(data: &ExperimentData, combo: &Combo, target: Scale, repeats: usize, seed: u64) -> Vec<Split> {
    let unlab_base = data.split(combo, target).unlab;
    if combo.labeled_folds.len() >= 2 {
        let (train_folds, val) = combo.labeled_folds.split_at(combo.labeled_folds.len() - 1);
        let (lab, y_lab) = data.fold_rows(train_folds, target);
        let (test, y_test) = data.fold_rows(val, target);
        return vec![Split {
            lab,
            y_lab,
            unlab: unlab_base,
            test,
            y_test,
        }];
    }
    let (rows, y) = data.fold_rows(&combo.labeled_folds, target);
    (0..repeats.max(1))
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, rep as u64));
            let mut val_mask = vec![false; rows.len()];
            for class in [0u8, 1] {
                let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| y[i] == class).collect();
                idx.shuffle(&mut rng);
                let n_val = (idx.len() as f64 * 0.2).round() as usize;
                for &i in &idx[..n_val.min(idx.len())] {
                    val_mask[i] = true;
                }
            }
            let pick = |want: bool| -> (Vec<usize>, Vec<u8>) {
                (0..rows.len()).filter(|&i| val_mask[i] == want).map(|i| (rows[i], y[i])).unzip()
            };
            let (lab, y_lab) = pick(false);
            let (test, y_test) = pick(true);
            Split {
                lab,
                y_lab,
                unlab: unlab_base.clone(),
                test,
                y_test,
            }
        })
        .collect()
}

/// The combo a cell is tuned on: the first enumerated combo with `k`
/// labeled folds (test folds 0 and 1).
pub fn reference_combo(n_folds: usize, n_test: usize, k: usize) -> Result<Combo> {
    enumerate_combos(n_folds, n_test)?
        .into_iter()
        .find(|c| c.labeled_folds.len() == k)
        .ok_or_else(|| invalid!("no combo has {k} labeled folds"))
}

/// Mean validation ROC-AUC of `hp` over the inner splits.
pub fn validation_auc(data: &ExperimentData, splits: &[Split], variant: &Variant, hp: &HyperParams, base: &SslConfig, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, s) in splits.iter().enumerate() {
        let mut ssl = hp.apply(base);
        ssl.base.seed = mix_seed(seed, i as u64);
        let cfg = PipelineConfig {
            method: variant.method,
            retention: hp.retention,
            ssl,
            modalities: variant.modalities.clone(),
        };
        let fitted = pipeline::fit_pipeline(
            data.table.layout,
            &data.table.rows(&s.lab),
            &s.y_lab,
            &data.table.rows(&s.unlab),
            &cfg,
        )?;
        let p = fitted.predict_proba(&data.table.rows(&s.test))?;
        total += roc_auc(&p, &s.y_test)?;
    }
    Ok(total / splits.len() as f64)
}

/// One study for a (method, target, labeled-fold count) cell.
pub fn tune_cell(
    data: &ExperimentData,
    variant: &Variant,
    target: Scale,
    k: usize,
    base: &SslConfig,
    tcfg: &TuneConfig,
) -> Result<(TunedCell, Study)> {
    let cell_seed = mix_seed(
        mix_seed(tcfg.seed, variant.method as u64 + 1),
        (k as u64) << 8 | target as u64,
    );
    let combo = reference_combo(data.plan.n_folds, 2, k)?;
    let splits = inner_splits(data, &combo, target, tcfg.inner_repeats, cell_seed);
    let space = SearchSpace::for_method(variant.method);
    let study = hpo::optimize(&space, tcfg.trials, cell_seed, tcfg.sampler, |a| {
        let hp = HyperParams::from_assignment(a).map_err(|e| e.to_string())?;
        validation_auc(data, &splits, variant, &hp, base, cell_seed).map_err(|e| e.to_string())
    })?;
    let best = study.best_trial();
    let params = match best {
        Some(t) => HyperParams::from_assignment(&t.params)?,
        None => HyperParams::default(),
    };
    Ok((
        TunedCell {
            method: variant.method,
            target: target.as_str().to_string(),
            n_labeled_folds: k,
            params,
            objective: best.and_then(|t| t.objective),
        },
        study,
    ))
}

/// Independent studies for every requested cell, run in parallel.
pub fn tune_cells(
    data: &ExperimentData,
    methods: &[Method],
    targets: &[Scale],
    ks: &[usize],
    base: &SslConfig,
    tcfg: &TuneConfig,
    jobs: usize,
) -> Result<(ParamsFile, Vec<Study>)> {
    let cells: Vec<(Method, Scale, usize)> = methods
        .iter()
        .flat_map(|&m| targets.iter().flat_map(move |&t| ks.iter().map(move |&k| (m, t, k))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<(TunedCell, Study)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, t, k)| tune_cell(data, &Variant::full(m), t, k, base, tcfg))
            .collect()
    });
    let mut file = ParamsFile::default();
    let mut studies = Vec::new();
    for r in results {
        let (cell, study) = r?;
        file.insert(cell);
        studies.push(study);
    }
    Ok((file, studies))
}

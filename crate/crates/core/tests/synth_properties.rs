//! Properties of generated datasets that the experiment design relies on.

use std::collections::BTreeSet;

use fluidlab::annotation::Scale;
use fluidlab::ssl::Method;
use fluidlab::sweep::{run_sweep, ExperimentData, SweepConfig};
use fluidlab::synthgen::{generate, SynthConfig};

/// Mean holdout AUC per algorithm over `combos` combos with all
/// non-test folds labeled.
fn full_label_auc(cfg: &SynthConfig, methods: &[Method], combos: usize) -> Vec<(String, f64)> {
    let ds = generate(cfg).unwrap();
    let data = ExperimentData::new(ds.table, &ds.labels, 10, cfg.seed).unwrap();
    let mut sweep = SweepConfig::new(methods, cfg.seed);
    sweep.targets = vec![Scale::Fluidity];
    sweep.labeled_counts = Some(vec![8]);
    sweep.max_combos = Some(combos);
    let out = run_sweep(&data, &sweep).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    methods
        .iter()
        .map(|m| {
            let v: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.algorithm == m.as_str() && r.metric == "roc_auc")
                .map(|r| r.value)
                .collect();
            assert_eq!(v.len(), combos);
            (m.as_str().to_string(), v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect()
}

#[test]
fn no_separation_means_chance_auc() {
    let mut sums = vec![0.0; Method::ALL.len()];
    let seeds = 20;
    for seed in 0..seeds {
        let cfg = SynthConfig {
            cluster_separation: 0.0,
            seed,
            ..SynthConfig::ssl_advantage()
        };
        for (i, (_, auc)) in full_label_auc(&cfg, &Method::ALL, 1).into_iter().enumerate() {
            sums[i] += auc;
        }
    }
    for (m, s) in Method::ALL.iter().zip(sums) {
        let mean = s / seeds as f64;
        assert!((0.4..=0.6).contains(&mean), "{m}: mean AUC {mean}");
    }
}

#[test]
fn wide_separation_is_nearly_perfect_with_full_labels() {
    let cfg = SynthConfig {
        cluster_separation: 6.0,
        ..SynthConfig::ssl_advantage()
    };
    let (_, auc) = &full_label_auc(&cfg, &[Method::Supervised], 5)[0];
    assert!(*auc > 0.95, "AUC {auc}");
}

#[test]
fn auc_grows_with_separation() {
    let aucs: Vec<f64> = [0.0, 1.0, 2.0, 3.0, 4.5, 6.0]
        .iter()
        .map(|&sep| {
            let cfg = SynthConfig {
                cluster_separation: sep,
                ..SynthConfig::ssl_advantage()
            };
            full_label_auc(&cfg, &[Method::Supervised], 10)[0].1
        })
        .collect();
    for w in aucs.windows(2) {
        assert!(w[1] >= w[0], "not monotone: {aucs:?}");
    }
}

#[test]
fn paper_scale_positive_count() {
    let cfg = SynthConfig::paper_scale();
    let ds = generate(&cfg).unwrap();
    let targeted: BTreeSet<&str> = ds
        .manifest
        .iter()
        .filter(|c| c.kind.is_targeted())
        .map(|c| c.clip_id.as_str())
        .collect();
    assert_eq!(targeted.len(), 3000);
    let positives = ds
        .labels
        .iter()
        .filter(|l| targeted.contains(l.clip_id.as_str()) && l.label_fluidity == 1)
        .count();
    assert!((210..=270).contains(&positives), "{positives} positives");
}

#[test]
fn thirty_sessions_give_two_to_four_per_fold() {
    for seed in 0..5 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::ssl_advantage()
        };
        let ds = generate(&cfg).unwrap();
        let data = ExperimentData::new(ds.table, &ds.labels, 10, seed).unwrap();
        for f in 0..10 {
            let sessions: BTreeSet<&str> = data
                .plan
                .fold_members(f)
                .into_iter()
                .map(|i| data.table.session_ids[data.labeled_rows[i]].as_str())
                .collect();
            assert!((2..=4).contains(&sessions.len()), "seed {seed} fold {f}: {} sessions", sessions.len());
        }
    }
}

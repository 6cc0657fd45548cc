//! `fluidlab`: segmentation, labeling, featurization, training, sweeps and
//! reports from one binary.

mod config;
mod record;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fluidlab::annotation::{self, AnnotationSet, Scale};
use fluidlab::dataio::{self, ClipKind};
use fluidlab::evaluation::{macro_f1, predict_at_half, roc_auc, Combo};
use fluidlab::features::{self, FusionLayout, Retention};
use fluidlab::hpo::{ParamsFile, Sampler, TpeConfig};
use fluidlab::linear::{Loss, Penalty};
use fluidlab::pipeline::{self, PipelineConfig};
use fluidlab::segmentation::{self, SegmentationConfig};
use fluidlab::ssl::{Criterion, Method, SslConfig};
use fluidlab::sweep::{self, ExperimentData, SweepConfig, TuneConfig, Variant};
use fluidlab::synthgen::{self, AudioSynthConfig, SynthConfig};
use record::Recorder;

#[derive(Parser, Debug)]
#[command(name = "fluidlab", version, about = "Semi-supervised detection of low-fluidity and low-enjoyment moments in videoconference recordings")]
struct Cli {
    /// TOML file of default flag values (top-level keys and a table per subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random choice.
    #[arg(long, global = true, env = "FLUIDLAB_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cut targeted and non-targeted clips from per-speaker WAV tracks.
    Segment(SegmentArgs),
    /// Filter annotators and binarize ratings into labels.
    Annotate(AnnotateArgs),
    /// Pool per-modality embeddings into fused feature rows.
    Featurize(FeaturizeArgs),
    /// Write a synthetic dataset with known labels.
    Synth(SynthArgs),
    /// Tune hyperparameters per (method, target, labeled-fold count).
    Tune(TuneArgs),
    /// Train one model on one split and score the held-out folds.
    Train(TrainArgs),
    /// Run methods over train/test combinations.
    Sweep(SweepArgs),
    /// Run self-training on every modality combination.
    Ablate(AblateArgs),
    /// Aggregate results into CSV tables and SVG charts.
    Report(ReportArgs),
}

const SUBCOMMANDS: [&str; 9] = ["segment", "annotate", "featurize", "synth", "tune", "train", "sweep", "ablate", "report"];

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Directory of one session's WAV tracks, or of session subdirectories.
    #[arg(long)]
    audio_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    rms_threshold: f64,
    #[arg(long, default_value_t = 0.75)]
    min_gap: f64,
    #[arg(long, default_value_t = 0.05)]
    frame_len: f64,
    #[arg(long, default_value_t = 0.01)]
    hop: f64,
    #[arg(long, default_value_t = 3.0)]
    pre: f64,
    #[arg(long, default_value_t = 4.0)]
    post: f64,
    #[arg(long, default_value_t = 10.0)]
    edge_exclusion: f64,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Clip ids (one per line) rated by every annotator for reliability;
    /// defaults to the clips every annotator rated.
    #[arg(long)]
    reliability_clips: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Minimum correlation with the other annotators.
    #[arg(long, default_value_t = 0.2)]
    r_min: f64,
    /// Means strictly below this are labeled low (1).
    #[arg(long, default_value_t = 2.5)]
    threshold: f64,
    #[arg(long, default_value_t = 4)]
    min_annotators: usize,
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    audio_dims: usize,
    #[arg(long, default_value_t = 17)]
    face_units: usize,
    #[arg(long, default_value_t = 384)]
    text_dims: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// paper-scale or ssl-advantage.
    #[arg(long, default_value = "ssl-advantage")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    clips_per_session: Option<usize>,
    #[arg(long)]
    unlabeled_per_session: Option<usize>,
    #[arg(long)]
    positive_rate: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    redundancy: Option<f64>,
    /// Also write this many scripted multi-speaker audio sessions.
    #[arg(long, default_value_t = 0)]
    audio_sessions: usize,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Methods to tune: sl, self, cotrain-split, cotrain-fused.
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_values = ["fluidity", "enjoyment"])]
    targets: Vec<Scale>,
    /// Labeled-fold counts to tune.
    #[arg(long, value_delimiter = ',', default_values = ["1", "2", "3", "4", "5", "6", "7", "8"])]
    labeled_counts: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// tpe or random.
    #[arg(long, default_value = "tpe")]
    sampler: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HyperArgs {
    /// Tuned parameters from `fluidlab tune`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Pseudo-labeling rounds.
    #[arg(long, default_value_t = 10)]
    max_iters: usize,
    /// Pseudo-labels per round for k_best.
    #[arg(long, default_value_t = 10)]
    k_best: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value = "fluidity")]
    target: Scale,
    #[arg(long, value_delimiter = ',', default_values = ["0", "1"])]
    test_folds: Vec<usize>,
    /// Number of labeled folds, taken in order from the non-test folds.
    #[arg(long, default_value_t = 1)]
    labeled_folds: usize,
    /// Retained PCA variance in [0.2, 1] or "off".
    #[arg(long)]
    pca: Option<String>,
    #[arg(long)]
    loss: Option<Loss>,
    #[arg(long)]
    penalty: Option<Penalty>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    criterion: Option<Criterion>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Model file; the pseudo-label trace goes to `<out>.trace.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, value_delimiter = ',', default_values = ["fluidity", "enjoyment"])]
    targets: Vec<Scale>,
    /// Only combos with these labeled-fold counts.
    #[arg(long, value_delimiter = ',')]
    labeled_counts: Option<Vec<usize>>,
    /// Seeded subsample of combos, balanced across labeled-fold counts.
    #[arg(long)]
    max_combos: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values = ["sl", "self", "cotrain-split", "cotrain-fused"])]
    methods: Vec<Method>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_retention(s: &str) -> Result<Retention> {
    let r = if s == "off" {
        Retention::Off
    } else {
        let f: f64 = s.parse().map_err(|_| anyhow!(fluidlab::Error::InvalidConfig(format!("--pca expects off or a fraction, got {s:?}"))))?;
        Retention::Fraction(f)
    };
    r.validate()?;
    Ok(r)
}

fn load_params(path: Option<&Path>) -> Result<ParamsFile> {
    let Some(p) = path else { return Ok(ParamsFile::default()) };
    let text = fs::read_to_string(p).with_context(|| format!("{}: cannot read params", p.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow!(fluidlab::Error::InvalidInput(format!("{}: {e}", p.display()))))
}

fn load_data(d: &DataArgs, seed: u64) -> Result<ExperimentData> {
    let table = dataio::read_features(&d.features)?;
    let labels = dataio::read_labels(&d.labels)?;
    Ok(ExperimentData::new(table, &labels, d.folds, seed)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("{}: cannot create", parent.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("{}: cannot write", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("{}: cannot create", parent.display()))?;
    }
    Ok(())
}

fn ssl_base(h: &HyperArgs) -> SslConfig {
    SslConfig {
        max_iters: h.max_iters,
        k_best: h.k_best,
        ..SslConfig::default()
    }
}

fn cmd_segment(a: &SegmentArgs, rec: &Recorder) -> Result<()> {
    let cfg = SegmentationConfig {
        rms_threshold: a.rms_threshold,
        min_gap: a.min_gap,
        pre: a.pre,
        post: a.post,
        edge_exclusion: a.edge_exclusion,
        frame_len: a.frame_len,
        hop: a.hop,
    };
    cfg.validate()?;
    let entries: Vec<PathBuf> = fs::read_dir(&a.audio_dir)
        .with_context(|| format!("{}: cannot list audio directory", a.audio_dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    let has_wav = entries.iter().any(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")));
    let mut sessions: Vec<PathBuf> = if has_wav {
        vec![a.audio_dir.clone()]
    } else {
        entries.into_iter().filter(|p| p.is_dir()).collect()
    };
    sessions.sort();
    if sessions.is_empty() {
        bail!(fluidlab::Error::InvalidInput(format!("{}: no WAV files or session directories", a.audio_dir.display())));
    }
    let mut clips = Vec::new();
    for dir in &sessions {
        let audio = dataio::read_session_audio(dir)?;
        let found = segmentation::segment_session(&audio, &cfg)?;
        let count = |k: ClipKind| found.iter().filter(|c| c.kind == k).count();
        eprintln!(
            "{}: {} gap, {} overlap, {} non-targeted clips",
            audio.session_id,
            count(ClipKind::TargetedGap),
            count(ClipKind::TargetedOverlap),
            count(ClipKind::NonTargeted)
        );
        clips.extend(found);
    }
    ensure_parent(&a.out)?;
    dataio::write_manifest(&clips, &a.out)?;
    rec.finish(&[&a.audio_dir], std::slice::from_ref(&a.out), &a.out)?;
    Ok(())
}

fn cmd_annotate(a: &AnnotateArgs, rec: &Recorder) -> Result<()> {
    let rows = dataio::read_annotations(&a.annotations)?;
    let reliability: Vec<String> = match &a.reliability_clips {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("{}: cannot read", p.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => {
            let annotators: BTreeSet<&str> = rows.iter().map(|r| r.annotator_id.as_str()).collect();
            let mut per_clip: std::collections::BTreeMap<&str, BTreeSet<&str>> = Default::default();
            for r in &rows {
                per_clip.entry(&r.clip_id).or_default().insert(&r.annotator_id);
            }
            per_clip
                .into_iter()
                .filter(|(_, who)| who.len() == annotators.len())
                .map(|(c, _)| c.to_string())
                .collect()
        }
    };
    let set = AnnotationSet::from_rows(&rows, reliability)?;
    let scores = annotation::reliability_scores(&set);
    let kept = annotation::filter_annotators(&set, a.r_min);
    for (who, r) in &scores {
        let status = if kept.annotators().contains(who.as_str()) { "kept" } else { "removed" };
        match r {
            Some(r) => eprintln!("annotator {who}: r = {r:.3} ({status})"),
            None => eprintln!("annotator {who}: no score ({status})"),
        }
    }
    let labels = annotation::aggregate_and_binarize(&kept, a.threshold, a.min_annotators);
    let table = annotation::label_table(&labels);
    eprintln!("labels: {} clips; enjoyment x fluidity table {:?}", labels.len(), table);
    if let Ok(chi) = annotation::contingency_chi2(table) {
        eprintln!("chi2 = {:.2}, p = {:.3e}", chi.chi2, chi.p_value);
    }
    ensure_parent(&a.out)?;
    dataio::write_labels(&labels, &a.out)?;
    let mut inputs: Vec<&Path> = vec![&a.annotations];
    if let Some(p) = &a.reliability_clips {
        inputs.push(p);
    }
    rec.finish(&inputs, std::slice::from_ref(&a.out), &a.out)?;
    Ok(())
}

fn cmd_featurize(a: &FeaturizeArgs, rec: &Recorder) -> Result<()> {
    let manifest = dataio::read_manifest(&a.manifest)?;
    let records = dataio::read_embeddings(&a.embeddings)?;
    let layout = FusionLayout::from_dims(a.audio_dims, a.face_units, a.text_dims);
    let table = features::build_feature_table(&manifest, &records, layout)?;
    ensure_parent(&a.out)?;
    dataio::write_features(&table, &a.out)?;
    rec.finish(&[&a.manifest, &a.embeddings], std::slice::from_ref(&a.out), &a.out)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64, rec: &Recorder) -> Result<()> {
    let mut cfg = SynthConfig::preset(&a.preset)?;
    cfg.seed = seed;
    if let Some(v) = a.sessions {
        cfg.n_sessions = v;
    }
    if let Some(v) = a.clips_per_session {
        cfg.clips_per_session = v;
    }
    if let Some(v) = a.unlabeled_per_session {
        cfg.unlabeled_per_session = v;
    }
    if let Some(v) = a.positive_rate {
        cfg.positive_rate = v;
    }
    if let Some(v) = a.separation {
        cfg.cluster_separation = v;
    }
    if let Some(v) = a.redundancy {
        cfg.view_redundancy = v;
    }
    let data = synthgen::generate(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("{}: cannot create", a.out.display()))?;
    let mut outputs = vec![a.out.join("features.csv"), a.out.join("labels.csv"), a.out.join("manifest.jsonl"), a.out.join("truth.json")];
    dataio::write_features(&data.table, &outputs[0])?;
    dataio::write_labels(&data.labels, &outputs[1])?;
    dataio::write_manifest(&data.manifest, &outputs[2])?;
    write_json(&outputs[3], &serde_json::json!({ "config": cfg, "truth": data.truth }))?;
    for s in 0..a.audio_sessions {
        let sid = format!("audio{s:02}");
        let script = synthgen::random_script(120.0, 3, seed.wrapping_add(s as u64));
        let audio = synthgen::synth_audio_session(&sid, &script, &AudioSynthConfig { seed: seed.wrapping_add(s as u64), ..Default::default() })?;
        let dir = a.out.join("audio").join(&sid);
        dataio::write_session_audio(&audio, &dir)?;
        write_json(&dir.join("script.json"), &script)?;
        outputs.push(dir);
    }
    eprintln!(
        "{} clips ({} labeled, {} low fluidity)",
        data.table.len(),
        data.labels.len(),
        data.labels.iter().filter(|l| l.label_fluidity == 1).count()
    );
    rec.finish(&[], &outputs, &a.out)?;
    Ok(())
}

fn cmd_tune(a: &TuneArgs, seed: u64, rec: &Recorder) -> Result<()> {
    let data = load_data(&a.data, seed)?;
    let sampler = match a.sampler.as_str() {
        "tpe" => Sampler::Tpe(TpeConfig::default()),
        "random" => Sampler::Random,
        other => bail!(fluidlab::Error::InvalidConfig(format!("--sampler must be tpe or random, got {other:?}"))),
    };
    if a.trials == 0 {
        bail!(fluidlab::Error::InvalidConfig("--trials must be >= 1".into()));
    }
    if let Some(&k) = a.labeled_counts.iter().find(|&&k| k == 0 || k > a.data.folds.saturating_sub(2)) {
        bail!(fluidlab::Error::InvalidConfig(format!("--labeled-counts: {k} is outside 1..={}", a.data.folds.saturating_sub(2))));
    }
    let tcfg = TuneConfig {
        trials: a.trials,
        sampler,
        seed,
        ..TuneConfig::default()
    };
    let (file, studies) = sweep::tune_cells(&data, &a.method, &a.targets, &a.labeled_counts, &SslConfig::default(), &tcfg, a.jobs)?;
    for c in &file.cells {
        eprintln!(
            "{} {} k={}: validation AUC {}",
            c.method,
            c.target,
            c.n_labeled_folds,
            c.objective.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    write_json(&a.out, &file)?;
    let trials = sibling(&a.out, ".trials.json");
    write_json(&trials, &studies)?;
    rec.finish(&[&a.data.features, &a.data.labels], &[a.out.clone(), trials], &a.out)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, seed: u64, rec: &Recorder) -> Result<()> {
    let data = load_data(&a.data, seed)?;
    let n = a.data.folds;
    let mut test = a.test_folds.clone();
    test.sort_unstable();
    test.dedup();
    if test.is_empty() || test.iter().any(|&f| f >= n) || test.len() >= n {
        bail!(fluidlab::Error::InvalidConfig(format!("--test-folds must name 1..{} distinct folds below {n}", n - 1)));
    }
    let rest: Vec<usize> = (0..n).filter(|f| !test.contains(f)).collect();
    if a.labeled_folds == 0 || a.labeled_folds > rest.len() {
        bail!(fluidlab::Error::InvalidConfig(format!("--labeled-folds must lie in 1..={}", rest.len())));
    }
    let combo = Combo {
        id: 0,
        test_folds: test,
        labeled_folds: rest[..a.labeled_folds].to_vec(),
        unlabeled_folds: rest[a.labeled_folds..].to_vec(),
    };
    let params = load_params(a.hyper.params.as_deref())?;
    let mut hp = params
        .lookup(a.method, a.target.as_str(), a.labeled_folds)
        .copied()
        .unwrap_or_default();
    if let Some(p) = &a.pca {
        hp.retention = parse_retention(p)?;
    }
    if let Some(v) = a.loss {
        hp.loss = v;
    }
    if let Some(v) = a.penalty {
        hp.penalty = v;
    }
    if let Some(v) = a.alpha {
        hp.alpha = v;
    }
    if let Some(v) = a.criterion {
        hp.criterion = v;
    }
    if let Some(v) = a.threshold {
        hp.threshold = v;
    }
    let mut ssl = hp.apply(&ssl_base(&a.hyper));
    ssl.base.seed = seed;
    ssl.validate()?;
    let split = data.split(&combo, a.target);
    let cfg = PipelineConfig::new(a.method, hp.retention, ssl);
    let fitted = pipeline::fit_pipeline(
        data.table.layout,
        &data.table.rows(&split.lab),
        &split.y_lab,
        &data.table.rows(&split.unlab),
        &cfg,
    )?;
    let p = fitted.predict_proba(&data.table.rows(&split.test))?;
    let auc = roc_auc(&p, &split.y_test)?;
    let f1 = macro_f1(&predict_at_half(&p), &split.y_test)?;
    println!("roc_auc {auc:.6}\nmacro_f1 {f1:.6}");
    let trace = sibling(&a.out, ".trace.json");
    write_json(
        &a.out,
        &serde_json::json!({
            "method": a.method,
            "target": a.target,
            "combo": combo,
            "hyperparams": hp,
            "metrics": { "roc_auc": auc, "macro_f1": f1 },
            "transforms": fitted.transforms,
            "learner": fitted.learner,
        }),
    )?;
    write_json(&trace, &fitted.trace)?;
    let mut inputs: Vec<&Path> = vec![&a.data.features, &a.data.labels];
    if let Some(p) = &a.hyper.params {
        inputs.push(p);
    }
    rec.finish(&inputs, &[a.out.clone(), trace], &a.out)?;
    Ok(())
}

fn run_grid(g: &GridArgs, variants: Vec<Variant>, seed: u64, rec: &Recorder) -> Result<()> {
    let data = load_data(&g.data, seed)?;
    let cfg = SweepConfig {
        variants,
        targets: g.targets.clone(),
        n_test: 2,
        labeled_counts: g.labeled_counts.clone(),
        max_combos: g.max_combos,
        seed,
        jobs: g.jobs,
        ssl: ssl_base(&g.hyper),
        params: load_params(g.hyper.params.as_deref())?,
    };
    let out = sweep::run_sweep(&data, &cfg)?;
    ensure_parent(&g.out)?;
    dataio::write_results(&out.records, &g.out)?;
    let mut outputs = vec![g.out.clone()];
    if !out.failures.is_empty() {
        eprintln!("{} runs failed; see the failures file", out.failures.len());
        let f = sibling(&g.out, ".failures.json");
        write_json(&f, &out.failures)?;
        outputs.push(f);
    }
    eprintln!("{} result rows", out.records.len());
    let mut inputs: Vec<&Path> = vec![&g.data.features, &g.data.labels];
    if let Some(p) = &g.hyper.params {
        inputs.push(p);
    }
    rec.finish(&inputs, &outputs, &g.out)?;
    Ok(())
}

fn cmd_report(a: &ReportArgs, rec: &Recorder) -> Result<()> {
    let records = dataio::read_results(&a.results)?;
    let files = fluidlab::report::write_report(&records, &a.out)?;
    let outputs: Vec<PathBuf> = files.all().into_iter().map(Path::to_path_buf).collect();
    rec.finish(&[&a.results], &outputs, &a.out)?;
    Ok(())
}

fn run(cli: Cli, rec: Recorder) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Segment(a) => cmd_segment(a, &rec),
        Command::Annotate(a) => cmd_annotate(a, &rec),
        Command::Featurize(a) => cmd_featurize(a, &rec),
        Command::Synth(a) => cmd_synth(a, seed, &rec),
        Command::Tune(a) => cmd_tune(a, seed, &rec),
        Command::Train(a) => cmd_train(a, seed, &rec),
        Command::Sweep(a) => run_grid(&a.grid, a.methods.iter().map(|&m| Variant::full(m)).collect(), seed, &rec),
        Command::Ablate(a) => run_grid(&a.grid, Variant::ablation_grid(), seed, &rec),
        Command::Report(a) => cmd_report(a, &rec),
    }
}

/// 1 for bad inputs or configuration, 2 for internal failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fluidlab::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let started = Instant::now();
    let argv: Vec<OsString> = std::env::args_os().collect();
    let loaded = match config::apply(argv, &SUBCOMMANDS) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(&loaded.argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let subcommand = loaded
        .argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| SUBCOMMANDS.contains(&a.as_str()))
        .unwrap_or_default();
    let rec = Recorder {
        command_line: std::env::args().collect(),
        subcommand,
        config_path: loaded.path,
        config_bytes: loaded.bytes,
        seed: cli.seed,
        started,
    };
    match run(cli, rec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

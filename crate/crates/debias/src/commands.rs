//! Subcommand implementations over a run directory:
//!
//! ```text
//! <out>/manifest.csv              subject metadata
//! <out>/clips/S00000.wav          one clip per subject
//! <out>/splits/<bias>.json        split descriptor (subject ids)
//! <out>/models/<bias>/<model>/    final.ckpt, best.ckpt, log.csv
//! <out>/reports/                  comparison and ablation tables
//! <out>/cache/                    spectrogram cache, unless DEBIAS_CACHE_DIR is set
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use debias_core::dataset::{build_biased_split, kfold_partitions, BiasKind, Label, SplitSpec, SubjectRecord};
use debias_core::eval::{
    evaluate, run_ablation, run_cross_validation, ComparisonRow, ComparisonTable, Condition, EvalKind,
};
use debias_core::model::{self, BaselineKind, Example, RbfNetModel, TrainConfig, TrainOutcome};
use debias_core::neural::{fragments, GradCheckConfig};
use debias_core::spectrogram::StftConfig;
use debias_core::synth::{plan_corpus, synthesize_subject, Demographics, age_bin_range, AGE_BINS};
use serde::{Deserialize, Serialize};

use crate::cache::SpectrogramCache;
use crate::checkpoint;
use crate::config::{describe_train, ExperimentConfig};
use crate::error::{AppError, AppResult};
use crate::fsutil::{create_dir, write_atomic};
use crate::manifest::{read_manifest, write_manifest};
use crate::pipeline::prepare_clip;
use crate::report;
use crate::wav::{load_wav, write_wav};

/// Folds of the partition whose first fold validates `train` runs.
pub const VALIDATION_FOLDS: usize = 10;

/// Training conditions compared by `ablate`.
pub const ABLATION_CONDITIONS: [BiasKind; 4] =
    [BiasKind::Unbiased, BiasKind::Gender, BiasKind::AgeGroup1, BiasKind::Smoking];

#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    pub fn clip(&self, record: &SubjectRecord) -> PathBuf {
        self.root.join(&record.clip_path)
    }

    pub fn split(&self, kind: BiasKind) -> PathBuf {
        self.root.join("splits").join(format!("{}.json", kind.as_str()))
    }

    pub fn model_dir(&self, bias: BiasKind, model: BaselineKind) -> PathBuf {
        self.root.join("models").join(bias.as_str()).join(model.as_str())
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn cache(&self) -> SpectrogramCache {
        SpectrogramCache::from_env(&self.root.join("cache"))
    }
}

/// Split membership on disk, by subject id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDescriptor {
    pub bias_kind: String,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub skew: f64,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitDescriptor {
    pub fn save(&self, path: &Path) -> AppResult<()> {
        let text = serde_json::to_string_pretty(self).expect("descriptor serializes");
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::malformed(path, e.to_string()))
    }
}

pub fn cmd_synth(cfg: &ExperimentConfig, layout: &Layout) -> AppResult<String> {
    let (spec, demographics) = cfg.synthesis()?;
    let plan = plan_corpus(&spec, &demographics)?;
    create_dir(&layout.root)?;
    let mut records = Vec::with_capacity(plan.len());
    for p in plan {
        let (record, clip) = synthesize_subject(p.record.profile, p.record.label.is_diseased(), &spec, p.index);
        let path = layout.clip(&record);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_wav(&path, &clip)?;
        records.push(record);
    }
    write_manifest(&layout.manifest(), &records)?;
    Ok(corpus_summary(&records))
}

/// Per-class counts by gender, smoking status and age decade.
pub fn corpus_summary(records: &[SubjectRecord]) -> String {
    let mut out = String::new();
    for label in [Label::Diseased, Label::Normal] {
        let entries: Vec<_> = records.iter().filter(|r| r.label == label).map(|r| (r.profile, 1)).collect();
        let h = Demographics::histogram(&entries);
        let _ = writeln!(out, "{} ({} subjects)", label.as_str(), entries.len());
        let bins: Vec<String> = (0..AGE_BINS)
            .map(|b| {
                let (lo, hi) = age_bin_range(b);
                format!("{:>7}", format!("{lo}-{hi}"))
            })
            .collect();
        let _ = writeln!(out, "  {:<20}{}", "", bins.join(""));
        for (g, gname) in ["male", "female"].iter().enumerate() {
            for (s, sname) in ["smoker", "non_smoker"].iter().enumerate() {
                let counts: String = h[g][s].iter().map(|c| format!("{c:>7}")).collect();
                let _ = writeln!(out, "  {:<20}{counts}", format!("{gname} {sname}"));
            }
        }
    }
    out
}

/// Loads and prepares every clip, keeping records whose clip survives
/// trimming and the duration filter. Spectrograms at `size` are cached on
/// the way, so later commands skip the DSP.
pub fn usable_records(
    layout: &Layout,
    records: &[SubjectRecord],
    stft: &StftConfig,
    size: usize,
) -> AppResult<Vec<SubjectRecord>> {
    let cache = layout.cache();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if let Some(clip) = prepare_clip(&load_wav(&layout.clip(r))?)? {
            cache.inputs(&clip, stft, &[size])?;
            out.push(r.clone());
        }
    }
    Ok(out)
}

/// Model inputs for `records`, from the cache where possible.
pub fn load_examples(
    layout: &Layout,
    records: &[SubjectRecord],
    stft: &StftConfig,
    size: usize,
) -> AppResult<Vec<Example>> {
    let cache = layout.cache();
    records
        .iter()
        .map(|r| {
            let path = layout.clip(r);
            let clip = prepare_clip(&load_wav(&path)?)?
                .ok_or_else(|| AppError::malformed(&path, "clip fails the duration filter"))?;
            let input = cache.inputs(&clip, stft, &[size])?.remove(0);
            Ok(Example { input, label: r.label, profile: r.profile })
        })
        .collect()
}

fn descriptor(spec: &SplitSpec, train: &[SubjectRecord], test: &[SubjectRecord]) -> SplitDescriptor {
    let ids = |rs: &[SubjectRecord]| rs.iter().map(|r| r.subject_id.clone()).collect();
    SplitDescriptor {
        bias_kind: spec.bias_kind.as_str().into(),
        train_per_class: spec.train_per_class,
        test_per_class: spec.test_per_class,
        skew: spec.skew,
        seed: spec.seed,
        train: ids(train),
        test: ids(test),
    }
}

fn split_for(cfg: &ExperimentConfig, kind: BiasKind) -> AppResult<SplitSpec> {
    let mut c = cfg.clone();
    c.split.bias_kind = kind.as_str().into();
    c.split_spec()
}

pub fn cmd_split(cfg: &ExperimentConfig, layout: &Layout) -> AppResult<String> {
    let spec = cfg.split_spec()?;
    let train_cfg = cfg.train_config()?;
    let records = read_manifest(&layout.manifest())?;
    let pool = usable_records(layout, &records, &cfg.stft(), train_cfg.input_size)?;
    let split = build_biased_split(&pool, &spec)?;
    let path = layout.split(spec.bias_kind);
    descriptor(&spec, &split.train, &split.test).save(&path)?;
    Ok(format!(
        "{} split: {} train, {} test from {} usable clips -> {}\n",
        spec.bias_kind.as_str(),
        split.train.len(),
        split.test.len(),
        pool.len(),
        path.display()
    ))
}

/// Train and test records of the configured split, in descriptor order.
pub fn load_split(cfg: &ExperimentConfig, layout: &Layout) -> AppResult<(Vec<SubjectRecord>, Vec<SubjectRecord>)> {
    let kind = cfg.bias_kind()?;
    let path = layout.split(kind);
    let desc = SplitDescriptor::load(&path)?;
    if desc.bias_kind != kind.as_str() {
        return Err(AppError::malformed(&path, format!("descriptor is for {}", desc.bias_kind)));
    }
    let records = read_manifest(&layout.manifest())?;
    let by_id: HashMap<&str, &SubjectRecord> = records.iter().map(|r| (r.subject_id.as_str(), r)).collect();
    let resolve = |ids: &[String]| -> AppResult<Vec<SubjectRecord>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| AppError::malformed(&path, format!("unknown subject {id}")))
            })
            .collect()
    };
    Ok((resolve(&desc.train)?, resolve(&desc.test)?))
}

pub struct TrainArtifacts {
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub log: PathBuf,
    pub hash: String,
}

/// Training log: `# key=value` lines, then one CSV row per epoch.
pub fn train_log_csv(header: &[(String, String)], outcome: &TrainOutcome) -> Vec<u8> {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}={v}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "L_C", "L_B", "val_accuracy", "val_sensitivity", "val_specificity"]).expect("in-memory");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &outcome.log {
        let v = e.validation;
        w.write_record([
            e.epoch.to_string(),
            e.classification_loss.to_string(),
            opt(e.bias_loss),
            opt(v.map(|m| m.accuracy)),
            opt(v.map(|m| m.sensitivity)),
            opt(v.map(|m| m.specificity)),
        ])
        .expect("in-memory");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8"));
    out.into_bytes()
}

/// Trains on nine folds of the split's training set, validating on the
/// tenth, and writes the final and best-validation checkpoints with the log.
pub fn cmd_train(cfg: &ExperimentConfig, layout: &Layout, kind: BaselineKind) -> AppResult<TrainArtifacts> {
    let train_cfg = cfg.train_config()?;
    let bias = cfg.bias_kind()?;
    let (train_records, _) = load_split(cfg, layout)?;
    let examples = load_examples(layout, &train_records, &cfg.stft(), train_cfg.input_size)?;
    let folds = kfold_partitions(&examples, VALIDATION_FOLDS, train_cfg.seed)?;
    let held: std::collections::HashSet<usize> = folds[0].iter().copied().collect();
    let (fit_set, val_set): (Vec<&Example>, Vec<&Example>) = {
        let (a, b): (Vec<_>, Vec<_>) = examples.iter().enumerate().partition(|(i, _)| !held.contains(i));
        (a.into_iter().map(|(_, e)| e).collect(), b.into_iter().map(|(_, e)| e).collect())
    };
    let mut model = RbfNetModel::new(kind, &train_cfg)?;
    let outcome = model::train(&mut model, &fit_set, Some(&val_set), &train_cfg)?;

    let dir = layout.model_dir(bias, kind);
    let final_checkpoint = dir.join("final.ckpt");
    checkpoint::save(&final_checkpoint, kind, Some(train_cfg.epochs - 1), &train_cfg, &model)?;
    let best_checkpoint = match &outcome.best {
        Some((epoch, best)) => {
            let p = dir.join("best.ckpt");
            checkpoint::save(&p, kind, Some(*epoch), &train_cfg, best)?;
            Some(p)
        }
        None => None,
    };
    let mut header = describe_train(kind, &train_cfg);
    header.push(("split".into(), bias.as_str().into()));
    header.push(("train_subjects".into(), fit_set.len().to_string()));
    header.push(("validation_subjects".into(), val_set.len().to_string()));
    if let Some((epoch, _)) = &outcome.best {
        header.push(("best_epoch".into(), epoch.to_string()));
    }
    let log = dir.join("log.csv");
    write_atomic(&log, &train_log_csv(&header, &outcome))?;
    let hash = checkpoint::file_hash(&final_checkpoint)?;
    Ok(TrainArtifacts { final_checkpoint, best_checkpoint, log, hash })
}

/// Final checkpoint from `train` when it matches `cfg`; otherwise a model
/// trained on the whole training set.
fn unseen_model(
    layout: &Layout,
    bias: BiasKind,
    kind: BaselineKind,
    cfg: &TrainConfig,
    train: &[&Example],
) -> AppResult<(RbfNetModel, &'static str)> {
    let path = layout.model_dir(bias, kind).join("final.ckpt");
    if path.exists() {
        let ck = checkpoint::load(&path)?;
        if ck.kind == kind && ck.config == *cfg {
            return Ok((ck.model, "checkpoint"));
        }
    }
    let (m, _) = model::fit(kind, train, None, cfg)?;
    Ok((m, "trained"))
}

pub fn cmd_eval(cfg: &ExperimentConfig, layout: &Layout) -> AppResult<String> {
    let train_cfg = cfg.train_config()?;
    let bias = cfg.bias_kind()?;
    let (train_records, test_records) = load_split(cfg, layout)?;
    let stft = cfg.stft();
    let train = load_examples(layout, &train_records, &stft, train_cfg.input_size)?;
    let test = load_examples(layout, &test_records, &stft, train_cfg.input_size)?;
    let (train, test): (Vec<&Example>, Vec<&Example>) = (train.iter().collect(), test.iter().collect());

    let mut kinds = vec![BaselineKind::CnnLstm];
    if cfg.eval.with_cnn {
        kinds.insert(0, BaselineKind::Cnn);
    }
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for kind in kinds {
        let cv = run_cross_validation(kind, &train, cfg.eval.folds, &train_cfg)?;
        rows.push(ComparisonRow { model: kind, eval_kind: EvalKind::CrossValidation, report: cv.mean });
        let (m, src) = unseen_model(layout, bias, kind, &train_cfg, &train)?;
        rows.push(ComparisonRow { model: kind, eval_kind: EvalKind::Unseen, report: evaluate(&m, &test)? });
        sources.push((kind, src));
    }
    let (m, src) = unseen_model(layout, bias, BaselineKind::RbfNet, &train_cfg, &train)?;
    rows.push(ComparisonRow { model: BaselineKind::RbfNet, eval_kind: EvalKind::Unseen, report: evaluate(&m, &test)? });
    sources.push((BaselineKind::RbfNet, src));
    let table = ComparisonTable { rows };

    let dir = layout.reports();
    let stem = format!("{}_comparison", bias.as_str());
    write_atomic(&dir.join(format!("{stem}.csv")), &report::comparison_csv(&table))?;
    let mut text = report::comparison_text(&table);
    for (kind, src) in sources {
        let _ = writeln!(text, "{kind} unseen model: {src}");
    }
    if cfg.eval.chart {
        if let Some(d) = report::unseen_deltas(&table) {
            report::write_chart(&dir.join(format!("{stem}.png")), &d)?;
            let _ = writeln!(text, "rbf_net - cnn_lstm: {}", report::chart_caption(&d, &debias_core::eval::METRIC_NAMES));
        }
    }
    write_atomic(&dir.join(format!("{stem}.txt")), text.as_bytes())?;
    Ok(text)
}

pub fn cmd_ablate(cfg: &ExperimentConfig, layout: &Layout) -> AppResult<String> {
    let train_cfg = cfg.train_config()?;
    let stft = cfg.stft();
    let records = read_manifest(&layout.manifest())?;
    let pool = usable_records(layout, &records, &stft, train_cfg.input_size)?;
    let mut data = Vec::new();
    for kind in ABLATION_CONDITIONS {
        let split = build_biased_split(&pool, &split_for(cfg, kind)?)?;
        let train = load_examples(layout, &split.train, &stft, train_cfg.input_size)?;
        let test = load_examples(layout, &split.test, &stft, train_cfg.input_size)?;
        data.push((kind, train, test));
    }
    let conditions: Vec<Condition> = data
        .iter()
        .map(|(kind, train, test)| Condition { kind: *kind, train: train.iter().collect(), test: test.iter().collect() })
        .collect();
    let table = run_ablation(&conditions, &train_cfg)?;

    let dir = layout.reports();
    write_atomic(&dir.join("ablation.csv"), &report::ablation_csv(&table))?;
    let mut text = report::ablation_text(&table);
    let deltas: Vec<f64> = ABLATION_CONDITIONS
        .iter()
        .filter_map(|&c| {
            let a = table.get(c, BaselineKind::RbfNet)?.accuracy;
            let b = table.get(c, BaselineKind::CnnLstm)?.accuracy;
            Some(a - b)
        })
        .collect();
    if cfg.eval.chart {
        report::write_chart(&dir.join("ablation.png"), &deltas)?;
        let names: Vec<&str> = ABLATION_CONDITIONS.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(text, "rbf_net - cnn_lstm accuracy: {}", report::chart_caption(&deltas, &names));
    }
    write_atomic(&dir.join("ablation.txt"), text.as_bytes())?;
    Ok(text)
}

/// Runs every gradient check; returns the report text and whether all passed.
pub fn cmd_gradcheck(seeds: u64) -> (String, bool) {
    let cfg = GradCheckConfig::default();
    let results = fragments::check_all(seeds, &cfg);
    let mut text = String::new();
    let mut ok = true;
    for (name, r) in &results {
        ok &= r.passed();
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        let _ = writeln!(
            text,
            "{name:<16} max_rel_error {:.3e}  probes {:>5}  skipped {:>4}  {verdict}",
            r.max_rel_error, r.probes, r.skipped
        );
    }
    let _ = writeln!(text, "tolerance {:.0e}, {seeds} seeds per fragment", cfg.tolerance);
    (text, ok)
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion, with detail
//! lines beneath, and exits nonzero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use debias::checkpoint;
use debias::config::ExperimentConfig;
use debias::pipeline::{prepare_clip, spectrograms, to_model_input};
use debias_core::audio::AudioClip;
use debias_core::dataset::{build_biased_split, BiasKind, DatasetSplit, Label, SplitSpec, SubjectRecord};
use debias_core::eval::{compute_metrics, evaluate, probe_accuracy, run_cross_validation, MetricsReport};
use debias_core::fft::RealFft;
use debias_core::model::{fit, BaselineKind, BiasAttribute, Example, RbfNetModel, TrainConfig};
use debias_core::neural::{fragments, GradCheckConfig, ParamGroup};
use debias_core::rng::Rng;
use debias_core::spectrogram::{stft_power, StftConfig};
use debias_core::Error as CoreError;
use debias_core::synth::{plan_corpus, synthesize_subject, Gender, Smoking};

const SEEDS: u64 = 5;
const TOY_SIZE: usize = 32;
const FULL_SIZE: usize = 224;
const SKEW: f64 = 0.8;
const TOY_TRAIN_PER_CLASS: usize = 200;
const TEST_PER_CLASS: usize = 100;
const CV_FOLDS: usize = 10;
const PROBE_TRAIN_PER_CELL: usize = 50;
const CONDITIONS: [BiasKind; 4] = [BiasKind::Unbiased, BiasKind::Gender, BiasKind::AgeGroup1, BiasKind::Smoking];

struct Verdict {
    pass: bool,
    detail: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self { pass: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(if ok { line } else { format!("{line}  <- fails") });
    }

    fn note(&mut self, line: String) {
        self.detail.push(line);
    }
}

fn report(id: usize, name: &str, v: &Verdict, failed: &mut Vec<usize>) {
    println!("criterion {id}: {} {name}", if v.pass { "PASS" } else { "FAIL" });
    for d in &v.detail {
        println!("    {d}");
    }
    if !v.pass {
        failed.push(id);
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- numerics

fn naive_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let theta = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                re += v * theta.cos();
                im += v * theta.sin();
            }
            re * re + im * im
        })
        .collect()
}

struct Oracle {
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    auc: f64,
}

fn brute_metrics(p: &[f64], y: &[bool], threshold: f64) -> Oracle {
    let mut o = Oracle { tp: 0, fp: 0, tn: 0, fn_: 0, auc: 0.0 };
    for (&pi, &yi) in p.iter().zip(y) {
        let pos = pi >= threshold;
        match (pos, yi) {
            (true, true) => o.tp += 1,
            (true, false) => o.fp += 1,
            (false, false) => o.tn += 1,
            (false, true) => o.fn_ += 1,
        }
    }
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if p[i] > p[j] {
                    wins += 1.0;
                } else if p[i] == p[j] {
                    wins += 0.5;
                }
            }
        }
    }
    o.auc = wins / pairs;
    o
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn numerics() -> Verdict {
    let mut v = Verdict::new();
    let mut rng = Rng::new(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 1 + rng.below(64) as usize;
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let energy: f64 = x.iter().map(|a| a * a).sum();
        let mut got = vec![0.0; n / 2 + 1];
        RealFft::new(n).power(&x, &mut got);
        for (a, b) in got.iter().zip(naive_power(&x)) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-12 * energy));
        }
    }
    v.check(worst <= 1e-9, format!("fft power vs naive dft, 200 frames n<=64: max relative error {worst:.2e} (<= 1e-9)"));

    let mut worst = 0.0f64;
    let mut count_mismatch = 0;
    for _ in 0..100 {
        let n = 2 + rng.below(199) as usize;
        let mut y: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        y[0] = true;
        y[1] = false;
        let coarse = rng.uniform() < 0.5;
        let p: Vec<f64> =
            (0..n).map(|_| if coarse { rng.below(11) as f64 / 10.0 } else { rng.uniform() }).collect();
        let threshold = if rng.uniform() < 0.5 { 0.5 } else { rng.uniform() };
        let got = compute_metrics(&p, &y, threshold).unwrap();
        let o = brute_metrics(&p, &y, threshold);
        let c = got.confusion;
        if (c.tp, c.fp, c.tn, c.fn_) != (o.tp, o.fp, o.tn, o.fn_) || got.n != n {
            count_mismatch += 1;
        }
        let expect = [
            frac(o.tp + o.tn, n),
            frac(o.tn, o.tn + o.fp),
            frac(o.tp, o.tp + o.fn_),
            frac(2 * o.tp, 2 * o.tp + o.fp + o.fn_),
            o.auc,
        ];
        for (a, b) in got.values().iter().zip(expect) {
            worst = worst.max((a - b).abs());
        }
    }
    v.check(
        worst <= 1e-12 && count_mismatch == 0,
        format!("metrics vs brute-force oracle, 100 instances n<=200: max abs error {worst:.2e}, confusion mismatches {count_mismatch}"),
    );
    v
}

// ---------------------------------------------------------------- gradients

fn gradients() -> Verdict {
    let mut v = Verdict::new();
    let cfg = GradCheckConfig::default();
    v.note(format!("h = {:.0e}, tolerance {:.0e}, 20 seeds per fragment", cfg.step, cfg.tolerance));
    for (name, r) in fragments::check_all(20, &cfg) {
        v.check(
            r.passed(),
            format!("{name:<16} max rel error {:.2e}, {} probes, {} kink skips", r.max_rel_error, r.probes, r.skipped),
        );
    }
    v
}

// ---------------------------------------------------------------- splits

fn confound(kind: BiasKind, r: &SubjectRecord) -> bool {
    match kind {
        BiasKind::Gender | BiasKind::Unbiased => r.profile.gender == Gender::Female,
        BiasKind::AgeGroup1 | BiasKind::AgeGroup2 => r.profile.age_years < 40,
        BiasKind::Smoking => r.profile.smoking == Smoking::Smoker,
    }
}

fn class_of(rs: &[SubjectRecord], label: Label) -> Vec<&SubjectRecord> {
    rs.iter().filter(|r| r.label == label).collect()
}

fn audit_split(kind: BiasKind, split: &DatasetSplit, train_per_class: usize) -> Result<(), String> {
    let train_ids: HashSet<&str> = split.train.iter().map(|r| r.subject_id.as_str()).collect();
    let test_ids: HashSet<&str> = split.test.iter().map(|r| r.subject_id.as_str()).collect();
    if train_ids.len() != split.train.len() || test_ids.len() != split.test.len() {
        return Err("duplicate subjects".into());
    }
    if !train_ids.is_disjoint(&test_ids) {
        return Err("train and test share subjects".into());
    }
    let majority = (SKEW * train_per_class as f64).round() as usize;
    let mut majority_values = Vec::new();
    for label in [Label::Diseased, Label::Normal] {
        let train = class_of(&split.train, label);
        let test = class_of(&split.test, label);
        if train.len() != train_per_class || test.len() != TEST_PER_CLASS {
            return Err(format!("{} class: {} train, {} test", label.as_str(), train.len(), test.len()));
        }
        let test_pos = test.iter().filter(|r| confound(kind, r)).count();
        if kind != BiasKind::Unbiased && test_pos != TEST_PER_CLASS / 2 {
            return Err(format!("{} test confound count {test_pos}", label.as_str()));
        }
        let pos = train.iter().filter(|r| confound(kind, r)).count();
        if kind != BiasKind::Unbiased {
            if pos == majority {
                majority_values.push(true);
            } else if pos == train_per_class - majority {
                majority_values.push(false);
            } else {
                return Err(format!("{} train confound count {pos}, expected {majority} or its complement", label.as_str()));
            }
        }
        if kind == BiasKind::Smoking && train.iter().chain(&test).any(|r| r.profile.gender != Gender::Male) {
            return Err("smoking split contains women".into());
        }
    }
    if matches!(kind, BiasKind::Gender | BiasKind::Smoking) {
        let hist = |label| {
            let mut h = [0i64; 8];
            for r in class_of(&split.train, label) {
                h[((r.profile.age_years.min(85) - 10) / 10).min(7) as usize] += 1;
            }
            h
        };
        let (d, n) = (hist(Label::Diseased), hist(Label::Normal));
        if d.iter().zip(&n).any(|(a, b)| (a - b).abs() > 1) {
            return Err(format!("age histograms differ across classes: {d:?} vs {n:?}"));
        }
    }
    if kind == BiasKind::Unbiased {
        let mix = |label| {
            let mut m: HashMap<(Gender, Smoking), usize> = HashMap::new();
            for r in class_of(&split.train, label) {
                *m.entry((r.profile.gender, r.profile.smoking)).or_default() += 1;
            }
            m
        };
        if mix(Label::Diseased) != mix(Label::Normal) {
            return Err("unbiased split has class-dependent gender/smoking mix".into());
        }
    } else if majority_values[0] == majority_values[1] {
        return Err("both classes share the majority confound value".into());
    }
    Ok(())
}

fn split_audit() -> Verdict {
    let mut v = Verdict::new();
    let planned = |cfg: &ExperimentConfig| -> Vec<SubjectRecord> {
        let (spec, demo) = cfg.synthesis().unwrap();
        plan_corpus(&spec, &demo).unwrap().into_iter().map(|p| p.record).collect()
    };
    let reference = planned(&ExperimentConfig::default());
    let short = build_biased_split(&reference, &SplitSpec::reference(BiasKind::Gender, 0));
    v.check(
        matches!(short, Err(CoreError::InsufficientPool(_))),
        format!("reference cohort ({} subjects, 1022 diseased) cannot hold 925 + 100 per class: InsufficientPool", reference.len()),
    );
    let mut ample = ExperimentConfig { toy: true, ..ExperimentConfig::default() };
    ample.synth.uniform_cells = [[[1200; 2]; 2]; 2];
    let records = planned(&ample);
    v.note(format!("audit pool: {} planned subjects, 1200 per (label, gender, smoking) cell", records.len()));
    let expected = [
        (BiasKind::Gender, 925),
        (BiasKind::AgeGroup1, 765),
        (BiasKind::AgeGroup2, 765),
        (BiasKind::Smoking, 350),
        (BiasKind::Unbiased, 900),
    ];
    for (kind, per_class) in expected {
        let mut errors = Vec::new();
        for seed in 0..3 {
            let split = SplitSpec::reference(kind, seed);
            let res = build_biased_split(&records, &split)
                .map_err(|e| e.to_string())
                .and_then(|s| audit_split(kind, &s, per_class));
            if let Err(e) = res {
                errors.push(format!("seed {seed}: {e}"));
            }
        }
        let summary = if errors.is_empty() { "ok".to_string() } else { errors.join("; ") };
        v.check(errors.is_empty(), format!("{:<10} {per_class}/class train, {TEST_PER_CLASS}/class test, 3 seeds: {summary}", kind.as_str()));
    }
    v
}

// ---------------------------------------------------------------- corpus

struct Subject {
    record: SubjectRecord,
    input: Vec<f64>,
}

impl Subject {
    fn example(&self) -> Example {
        Example { input: self.input.clone(), label: self.record.label, profile: self.record.profile }
    }
}

/// Renders the toy corpus, checking every spectrogram at both sizes and
/// keeping the toy-size inputs.
fn toy_pool(v: &mut Verdict) -> Vec<Subject> {
    let cfg = ExperimentConfig { toy: true, ..ExperimentConfig::default() };
    let (spec, demo) = cfg.synthesis().unwrap();
    let stft = StftConfig::default();
    let mut pool = Vec::new();
    let (mut checked, mut bad, mut dropped) = (0, 0, 0);
    for planned in plan_corpus(&spec, &demo).unwrap() {
        let (record, clip) =
            synthesize_subject(planned.record.profile, planned.record.label.is_diseased(), &spec, planned.index);
        let Some(clip) = prepare_clip(&clip).unwrap() else {
            dropped += 1;
            continue;
        };
        let specs = spectrograms(&clip, &stft, &[TOY_SIZE, FULL_SIZE]).unwrap();
        for s in &specs {
            checked += 1;
            let ok = s.values.len() == s.size * s.size && s.values.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x));
            if !ok {
                bad += 1;
            }
        }
        if specs[0].size != TOY_SIZE || specs[1].size != FULL_SIZE {
            bad += 1;
        }
        pool.push(Subject { record, input: to_model_input(&specs[0].values) });
    }
    v.check(
        bad == 0,
        format!("{checked} spectrograms ({} subjects at 32x32 and 224x224, {dropped} clips dropped): {bad} violate shape, range or finiteness", pool.len()),
    );
    pool
}

fn tone_check(v: &mut Verdict) {
    let sr = 44_100u32;
    let stft = StftConfig::default();
    let samples: Vec<f64> = (0..2 * sr as usize).map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / sr as f64).sin()).collect();
    let clip = AudioClip::new(samples, sr).unwrap();
    let power = stft_power(&clip, &stft).unwrap();
    let band_energy: Vec<f64> = (0..power.cols).map(|c| (0..power.rows).map(|r| power.get(r, c)).sum()).collect();
    let peak = (0..band_energy.len()).max_by(|&a, &b| band_energy[a].partial_cmp(&band_energy[b]).unwrap()).unwrap();
    let raw_bins = stft.window_len_samples / 2 + 1;
    let k = (1000.0 * stft.window_len_samples as f64 / sr as f64).round() as usize;
    let expected = (0..stft.freq_bins).find(|&b| b * raw_bins / stft.freq_bins <= k && k < (b + 1) * raw_bins / stft.freq_bins).unwrap();
    v.check(peak == expected, format!("1 kHz tone: raw bin {k}, expected band {expected}, peak band {peak}"));
}

fn spectrogram_contract(v: &mut Verdict) -> Vec<Subject> {
    let pool = toy_pool(v);
    tone_check(v);
    pool
}

// ---------------------------------------------------------------- training

fn bits(g: &ParamGroup) -> Vec<u64> {
    g.values.iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect()
}

fn freezing(pool: &[Subject], v: &mut Verdict) {
    let batch: Vec<Example> = pool.iter().take(16).map(Subject::example).collect();
    let normals: Vec<&Example> = batch.iter().filter(|e| e.label == Label::Normal).collect();
    let inputs: Vec<&[f64]> = batch.iter().map(|e| e.input.as_slice()).collect();
    let labels: Vec<f64> = batch.iter().map(|e| e.label.target()).collect();
    let n_inputs: Vec<&[f64]> = normals.iter().map(|e| e.input.as_slice()).collect();
    let attr = BiasAttribute::Gender;
    let targets: Vec<f64> = normals.iter().map(|e| attr.target(&e.profile)).collect();
    let (mut frozen_ok, mut moved_ok) = (true, true);
    for seed in 0..3 {
        let cfg = TrainConfig { seed, bias_attribute: attr, ..TrainConfig::toy() };
        let mut m = RbfNetModel::new(BaselineKind::RbfNet, &cfg).unwrap();
        let snap = |m: &RbfNetModel| (bits(&m.encoder), bits(&m.classifier), bits(&m.bias.as_ref().unwrap().params));

        let (e0, c0, b0) = snap(&m);
        m.train_phase1_classification(&inputs, &labels, cfg.lr).unwrap();
        let (e1, c1, b1) = snap(&m);
        frozen_ok &= b1 == b0;
        moved_ok &= e1 != e0 && c1 != c0;

        m.train_phase2_bias_predictor(&n_inputs, &targets, cfg.lr).unwrap();
        let (e2, c2, b2) = snap(&m);
        frozen_ok &= e2 == e1 && c2 == c1;
        moved_ok &= b2 != b1;

        m.train_phase3_adversarial_encoder(&n_inputs, &targets, cfg.lr, cfg.lambda_adv).unwrap();
        let (e3, c3, b3) = snap(&m);
        frozen_ok &= b3 == b2 && c3 == c2;
        moved_ok &= e3 != e2;
    }
    v.check(frozen_ok, "phase 1 keeps the bias predictor, phase 2 the encoder and classifier, phase 3 the bias predictor and classifier bit-identical (3 seeds)".into());
    v.check(moved_ok, "each phase changes the groups it trains".into());
}

fn examples(subjects: &HashMap<&str, &Subject>, records: &[SubjectRecord]) -> Vec<Example> {
    records.iter().map(|r| subjects[r.subject_id.as_str()].example()).collect()
}

fn toy_cfg(kind: BiasKind, seed: u64) -> TrainConfig {
    TrainConfig { seed, bias_attribute: BiasAttribute::for_split(kind), ..TrainConfig::toy() }
}

fn toy_split(kind: BiasKind, seed: u64) -> SplitSpec {
    SplitSpec { bias_kind: kind, train_per_class: TOY_TRAIN_PER_CLASS, test_per_class: TEST_PER_CLASS, skew: SKEW, seed }
}

/// Probe train set: the first `PROBE_TRAIN_PER_CELL` unused non-smokers of
/// each (label, gender) cell.
fn probe_train_set<'a>(pool: &'a [Subject], split: &DatasetSplit) -> Vec<&'a Subject> {
    let used: HashSet<&str> = split.train.iter().chain(&split.test).map(|r| r.subject_id.as_str()).collect();
    let mut out = Vec::new();
    for label in [Label::Diseased, Label::Normal] {
        for gender in [Gender::Male, Gender::Female] {
            let cell: Vec<&Subject> = pool
                .iter()
                .filter(|s| {
                    let r = &s.record;
                    !used.contains(r.subject_id.as_str())
                        && r.label == label
                        && r.profile.gender == gender
                        && r.profile.smoking == Smoking::NonSmoker
                })
                .take(PROBE_TRAIN_PER_CELL)
                .collect();
            assert_eq!(cell.len(), PROBE_TRAIN_PER_CELL, "probe cell {} {:?}", label.as_str(), gender);
            out.extend(cell);
        }
    }
    out
}

fn probe(model: &RbfNetModel, train: &[&Subject], test: &[Example]) -> f64 {
    let attr = BiasAttribute::Gender;
    let feats = |inputs: Vec<&[f64]>| -> Vec<Vec<f64>> { inputs.iter().map(|x| model.features(x).unwrap()).collect() };
    let tx = feats(train.iter().map(|s| s.input.as_slice()).collect());
    let ty: Vec<bool> = train.iter().map(|s| attr.target(&s.record.profile) > 0.5).collect();
    let vx = feats(test.iter().map(|e| e.input.as_slice()).collect());
    let vy: Vec<bool> = test.iter().map(|e| attr.target(&e.profile) > 0.5).collect();
    probe_accuracy(&tx, &ty, &vx, &vy).unwrap()
}

#[derive(Default)]
struct ToyResults {
    cv_minus_unseen: Vec<f64>,
    acc_delta: Vec<f64>,
    gap: HashMap<BaselineKind, Vec<f64>>,
    probe: HashMap<BaselineKind, Vec<f64>>,
    unseen: HashMap<(BiasKind, BaselineKind), Vec<f64>>,
    first_rbf_checkpoint: Option<Vec<u8>>,
}

fn toy_experiments(pool: &[Subject]) -> ToyResults {
    let records: Vec<SubjectRecord> = pool.iter().map(|s| s.record.clone()).collect();
    let by_id: HashMap<&str, &Subject> = pool.iter().map(|s| (s.record.subject_id.as_str(), s)).collect();
    let mut res = ToyResults::default();
    let started = Instant::now();
    for seed in 0..SEEDS {
        for kind in CONDITIONS {
            let split = build_biased_split(&records, &toy_split(kind, seed)).unwrap();
            let train = examples(&by_id, &split.train);
            let test = examples(&by_id, &split.test);
            let (train_refs, test_refs): (Vec<&Example>, Vec<&Example>) = (train.iter().collect(), test.iter().collect());
            let cfg = toy_cfg(kind, seed);
            let mut reports: HashMap<BaselineKind, MetricsReport> = HashMap::new();
            for model_kind in BaselineKind::ALL {
                let (model, _) = fit(model_kind, &train_refs, None, &cfg).unwrap();
                let r = evaluate(&model, &test_refs).unwrap();
                res.unseen.entry((kind, model_kind)).or_default().push(r.accuracy);
                if kind == BiasKind::Gender && model_kind != BaselineKind::Cnn {
                    res.gap.entry(model_kind).or_default().push(r.balance_gap());
                    let probe_train = probe_train_set(pool, &split);
                    res.probe.entry(model_kind).or_default().push(probe(&model, &probe_train, &test));
                    if model_kind == BaselineKind::RbfNet && seed == 0 {
                        res.first_rbf_checkpoint = Some(checkpoint::encode(model_kind, None, &cfg, &model));
                    }
                }
                reports.insert(model_kind, r);
            }
            if kind == BiasKind::Gender {
                let cv = run_cross_validation(BaselineKind::CnnLstm, &train_refs, CV_FOLDS, &cfg).unwrap();
                res.cv_minus_unseen.push(cv.mean.accuracy - reports[&BaselineKind::CnnLstm].accuracy);
                res.acc_delta.push(reports[&BaselineKind::RbfNet].accuracy - reports[&BaselineKind::CnnLstm].accuracy);
            }
            eprintln!("seed {seed} {:<10} done at {:.0} s", kind.as_str(), started.elapsed().as_secs_f64());
        }
    }
    res
}

fn determinism(pool: &[Subject], first: &[u8], v: &mut Verdict) {
    let records: Vec<SubjectRecord> = pool.iter().map(|s| s.record.clone()).collect();
    let by_id: HashMap<&str, &Subject> = pool.iter().map(|s| (s.record.subject_id.as_str(), s)).collect();
    let split = build_biased_split(&records, &toy_split(BiasKind::Gender, 0)).unwrap();
    let train = examples(&by_id, &split.train);
    let refs: Vec<&Example> = train.iter().collect();
    let cfg = toy_cfg(BiasKind::Gender, 0);
    let (model, _) = fit(BaselineKind::RbfNet, &refs, None, &cfg).unwrap();
    let second = checkpoint::encode(BaselineKind::RbfNet, None, &cfg, &model);
    v.check(
        second == first,
        format!("two full toy rbf_net runs with seed 0: checkpoints of {} and {} bytes, identical = {}", first.len(), second.len(), second == first),
    );
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let t = Instant::now();

    report(1, "numerics oracle suite", &numerics(), &mut failed);
    report(2, "gradient checks", &gradients(), &mut failed);
    report(4, "split construction audit", &split_audit(), &mut failed);

    let mut spec_v = Verdict::new();
    let pool = spectrogram_contract(&mut spec_v);
    report(9, "spectrogram contract", &spec_v, &mut failed);
    eprintln!("corpus ready at {:.0} s", t.elapsed().as_secs_f64());

    let res = toy_experiments(&pool);

    let mut det = Verdict::new();
    freezing(&pool, &mut det);
    determinism(&pool, res.first_rbf_checkpoint.as_deref().unwrap(), &mut det);
    report(3, "freezing and determinism", &det, &mut failed);

    let mut v5 = Verdict::new();
    let m5 = median(&res.cv_minus_unseen);
    v5.check(m5 >= 0.05, format!("cnn_lstm 10-fold cv minus unseen accuracy, gender skew 0.8: median {m5:.3} (>= 0.05) over [{}]", fmt(&res.cv_minus_unseen)));
    report(5, "bias inflation", &v5, &mut failed);

    let mut v6 = Verdict::new();
    let m6 = median(&res.acc_delta);
    v6.check(m6 >= 0.03, format!("rbf_net minus cnn_lstm unseen accuracy: median {m6:.3} (>= 0.03) over [{}]", fmt(&res.acc_delta)));
    let (gr, gc) = (&res.gap[&BaselineKind::RbfNet], &res.gap[&BaselineKind::CnnLstm]);
    v6.check(
        median(gr) < median(gc),
        format!("|specificity - sensitivity|: rbf_net median {:.3} [{}] < cnn_lstm median {:.3} [{}]", median(gr), fmt(gr), median(gc), fmt(gc)),
    );
    report(6, "debiasing efficacy", &v6, &mut failed);

    let mut v7 = Verdict::new();
    let (pr, pc) = (&res.probe[&BaselineKind::RbfNet], &res.probe[&BaselineKind::CnnLstm]);
    v7.check(median(pr) <= 0.60, format!("gender probe on rbf_net features: median {:.3} (<= 0.60) over [{}]", median(pr), fmt(pr)));
    v7.check(median(pc) >= 0.70, format!("gender probe on cnn_lstm features: median {:.3} (>= 0.70) over [{}]", median(pc), fmt(pc)));
    report(7, "feature-level bias removal", &v7, &mut failed);

    let mut v8 = Verdict::new();
    for kind in CONDITIONS {
        let med = |m| median(&res.unseen[&(kind, m)]);
        let (cnn, lstm, rbf) = (med(BaselineKind::Cnn), med(BaselineKind::CnnLstm), med(BaselineKind::RbfNet));
        let line = format!("{:<10} median unseen accuracy cnn {cnn:.3}, cnn_lstm {lstm:.3}, rbf_net {rbf:.3}", kind.as_str());
        if kind == BiasKind::Unbiased {
            v8.check((rbf - lstm).abs() <= 0.05, format!("{line}: |rbf_net - cnn_lstm| <= 0.05"));
        } else {
            v8.check(rbf > lstm && lstm >= cnn, format!("{line}: rbf_net > cnn_lstm >= cnn"));
        }
    }
    report(8, "ablation directionality", &v8, &mut failed);

    println!("total {:.0} s", t.elapsed().as_secs_f64());
    if failed.is_empty() {
        println!("all criteria pass");
        ExitCode::SUCCESS
    } else {
        failed.sort();
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

//! Synthetic cough corpus with a controllable disease signature and
//! controllable confound imprints, standing in for clinical recordings.
//!
//! Every clip is a train of noise bursts (coughs) shaped by a handful of
//! band-pass resonators. The effect recipes are fixed constants:
//!
//! | attribute | imprint                                                   |
//! |-----------|-----------------------------------------------------------|
//! | gender    | voice band centred at `2250 Hz -/+ 400 Hz * s` (male/female) |
//! | age       | high band (10-14 kHz) gain `1 - 0.9 * s * (age - 10) / 75`  |
//! | smoking   | low-pass turbulence below 400 Hz with gain `1.5 * s`        |
//! | disease   | resonance at 6 kHz with gain `s * (0.25 + 0.75 u)`, `u ~ U[0,1)` per subject |
//!
//! `s` is the per-attribute effect strength. A subject-specific nuisance
//! resonance (4-8 kHz) and random body tilt blur the disease band so that the
//! disease signature is only partially reliable, while the confound imprints
//! are stable. Random draws never depend on the labels, so with every
//! strength at zero two subjects with the same index get identical clips.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::audio::{AudioClip, CANONICAL_SAMPLE_RATE_HZ};
use crate::dataset::{Label, SubjectRecord};
use crate::math;
use crate::rng::Rng;
use crate::{Error, Result};

pub const MIN_AGE: u8 = 10;
pub const MAX_AGE: u8 = 85;
pub const AGE_BINS: usize = 8;

pub const GENDER_BAND_CENTER_HZ: f64 = 2250.0;
pub const GENDER_BAND_OFFSET_HZ: f64 = 400.0;
pub const DISEASE_BAND_HZ: f64 = 6000.0;
pub const SMOKING_CUTOFF_HZ: f64 = 400.0;
pub const AGE_BAND_HZ: f64 = 12_000.0;
pub const MIN_CLIP_S: f64 = 3.0;
pub const MAX_CLIP_S: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Smoking {
    Smoker,
    NonSmoker,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl Smoking {
    pub fn as_str(self) -> &'static str {
        match self {
            Smoking::Smoker => "smoker",
            Smoking::NonSmoker => "non_smoker",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfoundProfile {
    pub gender: Gender,
    pub age_years: u8,
    pub smoking: Smoking,
}

impl ConfoundProfile {
    pub fn new(gender: Gender, age_years: u8, smoking: Smoking) -> Result<Self> {
        if !(MIN_AGE..=MAX_AGE).contains(&age_years) {
            return Err(Error::InvalidSynthesisSpec(format!(
                "age {age_years} outside [{MIN_AGE}, {MAX_AGE}]"
            )));
        }
        Ok(Self { gender, age_years, smoking })
    }

    pub fn age_bin(&self) -> usize {
        age_bin(self.age_years)
    }

    pub fn is_young(&self) -> bool {
        self.age_years < 40
    }
}

/// Decade bins 10-19, 20-29, ..., 70-79 and a final 80-85 bin.
pub fn age_bin(age: u8) -> usize {
    (((age.clamp(MIN_AGE, MAX_AGE) - MIN_AGE) / 10) as usize).min(AGE_BINS - 1)
}

pub fn age_bin_range(bin: usize) -> (u8, u8) {
    let lo = MIN_AGE + 10 * bin as u8;
    let hi = if bin == AGE_BINS - 1 { MAX_AGE } else { lo + 9 };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectStrengths {
    pub gender: f64,
    pub age: f64,
    pub smoking: f64,
}

impl EffectStrengths {
    pub const NONE: EffectStrengths = EffectStrengths { gender: 0.0, age: 0.0, smoking: 0.0 };

    pub fn uniform(s: f64) -> Self {
        Self { gender: s, age: s, smoking: s }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisSpec {
    pub n_subjects: usize,
    pub disease_prevalence: f64,
    pub confound_effects: EffectStrengths,
    pub disease_effect_strength: f64,
    pub seed: u64,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        let strengths = [
            self.confound_effects.gender,
            self.confound_effects.age,
            self.confound_effects.smoking,
            self.disease_effect_strength,
        ];
        if !(0.0..=1.0).contains(&self.disease_prevalence) {
            return Err(Error::InvalidSynthesisSpec(format!(
                "prevalence {} outside [0, 1]",
                self.disease_prevalence
            )));
        }
        if strengths.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidSynthesisSpec("effect strengths must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Requested subject counts per exact profile, per class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Demographics {
    pub diseased: Vec<(ConfoundProfile, usize)>,
    pub normal: Vec<(ConfoundProfile, usize)>,
}

/// Relative weight of each decade bin, shaped like a clinical cohort that is
/// concentrated between 18 and 50.
const COHORT_AGE_WEIGHTS: [f64; AGE_BINS] = [0.06, 0.25, 0.25, 0.18, 0.12, 0.08, 0.04, 0.02];

impl Demographics {
    pub fn diseased_total(&self) -> usize {
        self.diseased.iter().map(|(_, n)| n).sum()
    }

    pub fn normal_total(&self) -> usize {
        self.normal.iter().map(|(_, n)| n).sum()
    }

    pub fn total(&self) -> usize {
        self.diseased_total() + self.normal_total()
    }

    /// Cohort shaped like the reference clinical data: about two males per
    /// female, ages concentrated in 18-50, and the given smoker/non-smoker
    /// counts per class.
    pub fn cohort(diseased: (usize, usize), normal: (usize, usize)) -> Self {
        let class = |(smokers, non_smokers): (usize, usize)| {
            let mut out = Vec::new();
            for (smoking, count) in [(Smoking::Smoker, smokers), (Smoking::NonSmoker, non_smokers)] {
                let by_gender = math::apportion(count, &[2.0, 1.0]);
                for (gender, n) in [Gender::Male, Gender::Female].into_iter().zip(by_gender) {
                    let by_bin = math::apportion(n, &COHORT_AGE_WEIGHTS);
                    for (bin, m) in by_bin.into_iter().enumerate() {
                        spread_over_bin(&mut out, gender, smoking, bin, m);
                    }
                }
            }
            out
        };
        Self { diseased: class(diseased), normal: class(normal) }
    }

    /// 1022 diseased (156 smokers) and 2656 normal (301 smokers) subjects.
    pub fn reference_cohort() -> Self {
        Self::cohort((156, 866), (301, 2355))
    }

    /// `per_cell[label][gender][smoking]` subjects per cell with ages
    /// spread uniformly over 10-85.
    pub fn uniform_ages(per_cell: [[[usize; 2]; 2]; 2]) -> Self {
        let class = |cells: [[usize; 2]; 2]| {
            let mut out = Vec::new();
            for (gi, gender) in [Gender::Male, Gender::Female].into_iter().enumerate() {
                for (si, smoking) in [Smoking::Smoker, Smoking::NonSmoker].into_iter().enumerate() {
                    let n = cells[gi][si];
                    let span = (MAX_AGE - MIN_AGE + 1) as usize;
                    for k in 0..span {
                        // even integer spread, so small cells still cover every age range
                        let c = (k + 1) * n / span - k * n / span;
                        if c > 0 {
                            let p = ConfoundProfile { gender, age_years: MIN_AGE + k as u8, smoking };
                            out.push((p, c));
                        }
                    }
                }
            }
            out
        };
        Self { diseased: class(per_cell[0]), normal: class(per_cell[1]) }
    }

    /// Subject counts keyed by (gender, smoking, age bin): `[gender][smoking][bin]`.
    pub fn histogram(entries: &[(ConfoundProfile, usize)]) -> [[[usize; AGE_BINS]; 2]; 2] {
        let mut h = [[[0; AGE_BINS]; 2]; 2];
        for (p, n) in entries {
            h[p.gender as usize][p.smoking as usize][p.age_bin()] += n;
        }
        h
    }
}

fn spread_over_bin(
    out: &mut Vec<(ConfoundProfile, usize)>,
    gender: Gender,
    smoking: Smoking,
    bin: usize,
    count: usize,
) {
    let (lo, hi) = age_bin_range(bin);
    let ages = (hi - lo + 1) as usize;
    for (k, c) in math::apportion(count, &alloc::vec![1.0; ages]).into_iter().enumerate() {
        if c > 0 {
            out.push((ConfoundProfile { gender, age_years: lo + k as u8, smoking }, c));
        }
    }
}

pub fn subject_id(index: usize) -> String {
    format!("S{index:05}")
}

/// Canonical relative clip path for a subject.
pub fn clip_path(index: usize) -> String {
    format!("clips/{}.wav", subject_id(index))
}

/// Second-order band-pass (constant 0 dB peak) or low-pass section.
#[derive(Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn band_pass(center_hz: f64, q: f64, sr: f64) -> Self {
        let w0 = 2.0 * PI * center_hz / sr;
        let alpha = math::sin(w0) / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self::normalized(alpha, 0.0, -alpha, a0, -2.0 * math::cos(w0), 1.0 - alpha)
    }

    fn low_pass(cutoff_hz: f64, q: f64, sr: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sr;
        let alpha = math::sin(w0) / (2.0 * q);
        let c = math::cos(w0);
        let a0 = 1.0 + alpha;
        Self::normalized((1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0, a0, -2.0 * c, 1.0 - alpha)
    }

    fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Per-subject random draws, taken in a fixed order independent of labels.
struct SubjectDraws {
    duration_s: f64,
    disease_visibility: f64,
    gender_jitter_hz: f64,
    nuisance_hz: f64,
    nuisance_gain: f64,
    body_tilt: f64,
    lead_in_s: f64,
}

impl SubjectDraws {
    fn draw(rng: &mut Rng) -> Self {
        Self {
            duration_s: rng.range(MIN_CLIP_S, MAX_CLIP_S),
            disease_visibility: rng.uniform(),
            gender_jitter_hz: rng.range(-150.0, 150.0),
            nuisance_hz: rng.range(4000.0, 8000.0),
            nuisance_gain: rng.range(0.0, 1.0),
            body_tilt: rng.range(0.3, 1.0),
            lead_in_s: rng.range(0.0, 0.3),
        }
    }
}

/// Renders one subject's clip. Deterministic in `(profile, diseased,
/// spec.seed, index)`; the subject's random stream is `index` of `spec.seed`.
pub fn synthesize_subject(
    profile: ConfoundProfile,
    diseased: bool,
    spec: &SynthesisSpec,
    index: usize,
) -> (SubjectRecord, AudioClip) {
    let sr = CANONICAL_SAMPLE_RATE_HZ as f64;
    let mut rng = Rng::stream(spec.seed, index as u64);
    let d = SubjectDraws::draw(&mut rng);
    let fx = spec.confound_effects;

    let gender_sign = match profile.gender {
        Gender::Male => -1.0,
        Gender::Female => 1.0,
    };
    let voice_hz = GENDER_BAND_CENTER_HZ + gender_sign * GENDER_BAND_OFFSET_HZ * fx.gender + d.gender_jitter_hz;
    let age_norm = (profile.age_years.clamp(MIN_AGE, MAX_AGE) - MIN_AGE) as f64 / (MAX_AGE - MIN_AGE) as f64;
    let high_gain = (1.0 - 0.9 * fx.age * age_norm).max(0.0);
    let smoke_gain = if profile.smoking == Smoking::Smoker { 1.5 * fx.smoking } else { 0.0 };
    let disease_gain = if diseased {
        spec.disease_effect_strength * (0.25 + 0.75 * d.disease_visibility)
    } else {
        0.0
    };

    let mut body = Biquad::band_pass(1500.0, 0.35, sr);
    let mut voice = Biquad::band_pass(voice_hz, 4.0, sr);
    let mut high = Biquad::band_pass(AGE_BAND_HZ, 1.5, sr);
    let mut smoke = Biquad::low_pass(SMOKING_CUTOFF_HZ, 0.9, sr);
    let mut disease = Biquad::band_pass(DISEASE_BAND_HZ, 6.0, sr);
    let mut nuisance = Biquad::band_pass(d.nuisance_hz, 6.0, sr);

    let n = (d.duration_s * sr) as usize;
    let mut samples = Vec::with_capacity(n);
    let mut burst_start = (d.lead_in_s * sr) as usize;
    let mut burst_len = 0usize;
    let mut next_burst = burst_start;
    for i in 0..n {
        if i == next_burst {
            burst_start = i;
            burst_len = (rng.range(0.35, 0.7) * sr) as usize;
            next_burst = i + burst_len + (rng.range(0.15, 0.6) * sr) as usize;
        }
        let env = if i >= burst_start && i < burst_start + burst_len {
            let t = (i - burst_start) as f64 / sr;
            let attack = (t / 0.015).min(1.0);
            attack * math::exp(-3.0 * t / (burst_len as f64 / sr))
        } else {
            0.0
        };
        // six noise draws every sample; labels never change the draw count
        let e: [f64; 6] = core::array::from_fn(|_| rng.range(-1.0, 1.0));
        let mut x = d.body_tilt * body.process(e[0])
            + 0.9 * voice.process(e[1])
            + 0.5 * high_gain * high.process(e[2])
            + smoke_gain * smoke.process(e[3])
            + 1.2 * disease_gain * disease.process(e[4])
            + 0.8 * d.nuisance_gain * nuisance.process(e[5]);
        x *= env;
        samples.push(x);
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.9 / peak } else { 0.0 };
    let mut floor_rng = Rng::stream(spec.seed ^ 0x5eed_f100, index as u64);
    for v in samples.iter_mut() {
        *v = *v * scale + 0.001 * floor_rng.range(-1.0, 1.0);
        *v = v.clamp(-1.0, 1.0);
    }
    let clip = AudioClip::new(samples, CANONICAL_SAMPLE_RATE_HZ).expect("synthesized samples are bounded");
    let record = SubjectRecord {
        subject_id: subject_id(index),
        label: if diseased { Label::Diseased } else { Label::Normal },
        profile,
        clip_path: clip_path(index),
    };
    (record, clip)
}

/// A planned subject: record plus the stream index used to render it.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedSubject {
    pub index: usize,
    pub record: SubjectRecord,
}

/// Expands the demographic histogram into subject records in a seeded,
/// class-interleaved order. Clips are rendered separately with
/// [`synthesize_subject`], which keeps per-subject work independent.
pub fn plan_corpus(spec: &SynthesisSpec, demographics: &Demographics) -> Result<Vec<PlannedSubject>> {
    spec.validate()?;
    let total = demographics.total();
    if total == 0 || spec.n_subjects == 0 {
        return Err(Error::InfeasibleHistogram("no subjects requested".into()));
    }
    if total != spec.n_subjects {
        return Err(Error::InfeasibleHistogram(format!(
            "histogram holds {total} subjects but n_subjects = {}",
            spec.n_subjects
        )));
    }
    let diseased = demographics.diseased_total();
    let expected = math::round(spec.disease_prevalence * total as f64) as usize;
    if diseased != expected {
        return Err(Error::InfeasibleHistogram(format!(
            "{diseased} diseased subjects but prevalence {} implies {expected}",
            spec.disease_prevalence
        )));
    }
    let mut slots: Vec<(ConfoundProfile, bool)> = Vec::with_capacity(total);
    for (entries, is_diseased) in [(&demographics.diseased, true), (&demographics.normal, false)] {
        for &(p, n) in entries.iter() {
            ConfoundProfile::new(p.gender, p.age_years, p.smoking)
                .map_err(|e| Error::InfeasibleHistogram(format!("{e}")))?;
            slots.extend(core::iter::repeat((p, is_diseased)).take(n));
        }
    }
    Rng::stream(spec.seed, u64::MAX).shuffle(&mut slots);
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(index, (profile, is_diseased))| PlannedSubject {
            index,
            record: SubjectRecord {
                subject_id: subject_id(index),
                label: if is_diseased { Label::Diseased } else { Label::Normal },
                profile,
                clip_path: clip_path(index),
            },
        })
        .collect())
}

/// Renders every planned subject in order.
pub fn synthesize_corpus(
    spec: &SynthesisSpec,
    demographics: &Demographics,
) -> Result<Vec<(SubjectRecord, AudioClip)>> {
    Ok(plan_corpus(spec, demographics)?
        .into_iter()
        .map(|p| synthesize_subject(p.record.profile, p.record.label.is_diseased(), spec, p.index))
        .collect())
}

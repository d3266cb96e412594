//! TOML experiment configuration. Unknown keys are rejected; omitted keys take
//! the defaults below, with training defaults from the full-scale preset or,
//! under `toy`, the desk-scale preset.

use std::path::{Path, PathBuf};

use debias_core::dataset::{BiasKind, SplitSpec, DEFAULT_SKEW, DEFAULT_TEST_PER_CLASS};
use debias_core::model::{BaselineKind, BiasAttribute, PhaseSchedule, TrainConfig};
use debias_core::spectrogram::StftConfig;
use debias_core::synth::{Demographics, EffectStrengths, SynthesisSpec};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// Per-class training size of the desk-scale splits.
pub const TOY_TRAIN_PER_CLASS: usize = 200;

/// Desk-scale pool, `[label][gender][smoking]` with ages uniform over 10-85.
/// Male smokers are plentiful enough for the males-only smoking split.
pub const TOY_CELLS: [[[usize; 2]; 2]; 2] = [[[130, 300], [40, 300]], [[260, 300], [40, 300]]];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub toy: bool,
    pub synth: SynthSection,
    pub split: SplitSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    /// About two males per female, ages concentrated in 18-50.
    Clinical,
    /// Explicit cell counts with ages spread uniformly.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Defaults to `clinical`, or `uniform` under `toy`.
    pub cohort: Option<Cohort>,
    pub diseased_smokers: usize,
    pub diseased_non_smokers: usize,
    pub normal_smokers: usize,
    pub normal_non_smokers: usize,
    /// `[label][gender][smoking]`: diseased/normal, male/female, smoker/non-smoker.
    pub uniform_cells: [[[usize; 2]; 2]; 2],
    pub disease_effect_strength: f64,
    pub gender_effect: f64,
    pub age_effect: f64,
    pub smoking_effect: f64,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            cohort: None,
            diseased_smokers: 156,
            diseased_non_smokers: 866,
            normal_smokers: 301,
            normal_non_smokers: 2355,
            uniform_cells: TOY_CELLS,
            disease_effect_strength: 1.0,
            gender_effect: 1.0,
            age_effect: 1.0,
            smoking_effect: 1.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub bias_kind: String,
    /// Defaults to the scenario's reference size, or 200 under `toy`.
    pub train_per_class: Option<usize>,
    pub test_per_class: usize,
    pub skew: f64,
    pub seed: Option<u64>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            bias_kind: BiasKind::Gender.as_str().into(),
            train_per_class: None,
            test_per_class: DEFAULT_TEST_PER_CLASS,
            skew: DEFAULT_SKEW,
            seed: None,
        }
    }
}

/// Training keys. Each omitted key keeps the preset value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub conv_blocks: Option<usize>,
    pub base_channels: Option<usize>,
    pub lstm_units: Option<usize>,
    pub head_hidden: Option<usize>,
    pub input_size: Option<usize>,
    pub bias_attribute: Option<String>,
    pub bias_predictor_steps: Option<usize>,
    pub encoder_adv_steps: Option<usize>,
    pub lambda_adv: Option<f64>,
    pub bias_lr_scale: Option<f64>,
    pub adv_warmup_epochs: Option<usize>,
    pub adv_ramp_epochs: Option<usize>,
    pub balanced_bias_loss: Option<bool>,
    pub adv_stop_at_chance: Option<bool>,
    pub seed: Option<u64>,
}

impl TrainSection {
    /// Every key set from `cfg`.
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            epochs: Some(cfg.epochs),
            batch_size: Some(cfg.batch_size),
            lr: Some(cfg.lr),
            conv_blocks: Some(cfg.conv_blocks),
            base_channels: Some(cfg.base_channels),
            lstm_units: Some(cfg.lstm_units),
            head_hidden: Some(cfg.head_hidden),
            input_size: Some(cfg.input_size),
            bias_attribute: Some(cfg.bias_attribute.as_str().into()),
            bias_predictor_steps: Some(cfg.phase_schedule.bias_predictor_steps),
            encoder_adv_steps: Some(cfg.phase_schedule.encoder_adv_steps),
            lambda_adv: Some(cfg.lambda_adv),
            bias_lr_scale: Some(cfg.bias_lr_scale),
            adv_warmup_epochs: Some(cfg.adv_warmup_epochs),
            adv_ramp_epochs: Some(cfg.adv_ramp_epochs),
            balanced_bias_loss: Some(cfg.balanced_bias_loss),
            adv_stop_at_chance: Some(cfg.adv_stop_at_chance),
            seed: Some(cfg.seed),
        }
    }

    pub fn apply(&self, base: &TrainConfig) -> AppResult<TrainConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(epochs, batch_size, lr, conv_blocks, base_channels, lstm_units, head_hidden, input_size, lambda_adv, bias_lr_scale, adv_warmup_epochs, adv_ramp_epochs, balanced_bias_loss, adv_stop_at_chance, seed);
        if let Some(a) = &self.bias_attribute {
            c.bias_attribute = a.parse::<BiasAttribute>()?;
        }
        let PhaseSchedule { bias_predictor_steps, encoder_adv_steps } = c.phase_schedule;
        c.phase_schedule = PhaseSchedule {
            bias_predictor_steps: self.bias_predictor_steps.unwrap_or(bias_predictor_steps),
            encoder_adv_steps: self.encoder_adv_steps.unwrap_or(encoder_adv_steps),
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub folds: usize,
    /// Adds the CNN baseline to comparison tables.
    pub with_cnn: bool,
    /// Writes a bar chart of metric deltas next to each comparison report.
    pub chart: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { folds: 10, with_cnn: false, chart: true }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> AppResult<Self> {
        toml::from_str(text).map_err(|e| AppError::InvalidConfig(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig::default()
    }

    pub fn cohort(&self) -> Cohort {
        self.synth.cohort.unwrap_or(if self.toy { Cohort::Uniform } else { Cohort::Clinical })
    }

    pub fn demographics(&self) -> Demographics {
        let s = &self.synth;
        match self.cohort() {
            Cohort::Clinical => Demographics::cohort(
                (s.diseased_smokers, s.diseased_non_smokers),
                (s.normal_smokers, s.normal_non_smokers),
            ),
            Cohort::Uniform => Demographics::uniform_ages(s.uniform_cells),
        }
    }

    pub fn synthesis(&self) -> AppResult<(SynthesisSpec, Demographics)> {
        let demographics = self.demographics();
        let total = demographics.total();
        if total == 0 {
            return Err(AppError::InvalidConfig("synth requests zero subjects".into()));
        }
        let s = &self.synth;
        let spec = SynthesisSpec {
            n_subjects: total,
            disease_prevalence: demographics.diseased_total() as f64 / total as f64,
            confound_effects: EffectStrengths { gender: s.gender_effect, age: s.age_effect, smoking: s.smoking_effect },
            disease_effect_strength: s.disease_effect_strength,
            seed: s.seed.unwrap_or(self.seed),
        };
        spec.validate()?;
        Ok((spec, demographics))
    }

    pub fn bias_kind(&self) -> AppResult<BiasKind> {
        Ok(BiasKind::parse(&self.split.bias_kind)?)
    }

    pub fn split_spec(&self) -> AppResult<SplitSpec> {
        let kind = self.bias_kind()?;
        let default_train = if self.toy { TOY_TRAIN_PER_CLASS } else { kind.reference_train_per_class() };
        let spec = SplitSpec {
            bias_kind: kind,
            train_per_class: self.split.train_per_class.unwrap_or(default_train),
            test_per_class: self.split.test_per_class,
            skew: self.split.skew,
            seed: self.split.seed.unwrap_or(self.seed),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Preset, then file keys. The bias attribute follows the split kind
    /// unless set explicitly.
    pub fn train_config(&self) -> AppResult<TrainConfig> {
        let mut base = if self.toy { TrainConfig::toy() } else { TrainConfig::default() };
        base.seed = self.seed;
        base.bias_attribute = BiasAttribute::for_split(self.bias_kind()?);
        self.train.apply(&base)
    }
}

/// `key=value` pairs describing a training run, in a fixed order.
pub fn describe_train(kind: BaselineKind, cfg: &TrainConfig) -> Vec<(String, String)> {
    let mut out = vec![("model".to_string(), kind.as_str().to_string())];
    let section = toml::Value::try_from(TrainSection::from_config(cfg)).expect("train section serializes");
    if let toml::Value::Table(t) = section {
        for key in TRAIN_KEYS {
            if let Some(v) = t.get(*key) {
                let v = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.push((key.to_string(), v));
            }
        }
    }
    out
}

const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr",
    "conv_blocks",
    "base_channels",
    "lstm_units",
    "head_hidden",
    "input_size",
    "bias_attribute",
    "bias_predictor_steps",
    "encoder_adv_steps",
    "lambda_adv",
    "bias_lr_scale",
    "adv_warmup_epochs",
    "adv_ramp_epochs",
    "balanced_bias_loss",
    "adv_stop_at_chance",
    "seed",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        let (spec, demo) = c.synthesis().unwrap();
        assert_eq!((spec.n_subjects, demo.diseased_total(), demo.normal_total()), (3678, 1022, 2656));
        assert_eq!(c.split_spec().unwrap().train_per_class, 925);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1", "[train]\nepoch = 3", "[synth]\nsubjects = 4"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(AppError::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn toy_preset_and_overrides() {
        let c = ExperimentConfig::parse("toy = true\nseed = 4\n[train]\nepochs = 7\n[split]\nbias_kind = \"smoking\"").unwrap();
        let t = c.train_config().unwrap();
        assert_eq!((t.epochs, t.input_size, t.conv_blocks, t.lstm_units, t.seed), (7, 32, 2, 16, 4));
        assert_eq!(t.bias_attribute, BiasAttribute::Smoking);
        assert_eq!(c.split_spec().unwrap().train_per_class, TOY_TRAIN_PER_CLASS);
        assert_eq!(c.cohort(), Cohort::Uniform);
    }

    #[test]
    fn zero_subjects_is_invalid() {
        let c = ExperimentConfig::parse(
            "[synth]\ndiseased_smokers = 0\ndiseased_non_smokers = 0\nnormal_smokers = 0\nnormal_non_smokers = 0",
        )
        .unwrap();
        assert!(matches!(c.synthesis(), Err(AppError::InvalidConfig(_))));
    }

    #[test]
    fn describe_round_trips_through_train_section() {
        let cfg = TrainConfig::toy();
        let pairs = describe_train(BaselineKind::RbfNet, &cfg);
        assert_eq!(pairs[0], ("model".into(), "rbf_net".into()));
        let text: String = pairs[1..].iter().map(|(k, v)| format!("{k} = {}\n", quote(k, v))).collect();
        let section: TrainSection = toml::from_str(&text).unwrap();
        assert_eq!(section.apply(&TrainConfig::default()).unwrap(), cfg);
    }

    fn quote(k: &str, v: &str) -> String {
        if k == "bias_attribute" {
            format!("{v:?}")
        } else {
            v.to_string()
        }
    }
}

//! The three networks (feature encoder, disease classifier, bias predictor),
//! their baselines, and the three-phase adversarial training schedule.
//!
//! Each training batch runs
//! 1. classification: `L_C` updates the encoder and classifier;
//! 2. bias prediction: with the encoder frozen, `L_B` on the batch's normal
//!    samples updates the bias predictor;
//! 3. adversarial encoding: with the bias predictor frozen, the encoder takes
//!    a step that increases `L_B` on the same normal samples.
//!
//! Baselines run phase 1 only and never allocate a bias predictor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dataset::{BiasKind, Label, Labeled};
use crate::eval::Confusion;
use crate::neural::{
    adam_update, bce_grad, bce_loss, mse_grad, mse_loss, Activation, AdamConfig, Encoder, EncoderSpec,
    Head, ParamGroup, TemporalSpec, Tensor,
};
use crate::math;
use crate::rng::Rng;
use crate::spectrogram::SPECTROGRAM_SIZE;
use crate::synth::{ConfoundProfile, Gender, Smoking, MAX_AGE, MIN_AGE};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// Conv blocks, flatten, dense features, classifier.
    Cnn,
    /// Conv blocks and LSTM encoder with the classifier.
    CnnLstm,
    /// CNN-LSTM plus the adversarial bias predictor.
    RbfNet,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Cnn, BaselineKind::CnnLstm, BaselineKind::RbfNet];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Cnn => "cnn",
            BaselineKind::CnnLstm => "cnn_lstm",
            BaselineKind::RbfNet => "rbf_net",
        }
    }

    pub fn has_bias_predictor(self) -> bool {
        self == BaselineKind::RbfNet
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind {s:?}")))
    }
}

/// Confound the bias predictor is trained to recover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BiasAttribute {
    /// Target 1 for male.
    Gender,
    /// Continuous target `(age - 10) / 75`.
    Age,
    /// Target 1 for smoker.
    Smoking,
}

impl BiasAttribute {
    pub const ALL: [BiasAttribute; 3] = [BiasAttribute::Gender, BiasAttribute::Age, BiasAttribute::Smoking];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasAttribute::Gender => "gender",
            BiasAttribute::Age => "age",
            BiasAttribute::Smoking => "smoking",
        }
    }

    pub fn is_binary(self) -> bool {
        self != BiasAttribute::Age
    }

    pub fn head_activation(self) -> Activation {
        if self.is_binary() {
            Activation::Sigmoid
        } else {
            Activation::Identity
        }
    }

    pub fn target(self, profile: &ConfoundProfile) -> f64 {
        match self {
            BiasAttribute::Gender => (profile.gender == Gender::Male) as u8 as f64,
            BiasAttribute::Smoking => (profile.smoking == Smoking::Smoker) as u8 as f64,
            BiasAttribute::Age => age_target(profile.age_years),
        }
    }

    /// Attribute skewed by a split; the unbiased control uses gender.
    pub fn for_split(kind: BiasKind) -> Self {
        match kind {
            BiasKind::Gender | BiasKind::Unbiased => BiasAttribute::Gender,
            BiasKind::AgeGroup1 | BiasKind::AgeGroup2 => BiasAttribute::Age,
            BiasKind::Smoking => BiasAttribute::Smoking,
        }
    }

    pub fn loss(self, pred: &[f64], target: &[f64]) -> f64 {
        if self.is_binary() {
            bce_loss(pred, target)
        } else {
            mse_loss(pred, target)
        }
    }

    fn loss_grad(self, pred: &[f64], target: &[f64]) -> Vec<f64> {
        if self.is_binary() {
            bce_grad(pred, target)
        } else {
            mse_grad(pred, target)
        }
    }
}

impl FromStr for BiasAttribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BiasAttribute::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown bias attribute {s:?}")))
    }
}

/// Maps the corpus age range onto `[0, 1]`.
pub fn age_target(age_years: u8) -> f64 {
    (age_years as f64 - MIN_AGE as f64) / (MAX_AGE - MIN_AGE) as f64
}

/// Updates per batch for phases 2 and 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseSchedule {
    pub bias_predictor_steps: usize,
    pub encoder_adv_steps: usize,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        Self { bias_predictor_steps: 1, encoder_adv_steps: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub conv_blocks: usize,
    /// Channels of the first block; each later block doubles it.
    pub base_channels: usize,
    pub lstm_units: usize,
    pub head_hidden: usize,
    pub input_size: usize,
    pub bias_attribute: BiasAttribute,
    pub phase_schedule: PhaseSchedule,
    /// Scales the step size of the adversarial encoder update.
    pub lambda_adv: f64,
    /// Bias-predictor learning rate as a multiple of `lr`.
    pub bias_lr_scale: f64,
    /// Epochs with the adversarial step disabled.
    pub adv_warmup_epochs: usize,
    /// Epochs over which the adversarial weight then rises linearly to
    /// `lambda_adv`.
    pub adv_ramp_epochs: usize,
    /// Class-balanced bias loss for binary attributes.
    pub balanced_bias_loss: bool,
    /// Skips the adversarial step on batches whose bias loss is already at
    /// chance level.
    pub adv_stop_at_chance: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 256,
            lr: 1e-4,
            conv_blocks: 4,
            base_channels: 16,
            lstm_units: 256,
            head_hidden: 64,
            input_size: SPECTROGRAM_SIZE,
            bias_attribute: BiasAttribute::Gender,
            phase_schedule: PhaseSchedule::default(),
            lambda_adv: 1.0,
            bias_lr_scale: 1.0,
            adv_warmup_epochs: 0,
            adv_ramp_epochs: 0,
            balanced_bias_loss: false,
            adv_stop_at_chance: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 32x32 inputs, 2 blocks, 16 LSTM units, 60 epochs.
    /// The adversary waits 20 epochs, ramps in over 10, uses the balanced
    /// bias loss and stops ascending once the bias loss reaches chance.
    pub fn toy() -> Self {
        Self {
            phase_schedule: PhaseSchedule { bias_predictor_steps: 2, encoder_adv_steps: 2 },
            lambda_adv: 2.0,
            adv_warmup_epochs: 20,
            adv_ramp_epochs: 10,
            balanced_bias_loss: true,
            adv_stop_at_chance: true,
            epochs: 60,
            batch_size: 16,
            lr: 1e-3,
            conv_blocks: 2,
            base_channels: 4,
            lstm_units: 16,
            head_hidden: 64,
            input_size: 32,
            ..Self::default()
        }
    }

    /// Adversarial weight used during `epoch`.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if epoch < self.adv_warmup_epochs {
            return 0.0;
        }
        let into = (epoch - self.adv_warmup_epochs + 1) as f64;
        match self.adv_ramp_epochs {
            0 => self.lambda_adv,
            r => self.lambda_adv * (into / r as f64).min(1.0),
        }
    }

    pub fn channel_plan(&self) -> Vec<usize> {
        (0..self.conv_blocks).map(|i| self.base_channels << i).collect()
    }

    pub fn encoder_spec(&self, kind: BaselineKind) -> EncoderSpec {
        let temporal = match kind {
            BaselineKind::Cnn => TemporalSpec::Dense { units: self.lstm_units },
            _ => TemporalSpec::Lstm { units: self.lstm_units },
        };
        EncoderSpec { input_size: self.input_size, channels: self.channel_plan(), temporal }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_adv.is_finite()) {
            return bad(format!("lambda_adv {} must be non-negative", self.lambda_adv));
        }
        if !(self.bias_lr_scale > 0.0 && self.bias_lr_scale.is_finite()) {
            return bad(format!("bias_lr_scale {} must be positive", self.bias_lr_scale));
        }
        if self.conv_blocks == 0 || self.base_channels == 0 || self.lstm_units == 0 || self.head_hidden == 0 {
            return bad("layer sizes must be positive".into());
        }
        if self.input_size >> self.conv_blocks == 0 {
            return bad(format!("input size {} too small for {} blocks", self.input_size, self.conv_blocks));
        }
        if self.phase_schedule.bias_predictor_steps == 0 {
            return bad("bias_predictor_steps must be at least 1".into());
        }
        Ok(())
    }
}

/// One model input with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Row-major `input_size x input_size` spectrogram.
    pub input: Vec<f64>,
    pub label: Label,
    pub profile: ConfoundProfile,
}

impl Labeled for Example {
    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasPredictor {
    pub attribute: BiasAttribute,
    /// Reweights each batch so both attribute values carry equal total weight.
    pub balanced: bool,
    pub head: Head,
    pub params: ParamGroup,
}

impl BiasPredictor {
    /// Per-sample loss weights with mean 1. With `balanced` set and both
    /// attribute values present, each value's samples share half the weight.
    pub fn sample_weights(&self, targets: &[f64]) -> Vec<f64> {
        let n = targets.len() as f64;
        let pos = targets.iter().filter(|&&t| t >= 0.5).count() as f64;
        if !self.balanced || pos == 0.0 || pos == n {
            return vec![1.0; targets.len()];
        }
        targets.iter().map(|&t| if t >= 0.5 { n / (2.0 * pos) } else { n / (2.0 * (n - pos)) }).collect()
    }

    /// Weighted loss of the best constant prediction: the entropy of the
    /// weighted positive rate for binary attributes, the weighted variance
    /// otherwise.
    pub fn chance_loss(&self, targets: &[f64]) -> f64 {
        let w = self.sample_weights(targets);
        let n = targets.len() as f64;
        let mean = targets.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / n;
        if self.attribute.is_binary() {
            let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * math::ln(q) };
            h(mean) + h(1.0 - mean)
        } else {
            targets.iter().zip(&w).map(|(t, w)| w * (t - mean) * (t - mean)).sum::<f64>() / n
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfNetModel {
    pub kind: BaselineKind,
    pub encoder_net: Encoder,
    /// Encoder parameters.
    pub encoder: ParamGroup,
    pub classifier_net: Head,
    /// Classifier parameters.
    pub classifier: ParamGroup,
    pub bias: Option<BiasPredictor>,
    pub adam: AdamConfig,
}

fn refs<'a>(inputs: &[&'a Example]) -> Vec<&'a [f64]> {
    inputs.iter().map(|e| e.input.as_slice()).collect()
}

impl RbfNetModel {
    /// Seeded initialization. Encoder and classifier draws come first, so
    /// every kind that shares them starts from the same weights.
    pub fn new(kind: BaselineKind, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::stream(cfg.seed, 0);
        let mut encoder = ParamGroup::new("encoder");
        let encoder_net = Encoder::init(&cfg.encoder_spec(kind), &mut encoder, &mut rng)?;
        let feat = encoder_net.output_dim();
        let mut classifier = ParamGroup::new("classifier");
        let classifier_net = Head::init(&mut classifier, feat, cfg.head_hidden, Activation::Sigmoid, &mut rng);
        let bias = if kind.has_bias_predictor() {
            let mut params = ParamGroup::new("bias_predictor");
            let attr = cfg.bias_attribute;
            let head = Head::init(&mut params, feat, cfg.head_hidden, attr.head_activation(), &mut rng);
            Some(BiasPredictor { attribute: attr, balanced: cfg.balanced_bias_loss && attr.is_binary(), head, params })
        } else {
            None
        };
        Ok(Self { kind, encoder_net, encoder, classifier_net, classifier, bias, adam: AdamConfig::default() })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder_net.output_dim()
    }

    pub fn input_size(&self) -> usize {
        self.encoder_net.spec.input_size
    }

    pub fn features(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.encoder_net.features(&self.encoder.values, input)
    }

    /// Disease probabilities in `(0, 1)`.
    pub fn forward_classify(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        inputs
            .iter()
            .map(|x| {
                let f = self.features(x)?;
                Ok(self.classifier_net.forward(&self.classifier.values, &f).output)
            })
            .collect()
    }

    pub fn predict(&self, examples: &[&Example]) -> Result<Vec<f64>> {
        self.forward_classify(&refs(examples))
    }

    fn bias_predictor(&self) -> Result<&BiasPredictor> {
        self.bias
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("{} has no bias predictor", self.kind)))
    }

    /// Bias-predictor outputs: probabilities for binary attributes, raw
    /// normalized-age estimates for age.
    pub fn forward_bias(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let bp = self.bias_predictor()?;
        inputs
            .iter()
            .map(|x| {
                let f = self.features(x)?;
                Ok(bp.head.forward(&bp.params.values, &f).output)
            })
            .collect()
    }

    /// Phase 1: one ADAM step of encoder and classifier on `L_C`. Returns
    /// the loss before the step.
    pub fn train_phase1_classification(&mut self, inputs: &[&[f64]], labels: &[f64], lr: f64) -> Result<f64> {
        check_batch(inputs, labels)?;
        self.encoder.zero_grad();
        self.classifier.zero_grad();
        let n = inputs.len() as f64;
        let mut loss = 0.0;
        for (x, &t) in inputs.iter().zip(labels) {
            let (f, ec) = self.encoder_net.forward(&self.encoder.values, x)?;
            let hc = self.classifier_net.forward(&self.classifier.values, &f);
            loss += bce_loss(&[hc.output], &[t]) / n;
            let dp = bce_grad(&[hc.output], &[t])[0] / n;
            let df = self.classifier_net.backward(&self.classifier.values, &mut self.classifier.grads, &f, &hc, dp);
            self.encoder_net.backward(&self.encoder.values, &mut self.encoder.grads, &ec, &df, false);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("classification loss"));
        }
        self.classifier.adam_step(lr, &self.adam)?;
        self.encoder.adam_step(lr, &self.adam)?;
        Ok(loss)
    }

    /// Phase 2 on precomputed encoder features.
    pub fn fit_bias_on_features(&mut self, features: &[Vec<f64>], targets: &[f64], lr: f64) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::EmptyConditionedBatch);
        }
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch(format!("{} features, {} targets", features.len(), targets.len())));
        }
        let adam = self.adam;
        let bp = self
            .bias
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("model has no bias predictor".into()))?;
        bp.params.zero_grad();
        let n = features.len() as f64;
        let mut loss = 0.0;
        let w = bp.sample_weights(targets);
        for ((f, &t), w) in features.iter().zip(targets).zip(w) {
            let hc = bp.head.forward(&bp.params.values, f);
            loss += bp.attribute.loss(&[hc.output], &[t]) / n;
            let d = w * bp.attribute.loss_grad(&[hc.output], &[t])[0] / n;
            bp.head.backward(&bp.params.values, &mut bp.params.grads, f, &hc, d);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("bias loss"));
        }
        bp.params.adam_step(lr, &adam)?;
        Ok(loss)
    }

    /// Phase 2: one ADAM step of the bias predictor on normal-class inputs
    /// with the encoder frozen. Returns the loss before the step.
    pub fn train_phase2_bias_predictor(&mut self, inputs: &[&[f64]], bias_targets: &[f64], lr: f64) -> Result<f64> {
        self.bias_predictor()?;
        if inputs.is_empty() {
            return Err(Error::EmptyConditionedBatch);
        }
        check_batch(inputs, bias_targets)?;
        let feats = inputs.iter().map(|x| self.features(x)).collect::<Result<Vec<_>>>()?;
        self.fit_bias_on_features(&feats, bias_targets, lr)
    }

    /// Gradient of `L_B` with respect to the encoder parameters, leaving
    /// every group untouched. Returns `(L_B, grads)`.
    pub fn bias_loss_encoder_grad(&self, inputs: &[&[f64]], bias_targets: &[f64]) -> Result<(f64, Vec<Tensor>)> {
        let (loss, _, grads) = self.bias_loss_parts(inputs, bias_targets)?;
        Ok((loss, grads))
    }

    /// `(L_B, sample-weighted L_B, encoder grads of the weighted loss)`.
    fn bias_loss_parts(&self, inputs: &[&[f64]], bias_targets: &[f64]) -> Result<(f64, f64, Vec<Tensor>)> {
        let bp = self.bias_predictor()?;
        if inputs.is_empty() {
            return Err(Error::EmptyConditionedBatch);
        }
        check_batch(inputs, bias_targets)?;
        let mut enc_grads: Vec<Tensor> = self.encoder.values.iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut head_scratch: Vec<Tensor> = bp.params.values.iter().map(|t| Tensor::zeros(t.shape())).collect();
        let n = inputs.len() as f64;
        let mut loss = 0.0;
        let mut cache = Vec::new();
        for (x, &t) in inputs.iter().zip(bias_targets) {
            let (f, ec) = self.encoder_net.forward(&self.encoder.values, x)?;
            let hc = bp.head.forward(&bp.params.values, &f);
            loss += bp.attribute.loss(&[hc.output], &[t]) / n;
            cache.push((f, ec, hc, t));
        }
        let w = bp.sample_weights(bias_targets);
        let weighted: f64 =
            cache.iter().zip(&w).map(|((_, _, hc, t), w)| w * bp.attribute.loss(&[hc.output], &[*t])).sum::<f64>() / n;
        let ds = cache.iter().zip(w).map(|((_, _, hc, t), w)| w * bp.attribute.loss_grad(&[hc.output], &[*t])[0] / n);
        for ((f, ec, hc, _), d) in cache.iter().zip(ds) {
            let df = bp.head.backward(&bp.params.values, &mut head_scratch, f, hc, d);
            self.encoder_net.backward(&self.encoder.values, &mut enc_grads, ec, &df, false);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("bias loss"));
        }
        Ok((loss, weighted, enc_grads))
    }

    fn ascend_bias_loss(&mut self, mut grads: Vec<Tensor>, lr: f64, lambda_adv: f64) -> Result<()> {
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v = -lambda_adv * *v);
        }
        adam_update(&mut self.encoder.values, &grads, &mut self.encoder.adam, lr, &self.adam)
    }

    /// Phase 3: one encoder step that increases `L_B` through the frozen
    /// bias predictor. The gradient `-lambda_adv * dL_B/dE` goes through the
    /// encoder's ADAM moments, shared with phase 1. Returns `L_B` before the
    /// step; `lambda_adv = 0` leaves the model untouched.
    pub fn train_phase3_adversarial_encoder(
        &mut self,
        inputs: &[&[f64]],
        bias_targets: &[f64],
        lr: f64,
        lambda_adv: f64,
    ) -> Result<f64> {
        let (loss, _, grads) = self.bias_loss_parts(inputs, bias_targets)?;
        if lambda_adv != 0.0 {
            self.ascend_bias_loss(grads, lr, lambda_adv)?;
        }
        Ok(loss)
    }

    /// Phase 3 capped at chance: no step once the weighted `L_B` reaches the
    /// loss of the best constant prediction on this batch. Returns `L_B` and
    /// whether the encoder moved.
    pub fn train_phase3_to_chance(
        &mut self,
        inputs: &[&[f64]],
        bias_targets: &[f64],
        lr: f64,
        lambda_adv: f64,
    ) -> Result<(f64, bool)> {
        let (loss, weighted, grads) = self.bias_loss_parts(inputs, bias_targets)?;
        let chance = self.bias_predictor()?.chance_loss(bias_targets);
        if lambda_adv == 0.0 || weighted >= chance {
            return Ok((loss, false));
        }
        self.ascend_bias_loss(grads, lr, lambda_adv)?;
        Ok((loss, true))
    }

    /// Every parameter group in checkpoint order.
    pub fn groups(&self) -> Vec<&ParamGroup> {
        let mut g = vec![&self.encoder, &self.classifier];
        if let Some(bp) = &self.bias {
            g.push(&bp.params);
        }
        g
    }

    pub fn groups_mut(&mut self) -> Vec<&mut ParamGroup> {
        let mut g = vec![&mut self.encoder, &mut self.classifier];
        if let Some(bp) = &mut self.bias {
            g.push(&mut bp.params);
        }
        g
    }
}

fn check_batch(inputs: &[&[f64]], targets: &[f64]) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::LengthMismatch(format!("{} inputs, {} targets", inputs.len(), targets.len())));
    }
    if inputs.is_empty() {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean phase-1 loss over the epoch's batches.
    pub classification_loss: f64,
    /// Mean phase-2 loss over batches that ran phase 2.
    pub bias_loss: Option<f64>,
    pub validation: Option<ValidationMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Epoch and snapshot with the highest validation accuracy.
    pub best: Option<(usize, RbfNetModel)>,
}

pub fn validation_metrics(model: &RbfNetModel, data: &[&Example]) -> Result<ValidationMetrics> {
    let probs = model.predict(data)?;
    let labels: Vec<bool> = data.iter().map(|e| e.label.is_diseased()).collect();
    let c = Confusion::from_predictions(&probs, &labels, 0.5)?;
    Ok(ValidationMetrics { accuracy: c.accuracy(), sensitivity: c.sensitivity(), specificity: c.specificity() })
}

/// Trains `model` for `cfg.epochs` epochs of shuffled mini-batches. For the
/// adversarial model every batch runs phases 1, 2 and 3; batches without a
/// normal sample run phase 1 only.
pub fn train(
    model: &mut RbfNetModel,
    data: &[&Example],
    validation: Option<&[&Example]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if let Some(bp) = &model.bias {
        if bp.attribute != cfg.bias_attribute {
            return Err(Error::InvalidConfig(format!(
                "model predicts {}, config asks for {}",
                bp.attribute.as_str(),
                cfg.bias_attribute.as_str()
            )));
        }
    }
    let attr = cfg.bias_attribute;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, RbfNetModel)> = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        Rng::stream(cfg.seed, 1 + epoch as u64).shuffle(&mut order);
        let (mut lc_sum, mut lb_sum, mut batches, mut bias_batches) = (0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| data[i].input.as_slice()).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| data[i].label.target()).collect();
            lc_sum += model.train_phase1_classification(&inputs, &labels, cfg.lr)?;
            batches += 1;
            if model.bias.is_none() {
                continue;
            }
            let normals: Vec<usize> = chunk.iter().copied().filter(|&i| data[i].label == Label::Normal).collect();
            if normals.is_empty() {
                continue;
            }
            let n_inputs: Vec<&[f64]> = normals.iter().map(|&i| data[i].input.as_slice()).collect();
            let targets: Vec<f64> = normals.iter().map(|&i| attr.target(&data[i].profile)).collect();
            let feats = n_inputs.iter().map(|x| model.features(x)).collect::<Result<Vec<_>>>()?;
            for step in 0..cfg.phase_schedule.bias_predictor_steps {
                let l = model.fit_bias_on_features(&feats, &targets, cfg.lr * cfg.bias_lr_scale)?;
                if step == 0 {
                    lb_sum += l;
                }
            }
            let lambda = cfg.lambda_at(epoch);
            for _ in 0..cfg.phase_schedule.encoder_adv_steps {
                if !cfg.adv_stop_at_chance {
                    model.train_phase3_adversarial_encoder(&n_inputs, &targets, cfg.lr, lambda)?;
                } else if !model.train_phase3_to_chance(&n_inputs, &targets, cfg.lr, lambda)?.1 {
                    break;
                }
            }
            bias_batches += 1;
        }
        let val = match validation {
            Some(v) if !v.is_empty() => Some(validation_metrics(model, v)?),
            _ => None,
        };
        if let Some(m) = val {
            if m.accuracy > best_acc {
                best_acc = m.accuracy;
                best = Some((epoch, model.clone()));
            }
        }
        log.push(EpochLog {
            epoch,
            classification_loss: lc_sum / batches as f64,
            bias_loss: (bias_batches > 0).then(|| lb_sum / bias_batches as f64),
            validation: val,
        });
    }
    Ok(TrainOutcome { log, best })
}

/// Fresh model of `kind` trained on `data`; returns the final state.
pub fn fit(kind: BaselineKind, data: &[&Example], validation: Option<&[&Example]>, cfg: &TrainConfig) -> Result<(RbfNetModel, TrainOutcome)> {
    let mut model = RbfNetModel::new(kind, cfg)?;
    let outcome = train(&mut model, data, validation, cfg)?;
    Ok((model, outcome))
}

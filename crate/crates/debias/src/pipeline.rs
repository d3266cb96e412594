//! Clip preparation and spectrogram extraction shared by the CLI and the
//! experiment drivers.

use debias_core::audio::{
    passes_duration_filter, trim_silence, AudioClip, DEFAULT_MIN_SILENCE_RUN_MS, DEFAULT_SILENCE_THRESHOLD,
};
use debias_core::dataset::SubjectRecord;
use debias_core::model::Example;
use debias_core::spectrogram::{spectrogram_from_power, stft_power, Spectrogram, StftConfig};
use debias_core::synth::{plan_corpus, synthesize_subject, Demographics, SynthesisSpec};
use debias_core::Error as CoreError;

use crate::error::AppResult;

/// Quantizes to 16-bit PCM (what a WAV round trip yields), trims silent
/// edges and applies the duration filter. `None` means the clip is dropped.
pub fn prepare_clip(clip: &AudioClip) -> AppResult<Option<AudioClip>> {
    let trimmed = match trim_silence(&clip.quantized(), DEFAULT_SILENCE_THRESHOLD, DEFAULT_MIN_SILENCE_RUN_MS) {
        Ok(c) => c,
        Err(CoreError::EmptyAfterTrim) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    Ok(passes_duration_filter(&trimmed).then_some(trimmed))
}

/// One STFT, resampled to each requested size.
pub fn spectrograms(clip: &AudioClip, cfg: &StftConfig, sizes: &[usize]) -> AppResult<Vec<Spectrogram>> {
    let power = stft_power(clip, cfg)?;
    Ok(sizes.iter().map(|&s| spectrogram_from_power(&power, cfg, clip.sample_rate_hz(), s)).collect())
}

/// Rounds through `f32`, the on-disk precision, so cached and freshly
/// computed inputs are identical.
pub fn to_model_input(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| v as f32 as f64).collect()
}

/// A prepared subject: its record and one model input per requested size.
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub record: SubjectRecord,
    pub inputs: Vec<Vec<f64>>,
}

impl PreparedSubject {
    pub fn example(&self, size_index: usize) -> Example {
        Example {
            input: self.inputs[size_index].clone(),
            label: self.record.label,
            profile: self.record.profile,
        }
    }
}

/// Synthesizes a corpus in memory and extracts spectrograms at `sizes`,
/// dropping clips that fail the duration filter.
pub fn synthesize_prepared(
    spec: &SynthesisSpec,
    demographics: &Demographics,
    cfg: &StftConfig,
    sizes: &[usize],
) -> AppResult<Vec<PreparedSubject>> {
    let mut out = Vec::new();
    for planned in plan_corpus(spec, demographics)? {
        let (record, clip) =
            synthesize_subject(planned.record.profile, planned.record.label.is_diseased(), spec, planned.index);
        let Some(clip) = prepare_clip(&clip)? else { continue };
        let inputs = spectrograms(&clip, cfg, sizes)?.iter().map(|s| to_model_input(&s.values)).collect();
        out.push(PreparedSubject { record, inputs });
    }
    Ok(out)
}

//! Mono PCM clips and the pre-processing rules applied before feature
//! extraction: edge-silence trimming and the minimum-duration filter.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const CANONICAL_SAMPLE_RATE_HZ: u32 = 44_100;
/// Clips must be strictly longer than this to be kept.
pub const MIN_DURATION_S: f64 = 2.0;
pub const DEFAULT_SILENCE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_MIN_SILENCE_RUN_MS: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Validates that every sample is finite and within `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::InvalidClip(format!("sample {i} = {v} outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    /// Decodes 16-bit PCM values, scaling by `1 / 2^15`.
    pub fn from_pcm16(pcm: &[i16], sample_rate_hz: u32) -> Result<Self> {
        Self::new(pcm.iter().map(|&v| v as f64 / 32768.0).collect(), sample_rate_hz)
    }

    /// Encodes to 16-bit PCM. Exact inverse of [`AudioClip::from_pcm16`].
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples
            .iter()
            .map(|&v| {
                let q = libm::round(v * 32768.0);
                q.clamp(i16::MIN as f64, i16::MAX as f64) as i16
            })
            .collect()
    }

    /// Round-trips through 16-bit PCM, as writing and re-reading a WAV would.
    pub fn quantized(&self) -> Self {
        let pcm = self.to_pcm16();
        Self {
            samples: pcm.iter().map(|&v| v as f64 / 32768.0).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Removes leading and trailing runs with `|sample| < threshold` that last at
/// least `min_run_ms`. Shorter edge runs and everything in between are kept.
pub fn trim_silence(clip: &AudioClip, threshold: f64, min_run_ms: f64) -> Result<AudioClip> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidClip(format!("silence threshold {threshold} < 0")));
    }
    let s = clip.samples();
    let quiet = |v: &f64| v.abs() < threshold;
    let lead = s.iter().take_while(|v| quiet(v)).count();
    if lead == s.len() {
        return Err(Error::EmptyAfterTrim);
    }
    let trail = s.iter().rev().take_while(|v| quiet(v)).count();
    let min_run = libm::round(min_run_ms.max(0.0) * clip.sample_rate_hz() as f64 / 1000.0) as usize;
    let start = if lead >= min_run { lead } else { 0 };
    let end = if trail >= min_run { s.len() - trail } else { s.len() };
    Ok(AudioClip {
        samples: s[start..end].to_vec(),
        sample_rate_hz: clip.sample_rate_hz(),
    })
}

/// True iff the clip lasts strictly longer than two seconds.
pub fn passes_duration_filter(clip: &AudioClip) -> bool {
    // integer comparison avoids rounding at the boundary
    clip.len() as u64 > 2 * clip.sample_rate_hz() as u64
}

//! On-disk spectrogram cache keyed by clip checksum, STFT configuration and
//! output size. Entries are written atomically, so concurrent runs sharing a
//! directory at worst repeat work.

use std::path::{Path, PathBuf};

use debias_core::audio::AudioClip;
use debias_core::spectrogram::{StftConfig, Window};
use sha2::{Digest, Sha256};

use crate::checkpoint::hex;
use crate::error::AppResult;
use crate::pipeline::{spectrograms, to_model_input};
use crate::specfile::{decode_blob, encode_blob};

pub const CACHE_DIR_ENV: &str = "DEBIAS_CACHE_DIR";

/// SHA-256 over the 16-bit samples and sample rate.
pub fn clip_checksum(clip: &AudioClip) -> String {
    let mut h = Sha256::new();
    h.update(clip.sample_rate_hz().to_le_bytes());
    for s in clip.to_pcm16() {
        h.update(s.to_le_bytes());
    }
    hex(&h.finalize())
}

pub fn stft_hash(cfg: &StftConfig) -> String {
    let mut h = Sha256::new();
    h.update((cfg.window_len_samples as u64).to_le_bytes());
    h.update((cfg.hop_samples as u64).to_le_bytes());
    h.update((cfg.freq_bins as u64).to_le_bytes());
    h.update(cfg.log_floor.to_bits().to_le_bytes());
    h.update([match cfg.window {
        Window::Hamming => 0u8,
        Window::Rectangular => 1,
    }]);
    hex(&h.finalize()[..8])
}

#[derive(Clone, Debug)]
pub struct SpectrogramCache {
    dir: PathBuf,
}

impl SpectrogramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `DEBIAS_CACHE_DIR` if set, else `default`.
    pub fn from_env(default: &Path) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(d),
            _ => Self::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, checksum: &str, cfg: &StftConfig, size: usize) -> PathBuf {
        self.dir.join(format!("{checksum}-{}-{size}.bin", stft_hash(cfg)))
    }

    /// Model inputs of `clip` at each size, computing and storing any that
    /// are missing. Unreadable entries are recomputed.
    pub fn inputs(&self, clip: &AudioClip, cfg: &StftConfig, sizes: &[usize]) -> AppResult<Vec<Vec<f64>>> {
        let checksum = clip_checksum(clip);
        let paths: Vec<PathBuf> = sizes.iter().map(|&s| self.entry_path(&checksum, cfg, s)).collect();
        let cached: Vec<Option<Vec<f64>>> =
            paths.iter().zip(sizes).map(|(p, &s)| read_entry(p, s)).collect();
        if cached.iter().all(Option::is_some) {
            return Ok(cached.into_iter().map(Option::unwrap).collect());
        }
        let fresh = spectrograms(clip, cfg, sizes)?;
        let mut out = Vec::with_capacity(sizes.len());
        for ((spec, path), hit) in fresh.iter().zip(&paths).zip(cached) {
            if hit.is_none() {
                let values: Vec<f32> = spec.values.iter().map(|&v| v as f32).collect();
                crate::fsutil::write_atomic(path, &encode_blob(spec.size, spec.size, &values))?;
            }
            out.push(to_model_input(&spec.values));
        }
        Ok(out)
    }
}

fn read_entry(path: &Path, size: usize) -> Option<Vec<f64>> {
    let bytes = std::fs::read(path).ok()?;
    let (rows, cols, values) = decode_blob(&bytes)?;
    (rows == size && cols == size).then(|| values.into_iter().map(f64::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(seed: u32) -> AudioClip {
        let s: Vec<f64> = (0..44_100 * 3).map(|i| 0.3 * ((i as f64) * 0.01 * (1 + seed) as f64).sin()).collect();
        AudioClip::new(s, 44_100).unwrap().quantized()
    }

    #[test]
    fn cached_inputs_equal_fresh_ones() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrogramCache::new(dir.path());
        let cfg = StftConfig::default();
        let c = clip(0);
        let first = cache.inputs(&c, &cfg, &[32, 16]).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
        let second = cache.inputs(&c, &cfg, &[32, 16]).unwrap();
        assert_eq!(first, second);
        let direct: Vec<Vec<f64>> =
            spectrograms(&c, &cfg, &[32, 16]).unwrap().iter().map(|s| to_model_input(&s.values)).collect();
        assert_eq!(first, direct);
    }

    #[test]
    fn keys_separate_clips_configs_and_corrupt_entries_recompute() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrogramCache::new(dir.path());
        let cfg = StftConfig::default();
        assert_ne!(clip_checksum(&clip(0)), clip_checksum(&clip(1)));
        let other = StftConfig { hop_samples: 220, ..cfg };
        assert_ne!(stft_hash(&cfg), stft_hash(&other));
        let c = clip(2);
        let good = cache.inputs(&c, &cfg, &[16]).unwrap();
        let path = cache.entry_path(&clip_checksum(&c), &cfg, 16);
        std::fs::write(&path, b"junk").unwrap();
        assert_eq!(cache.inputs(&c, &cfg, &[16]).unwrap(), good);
        assert_eq!(read_entry(&path, 16).unwrap().len(), 256);
    }
}

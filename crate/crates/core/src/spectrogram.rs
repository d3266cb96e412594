//! Log-power spectrograms: Hamming-windowed STFT, folding of the
//! non-negative-frequency power bins into a fixed number of bands, log
//! compression, bilinear resampling to a square grid and per-sample min-max
//! normalization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::audio::{passes_duration_filter, AudioClip};
use crate::fft::RealFft;
use crate::math;
use crate::{Error, Result};

/// Side length of model-input spectrograms.
pub const SPECTROGRAM_SIZE: usize = 224;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Window {
    Hamming,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StftConfig {
    pub window_len_samples: usize,
    /// 441 samples is 10 ms at 44.1 kHz.
    pub hop_samples: usize,
    /// Output frequency bands after folding the `window_len/2 + 1` raw bins.
    pub freq_bins: usize,
    pub log_floor: f64,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len_samples: 2048,
            hop_samples: 441,
            freq_bins: 128,
            log_floor: 1e-10,
            window: Window::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidStftConfig(m));
        if self.window_len_samples == 0 || self.hop_samples == 0 || self.freq_bins == 0 {
            return bad("window, hop and freq_bins must be positive".into());
        }
        if self.hop_samples > self.window_len_samples {
            return bad(format!(
                "hop {} exceeds window {}",
                self.hop_samples, self.window_len_samples
            ));
        }
        if self.freq_bins > self.window_len_samples / 2 + 1 {
            return bad(format!(
                "{} bins requested from a {}-point transform",
                self.freq_bins, self.window_len_samples
            ));
        }
        if !(self.log_floor > 0.0) || !self.log_floor.is_finite() {
            return bad(format!("log floor {} must be positive", self.log_floor));
        }
        Ok(())
    }

    pub fn raw_bins(&self) -> usize {
        self.window_len_samples / 2 + 1
    }

    pub fn window_weights(&self) -> Vec<f64> {
        match self.window {
            Window::Hamming => hamming_window(self.window_len_samples),
            Window::Rectangular => vec![1.0; self.window_len_samples],
        }
    }
}

/// `w[k] = 0.54 - 0.46 cos(2 pi k / (n - 1))`; a single-point window is `[1.0]`.
pub fn hamming_window(n: usize) -> Vec<f64> {
    assert!(n >= 1, "window length must be positive");
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|k| 0.54 - 0.46 * math::cos(2.0 * PI * k as f64 / denom))
        .collect()
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Contiguous raw-bin ranges averaged into each folded band.
pub fn fold_ranges(raw_bins: usize, freq_bins: usize) -> Vec<(usize, usize)> {
    (0..freq_bins)
        .map(|b| (b * raw_bins / freq_bins, (b + 1) * raw_bins / freq_bins))
        .collect()
}

/// Averages contiguous groups of raw power bins down to `freq_bins` bands.
pub fn fold_bins(raw: &[f64], freq_bins: usize) -> Vec<f64> {
    fold_ranges(raw.len(), freq_bins)
        .into_iter()
        .map(|(a, b)| raw[a..b].iter().sum::<f64>() / (b - a) as f64)
        .collect()
}

/// Center frequency in Hz of every folded band.
pub fn folded_bin_centers_hz(cfg: &StftConfig, sample_rate_hz: u32) -> Vec<f64> {
    let df = sample_rate_hz as f64 / cfg.window_len_samples as f64;
    fold_ranges(cfg.raw_bins(), cfg.freq_bins)
        .into_iter()
        .map(|(a, b)| 0.5 * (a + b - 1) as f64 * df)
        .collect()
}

/// Raw `|X[k]|^2` of one windowed frame, `k = 0..=n/2`.
pub fn frame_power(frame: &[f64], window: &[f64], fft: &RealFft) -> Vec<f64> {
    let windowed: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let mut out = vec![0.0; fft.bins()];
    fft.power(&windowed, &mut out);
    out
}

pub fn frame_count(samples: usize, cfg: &StftConfig) -> usize {
    if samples < cfg.window_len_samples {
        0
    } else {
        (samples - cfg.window_len_samples) / cfg.hop_samples + 1
    }
}

/// Folded STFT power, one row per frame and one column per band.
pub fn stft_power(clip: &AudioClip, cfg: &StftConfig) -> Result<Matrix> {
    cfg.validate()?;
    let n = clip.len();
    if n < cfg.window_len_samples {
        return Err(Error::ClipTooShort { samples: n, window: cfg.window_len_samples });
    }
    let frames = frame_count(n, cfg);
    let window = cfg.window_weights();
    let fft = RealFft::new(cfg.window_len_samples);
    let ranges = fold_ranges(cfg.raw_bins(), cfg.freq_bins);
    let mut out = Matrix::zeros(frames, cfg.freq_bins);
    let mut windowed = vec![0.0; cfg.window_len_samples];
    let mut raw = vec![0.0; fft.bins()];
    let s = clip.samples();
    for f in 0..frames {
        let start = f * cfg.hop_samples;
        for (i, w) in windowed.iter_mut().enumerate() {
            *w = s[start + i] * window[i];
        }
        fft.power(&windowed, &mut raw);
        let row = &mut out.data[f * cfg.freq_bins..(f + 1) * cfg.freq_bins];
        for (o, &(a, b)) in row.iter_mut().zip(&ranges) {
            *o = raw[a..b].iter().sum::<f64>() / (b - a) as f64;
        }
    }
    Ok(out)
}

/// Source coordinate for destination index `i` under half-pixel alignment.
fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let x = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let i0 = math::floor(x) as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, x - i0 as f64)
}

fn resample_axis(values: &[f64], dst: usize) -> Vec<f64> {
    (0..dst)
        .map(|i| {
            let (a, b, t) = source_coord(i, values.len(), dst);
            values[a] * (1.0 - t) + values[b] * t
        })
        .collect()
}

/// Bilinear resize with half-pixel-center alignment.
pub fn resize_bilinear(m: &Matrix, rows: usize, cols: usize) -> Matrix {
    assert!(m.rows > 0 && m.cols > 0 && rows > 0 && cols > 0);
    let row_map: Vec<_> = (0..rows).map(|r| source_coord(r, m.rows, rows)).collect();
    let col_map: Vec<_> = (0..cols).map(|c| source_coord(c, m.cols, cols)).collect();
    let mut out = Matrix::zeros(rows, cols);
    for (r, &(r0, r1, tr)) in row_map.iter().enumerate() {
        for (c, &(c0, c1, tc)) in col_map.iter().enumerate() {
            let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
            let top = lerp(m.get(r0, c0), m.get(r0, c1), tc);
            let bottom = lerp(m.get(r1, c0), m.get(r1, c1), tc);
            out.data[r * cols + c] = lerp(top, bottom, tr);
        }
    }
    out
}

/// Square grayscale spectrogram. Row `r` is a frequency band (row 0 lowest),
/// column `c` a time frame; values lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub size: usize,
    pub values: Vec<f64>,
    pub freq_axis: Vec<f64>,
    pub time_axis: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }
}

/// Applies the log floor, resamples to `size x size` and normalizes.
pub fn spectrogram_from_power(
    power: &Matrix,
    cfg: &StftConfig,
    sample_rate_hz: u32,
    size: usize,
) -> Spectrogram {
    let mut logp = power.transpose();
    for v in logp.data.iter_mut() {
        *v = math::ln(*v + cfg.log_floor);
    }
    let mut img = resize_bilinear(&logp, size, size);
    min_max_normalize(&mut img.data);
    let centers = folded_bin_centers_hz(cfg, sample_rate_hz);
    let times: Vec<f64> = (0..power.rows)
        .map(|f| {
            (f * cfg.hop_samples) as f64 / sample_rate_hz as f64
                + 0.5 * cfg.window_len_samples as f64 / sample_rate_hz as f64
        })
        .collect();
    Spectrogram {
        size,
        values: img.data,
        freq_axis: resample_axis(&centers, size),
        time_axis: resample_axis(&times, size),
    }
}

/// Maps to `[0, 1]`; a constant input becomes all zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in values.iter_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
}

/// 224x224 model-input spectrogram.
pub fn to_spectrogram(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram> {
    to_spectrogram_sized(clip, cfg, SPECTROGRAM_SIZE)
}

pub fn to_spectrogram_sized(clip: &AudioClip, cfg: &StftConfig, size: usize) -> Result<Spectrogram> {
    if size == 0 {
        return Err(Error::InvalidStftConfig("output size must be positive".into()));
    }
    if !passes_duration_filter(clip) {
        return Err(Error::ClipTooShort { samples: clip.len(), window: cfg.window_len_samples });
    }
    let power = stft_power(clip, cfg)?;
    Ok(spectrogram_from_power(&power, cfg, clip.sample_rate_hz(), size))
}

//! Mono 16-bit PCM WAV reading and writing.

use std::path::Path;

use debias_core::audio::AudioClip;

use crate::error::{AppError, AppResult};

/// Decodes a mono integer-PCM WAV, scaling samples by `1 / 2^(bits - 1)`.
/// Any sample rate is accepted and recorded.
pub fn load_wav(path: &Path) -> AppResult<AudioClip> {
    let malformed = |reason: String| AppError::MalformedWav { path: path.to_path_buf(), reason };
    let unsupported = |reason: String| AppError::UnsupportedFormat { path: path.to_path_buf(), reason };
    let mut reader = match hound::WavReader::open(path) {
        Ok(r) => r,
        Err(hound::Error::IoError(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(AppError::io(path, e))
        }
        Err(hound::Error::Unsupported) => return Err(unsupported("codec not supported".into())),
        Err(e) => return Err(malformed(e.to_string())),
    };
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let pcm = reader
        .samples::<i16>()
        .collect::<Result<Vec<i16>, _>>()
        .map_err(|e| malformed(e.to_string()))?;
    Ok(AudioClip::from_pcm16(&pcm, spec.sample_rate)?)
}

/// Writes raw 16-bit samples as a mono WAV.
pub fn write_pcm16(path: &Path, pcm: &[i16], sample_rate_hz: u32) -> AppResult<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(e) => AppError::io(path, e),
        other => AppError::malformed(path, other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &s in pcm {
        w.write_sample(s).map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Rounds to 16-bit PCM and writes a mono WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> AppResult<()> {
    write_pcm16(path, &clip.to_pcm16(), clip.sample_rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_second_clip_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let pcm: Vec<i16> = (0..132_300).map(|i| ((i * 37) % 65_536) as i32 as i16).collect();
        write_pcm16(&path, &pcm, 44_100).unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.len(), 132_300);
        assert_eq!(clip.sample_rate_hz(), 44_100);
        assert_eq!(clip.to_pcm16(), pcm);
    }

    #[test]
    fn half_scale_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.wav");
        write_pcm16(&path, &[16_384], 8_000).unwrap();
        assert_eq!(load_wav(&path).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn stereo_and_float_are_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 44_100, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(AppError::UnsupportedFormat { .. })));

        let path = dir.path().join("f.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 44_100, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(AppError::UnsupportedFormat { .. })));
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_pcm16(&path, &[1, 2, 3, 4], 44_100).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_wav(&path), Err(AppError::MalformedWav { .. })));
        std::fs::write(&path, b"not a wav file at all").unwrap();
        assert!(matches!(load_wav(&path), Err(AppError::MalformedWav { .. })));
    }
}

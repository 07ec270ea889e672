use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Full-scale value of a 16-bit sample.
pub const PCM16_SCALE: f64 = 32768.0;

/// Rounds to the nearest 16-bit code, saturating at the format limits.
pub fn quantize(x: f64) -> i16 {
    (x * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn dequantize(q: i16) -> f64 {
    q as f64 / PCM16_SCALE
}

fn hound_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "encoding not supported".into(),
        },
        other => Error::Corrupt {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Reads the raw 16-bit codes and the sample rate of a mono PCM16 file.
pub fn read_wav_i16(path: &Path) -> Result<(Vec<i16>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{} channels, only mono is supported", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!(
                "{:?} {}-bit samples, only 16-bit PCM is supported",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| hound_error(path, e))?;
    Ok((samples, spec.sample_rate))
}

/// Reads a mono 16-bit PCM WAV file, scaling codes by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let (q, fs) = read_wav_i16(path)?;
    Ok(Waveform::new(q.into_iter().map(dequantize).collect(), fs))
}

fn pcm16_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Complete WAV file image of mono 16-bit samples.
pub fn encode_wav_i16(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let mut cursor = std::io::Cursor::new(Vec::with_capacity(44 + 2 * samples.len()));
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, pcm16_spec(sample_rate)).expect("in-memory writer");
        for &s in samples {
            writer.write_sample(s).expect("in-memory write");
        }
        writer.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}

pub fn write_wav_i16(samples: &[i16], sample_rate: u32, path: &Path) -> Result<()> {
    std::fs::write(path, encode_wav_i16(samples, sample_rate)).map_err(|e| Error::io(path, e))
}

/// Writes a waveform as mono 16-bit PCM; samples outside [-1, 1) saturate.
pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    if w.sample_rate == 0 {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    let q: Vec<i16> = w.samples.iter().map(|&x| quantize(x)).collect();
    write_wav_i16(&q, w.sample_rate, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let codes: Vec<i16> = vec![i16::MIN, -1, 0, 1, 12345, i16::MAX];
        write_wav_i16(&codes, 8000, &p).unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.sample_rate, 8000);
        assert_eq!(w.samples[0], -1.0);
        write_wav(&w, &p).unwrap();
        assert_eq!(read_wav_i16(&p).unwrap().0, codes);
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn corrupt_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFF\x00\x00garbage").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Corrupt { .. })));
        assert!(matches!(
            read_wav(&dir.path().join("none.wav")),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn quantisation_saturates() {
        assert_eq!(quantize(1.0), i16::MAX);
        assert_eq!(quantize(-2.0), i16::MIN);
        assert_eq!(quantize(0.5 / PCM16_SCALE), 1);
    }
}

//! WAV file handling and controlled mixture synthesis.
//!
//! Files are RIFF/WAVE, mono, 16-bit integer PCM or 32-bit float PCM.
//! Writing always produces float32, so a read-write cycle of a float file
//! is bit-exact. Synthetic "speech" is harmonic-plus-silence: enough
//! low-dimensional structure for the prior to learn without shipping a
//! corpus.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stable::{sample_sas_complex, AlphaParam, RngStream};
use crate::stft::{default_win_length, istft, ComplexSpectrogram, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianStationary,
    SasSynthetic,
    File,
}

/// Recipe for one synthetic mixture.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MixtureSpec {
    pub snr_db: f64,
    pub seed: u64,
    pub noise_kind: NoiseKind,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::invalid(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )));
        }
        Ok(())
    }
}

const TAG_PCM: u16 = 1;
const TAG_FLOAT: u16 = 3;

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Reads a mono PCM16 or float32 WAV file. Integer samples are mapped to
/// [-1, 1) by division by 32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let bytes = std::fs::read(path)?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE file"));
    }

    struct Fmt {
        tag: u16,
        channels: u16,
        sample_rate: u32,
        block_align: u16,
        bits: u16,
    }
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;

    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::format(format!(
                    "chunk {:?} claims {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::format("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some(Fmt {
                    tag: le_u16(body, 0),
                    channels: le_u16(body, 2),
                    sample_rate: le_u32(body, 4),
                    block_align: le_u16(body, 12),
                    bits: le_u16(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned; odd sizes carry a pad byte
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::format("missing fmt chunk"))?;
    let data = data.ok_or_else(|| Error::format("missing data chunk"))?;

    if fmt.channels != 1 {
        return Err(Error::format(format!(
            "channel count must be 1 (mono), file has {}",
            fmt.channels
        )));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::format("sample rate is zero"));
    }

    let samples: Vec<f64> = match (fmt.tag, fmt.bits) {
        (TAG_PCM, 16) => {
            if data.len() % 2 != 0 {
                return Err(Error::format("data chunk length is not a whole number of samples"));
            }
            data.chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                .collect()
        }
        (TAG_FLOAT, 32) => {
            if data.len() % 4 != 0 {
                return Err(Error::format("data chunk length is not a whole number of samples"));
            }
            data.chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect()
        }
        (tag, bits) => {
            return Err(Error::format(format!(
                "unsupported encoding: format tag {tag} with {bits}-bit samples \
                 (only 16-bit integer PCM and 32-bit float PCM are handled)"
            )));
        }
    };
    let _ = fmt.block_align;

    Waveform::new(samples, fmt.sample_rate)
}

/// Writes a mono float32 WAV file.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let data_len = w.samples.len() * 4;
    if data_len > u32::MAX as usize - 36 {
        return Err(Error::invalid("waveform too long for a RIFF container"));
    }
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&TAG_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in &w.samples {
        out.extend_from_slice(&(*s as f32).to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Scales the noise so the speech-to-noise energy ratio is `snr_db`, then
/// adds it to the speech. Returns (mixture, scaled_noise); the mixture is
/// sample-wise speech + scaled_noise.
pub fn mix_at_snr(speech: &Waveform, noise: &Waveform, snr_db: f64) -> Result<(Waveform, Waveform)> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: speech {} Hz, noise {} Hz",
            speech.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("snr_db must be finite, got {snr_db}")));
    }
    if noise.len() < speech.len() {
        return Err(Error::invalid(format!(
            "noise ({} samples) is shorter than speech ({})",
            noise.len(),
            speech.len()
        )));
    }
    let n = speech.len();
    let es: f64 = speech.samples.iter().map(|s| s * s).sum();
    let en: f64 = noise.samples[..n].iter().map(|s| s * s).sum();
    if es == 0.0 || en == 0.0 {
        return Err(Error::invalid("speech and noise must both carry energy"));
    }
    let scale = (es / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = noise.samples[..n].iter().map(|s| s * scale).collect();
    let mixture: Vec<f64> = speech
        .samples
        .iter()
        .zip(&scaled)
        .map(|(s, b)| s + b)
        .collect();
    Ok((
        Waveform::new(mixture, speech.sample_rate)?,
        Waveform::new(scaled, speech.sample_rate)?,
    ))
}

/// Random harmonic signal standing in for clean speech: voiced stretches
/// with a piecewise-constant fundamental drawn from a small log-spaced
/// grid, 1 to 10 harmonics under a raised-cosine envelope, separated by
/// exact silences. Length is n_frames hops of the default STFT layout.
pub fn synth_speech_like(n_frames: usize, seed: u64, sample_rate: u32) -> Result<Waveform> {
    if n_frames == 0 {
        return Err(Error::invalid("n_frames must be at least 1"));
    }
    let hop = default_win_length(sample_rate) / 4;
    let len = n_frames * hop;
    let sr = f64::from(sample_rate);
    let mut rng = RngStream::new(seed, 0);

    let grid: Vec<f64> = (0..16)
        .map(|i| 80.0 * (300.0f64 / 80.0).powf(f64::from(i) / 15.0))
        .collect();

    let mut samples = vec![0.0f64; len];
    let mut pos = 0usize;
    while pos < len {
        pos += (rng.random_range(0.03..0.12) * sr) as usize;
        if pos >= len {
            break;
        }
        let dur = (rng.random_range(0.08..0.35) * sr) as usize;
        let seg = dur.min(len - pos);
        let f0 = grid[rng.random_range(0..grid.len())];
        let n_harm = rng.random_range(1..=10usize);
        let peak = rng.random_range(0.15..0.35);
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| rng.random_range(0.6..1.0) / k as f64)
            .collect();
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..TAU)).collect();

        let mut raw = vec![0.0f64; seg];
        for (k, (&a, &p)) in amps.iter().zip(&phases).enumerate() {
            let f = f0 * (k + 1) as f64;
            if f >= 0.45 * sr {
                break;
            }
            let w = TAU * f / sr;
            for (t, r) in raw.iter_mut().enumerate() {
                *r += a * (w * t as f64 + p).sin();
            }
        }
        if seg > 1 {
            let denom = (seg - 1) as f64;
            for (t, r) in raw.iter_mut().enumerate() {
                *r *= 0.5 - 0.5 * (TAU * t as f64 / denom).cos();
            }
        }
        let mx = raw.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if mx > 0.0 {
            let scale = peak / mx;
            for (t, r) in raw.iter().enumerate() {
                samples[pos + t] = r * scale;
            }
        }
        pos += seg;
    }
    Waveform::new(samples, sample_rate)
}

/// Unit-variance white Gaussian noise.
pub fn synth_gaussian_noise(n_samples: usize, seed: u64, sample_rate: u32) -> Result<Waveform> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let mut rng = RngStream::new(seed, 0);
    let samples = (0..n_samples)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Heavy-tailed noise drawn as one isotropic SaS coefficient per bin of the
/// default STFT grid and resynthesized by overlap-add. Stable laws are closed
/// under linear combination, so every output sample keeps an SaS(alpha)
/// marginal while large draws become short band-limited bursts rather than
/// single-sample clicks.
pub fn synth_sas_noise(
    n_samples: usize,
    alpha: AlphaParam,
    seed: u64,
    sample_rate: u32,
) -> Result<Waveform> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let win_length = default_win_length(sample_rate);
    let hop = win_length / 4;
    let n_frames = (n_samples - 1) / hop + 4;
    let n_freqs = win_length / 2 + 1;
    let mut rng = RngStream::new(seed, 0);
    let mut values = Array2::<Complex64>::zeros((n_freqs, n_frames));
    for n in 0..n_frames {
        for f in 0..n_freqs {
            values[[f, n]] = sample_sas_complex(alpha, 1.0, &mut rng)?;
        }
    }
    let spec = ComplexSpectrogram {
        values,
        win_length,
        hop,
        sample_rate,
        signal_len: n_samples,
    };
    istft(&spec)
}

//! Analysis/synthesis short-term Fourier transform.
//!
//! Half-sample-shifted sine window at 75% overlap: the squared window summed
//! over the four overlapping shifts is exactly 2.0 at every sample, so the
//! same window serves for analysis and weighted overlap-add synthesis and the
//! pair reconstructs perfectly.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Sum of the squared sine window over its four overlapping shifts.
pub const OVERLAP_NORM: f64 = 2.0;

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// F x N grid of complex STFT coefficients plus the transform geometry
/// needed to invert it. `signal_len` is the unpadded input length so that
/// `istft` can strip the analysis padding exactly.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub win_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn n_freqs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    /// Element-wise squared magnitudes |x_fn|^2.
    pub fn power(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm_sqr())
    }
}

/// Default analysis length for a sample rate: 64 ms rounded to a multiple
/// of 4 so the 75%-overlap hop is integral.
pub fn default_win_length(sample_rate: u32) -> usize {
    let raw = (0.064 * f64::from(sample_rate)).round() as usize;
    ((raw + 2) / 4).max(1) * 4
}

/// w[k] = sin(pi (k + 1/2) / len). Requires len divisible by 4.
pub fn sine_window(len: usize) -> Result<Vec<f64>> {
    if len == 0 || len % 4 != 0 {
        return Err(Error::invalid(format!(
            "window length must be a positive multiple of 4, got {len}"
        )));
    }
    Ok((0..len)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / len as f64).sin())
        .collect())
}

fn check_geometry(win_length: usize, hop: usize) -> Result<()> {
    if win_length == 0 || win_length % 4 != 0 {
        return Err(Error::invalid(format!(
            "win_length must be a positive multiple of 4, got {win_length}"
        )));
    }
    if hop * 4 != win_length {
        return Err(Error::invalid(format!(
            "hop must be win_length/4 (75% overlap), got hop={hop} win_length={win_length}"
        )));
    }
    Ok(())
}

/// Number of analysis frames for a signal of length `len`: padding of
/// 3*hop zeros at each end makes every sample covered by exactly 4 frames.
fn frame_count(len: usize, hop: usize) -> usize {
    (len - 1) / hop + 4
}

/// Forward transform. Keeps the non-negative frequencies, F = win_length/2 + 1.
pub fn stft(w: &Waveform, win_length: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::invalid("stft input must be non-empty"));
    }
    check_geometry(win_length, hop)?;

    let len = w.len();
    let n_frames = frame_count(len, hop);
    let n_freqs = win_length / 2 + 1;
    let window = sine_window(win_length)?;

    let mut padded = vec![0.0f64; (n_frames - 1) * hop + win_length];
    padded[3 * hop..3 * hop + len].copy_from_slice(&w.samples);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(win_length);
    let mut buf = vec![Complex64::default(); win_length];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    let mut values = Array2::<Complex64>::zeros((n_freqs, n_frames));
    for n in 0..n_frames {
        let frame = &padded[n * hop..n * hop + win_length];
        for (b, (&x, &wk)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *b = Complex64::new(x * wk, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for f in 0..n_freqs {
            values[[f, n]] = buf[f];
        }
    }

    Ok(ComplexSpectrogram {
        values,
        win_length,
        hop,
        sample_rate: w.sample_rate,
        signal_len: len,
    })
}

/// Weighted overlap-add inverse with the analysis sine window as synthesis
/// window; division by OVERLAP_NORM makes istft(stft(w)) = w.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    check_geometry(s.win_length, s.hop)?;
    let n_freqs = s.win_length / 2 + 1;
    if s.n_freqs() != n_freqs {
        return Err(Error::invalid(format!(
            "spectrogram has {} rows but win_length {} implies {}",
            s.n_freqs(),
            s.win_length,
            n_freqs
        )));
    }
    if s.n_frames() != frame_count(s.signal_len, s.hop) {
        return Err(Error::invalid(format!(
            "signal_len {} inconsistent with {} frames at hop {}",
            s.signal_len,
            s.n_frames(),
            s.hop
        )));
    }

    let win_length = s.win_length;
    let hop = s.hop;
    let n_frames = s.n_frames();
    let window = sine_window(win_length)?;

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(win_length);
    let mut buf = vec![Complex64::default(); win_length];
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];

    let mut out = vec![0.0f64; (n_frames - 1) * hop + win_length];
    let scale = 1.0 / (win_length as f64 * OVERLAP_NORM);
    for n in 0..n_frames {
        buf[0] = s.values[[0, n]];
        buf[win_length / 2] = s.values[[win_length / 2, n]];
        for f in 1..win_length / 2 {
            let v = s.values[[f, n]];
            buf[f] = v;
            buf[win_length - f] = v.conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        for (k, b) in buf.iter().enumerate() {
            out[n * hop + k] += b.re * window[k] * scale;
        }
    }

    let start = 3 * hop;
    Waveform::new(out[start..start + s.signal_len].to_vec(), s.sample_rate)
}

//! Semi-supervised speech enhancement: a variational autoencoder speech
//! prior trained on clean spectra, an alpha-stable noise model fitted at
//! test time by Monte Carlo EM, and probabilistic Wiener reconstruction.

pub mod audio_io;
pub mod error;
pub mod mcem;
pub mod metrics;
pub mod stable;
pub mod vae;
pub mod stft;

pub use audio_io::{MixtureSpec, NoiseKind};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use mcem::{
    GainVector, McemConfig, McemOutcome, NoiseParams, PosteriorSamples, SamplerState,
    SpeechVariance,
};
pub use stable::{AlphaParam, RngStream};
pub use stft::{ComplexSpectrogram, Waveform};
pub use vae::{TrainConfig, VaeParams};

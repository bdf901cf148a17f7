//! Command-line front end. Flag values beat config-file values beat
//! defaults; errors map to exit code 2 (bad input) or 3 (numerical).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quieten_core::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "quieten", version, about = "Speech enhancement with an alpha-stable noise model")]
struct Cli {
    /// JSON config file; also read from QUIETEN_CONFIG when the flag is absent
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the speech prior on clean recordings
    Train(TrainArgs),
    /// Remove noise from a recording
    Enhance(EnhanceArgs),
    /// Score an enhanced recording against its clean reference
    Evaluate(EvaluateArgs),
    /// Generate clean/noise/mixture triples
    SynthData(SynthDataArgs),
    /// Draw complex alpha-stable samples and summarize their tail
    SampleNoise(SampleNoiseArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Train on generated speech-like audio
    #[arg(long, conflicts_with = "corpus")]
    pub synthetic: bool,
    /// Directory of clean .wav recordings
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Frames of synthetic audio to generate
    #[arg(long, value_name = "N")]
    pub frames: Option<usize>,
    /// Room-tone level under the synthetic speech, as an SNR
    #[arg(long, default_value_t = 30.0, value_name = "DB")]
    pub dither_snr_db: f64,
    /// Sample rate for synthetic audio
    #[arg(long, default_value_t = 16_000, value_name = "HZ")]
    pub sample_rate: u32,
    /// Latent dimension
    #[arg(long, value_name = "L")]
    pub latent: Option<usize>,
    /// Hidden layer width
    #[arg(long, value_name = "H")]
    pub hidden: Option<usize>,
    /// Epoch cap
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Where to write the weight file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EnhanceArgs {
    /// Noise tail parameter in (0, 2]
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
    /// EM iterations
    #[arg(long, value_name = "N")]
    pub mcem_iters: Option<usize>,
    /// Gibbs sweeps per E-step
    #[arg(long, value_name = "N")]
    pub gibbs_iters: Option<usize>,
    /// Sweeps discarded from each E-step
    #[arg(long, value_name = "N")]
    pub burn_in: Option<usize>,
    /// Random-walk proposal variance
    #[arg(long, value_name = "V")]
    pub eps2: Option<f64>,
    /// Gibbs sweeps for the final reconstruction
    #[arg(long, value_name = "N")]
    pub recon_iters: Option<usize>,
    /// Sweeps discarded from the reconstruction
    #[arg(long, value_name = "N")]
    pub recon_burn_in: Option<usize>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Speech prior weight file
    #[arg(long, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub noise_scale_zero: bool,
    /// Noisy input recording
    pub input: PathBuf,
    /// Enhanced output recording
    pub output: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    pub clean: PathBuf,
    pub mixture: PathBuf,
    pub enhanced: PathBuf,
}

#[derive(Args)]
pub struct SynthDataArgs {
    /// Mixtures to generate
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub count: usize,
    /// Frames of speech per mixture
    #[arg(long, value_name = "N")]
    pub frames: Option<usize>,
    /// Speech-to-noise ratio of the mixtures
    #[arg(long, value_name = "DB", allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Noise kind: gaussian_stationary or sas_synthetic
    #[arg(long, value_name = "KIND")]
    pub noise: Option<String>,
    /// Tail parameter for sas_synthetic noise
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 16_000, value_name = "HZ")]
    pub sample_rate: u32,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SampleNoiseArgs {
    /// Tail parameter in (0, 2]
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
    /// Scale parameter
    #[arg(long, default_value_t = 1.0, value_name = "S")]
    pub sigma: f64,
    /// Samples to draw
    #[arg(long, default_value_t = 10_000, value_name = "M")]
    pub count: usize,
    #[arg(long, default_value_t = 0, value_name = "SEED")]
    pub seed: u64,
    /// Order-statistic fraction for the tail-index estimate
    #[arg(long, default_value_t = 0.01, value_name = "F")]
    pub tail_fraction: f64,
    /// Write samples here instead of stdout
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Format(_) | Error::Io(_) => 2,
        Error::Numerical(_) | Error::DegenerateModel(_) => 3,
    }
}

fn run(cli: Cli) -> quieten_core::Result<()> {
    if let Some(t) = cli.threads {
        // a second build_global in-process is fine to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => commands::train(cfg, a),
        Command::Enhance(a) => commands::enhance(cfg, a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::SynthData(a) => commands::synth_data(cfg, a),
        Command::SampleNoise(a) => commands::sample_noise(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

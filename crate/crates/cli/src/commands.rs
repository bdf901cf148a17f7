//! The five subcommand bodies. Each takes the merged RunConfig plus its
//! parsed flags, does the work through quieten-core, and reports on
//! stdout; errors bubble up for the exit-code mapping in main.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use quieten_core::audio_io::{
    mix_at_snr, read_wav, synth_gaussian_noise, synth_sas_noise, synth_speech_like, write_wav,
};
use quieten_core::mcem::IterationStats;
use quieten_core::stable::{sample_sas_complex, tail_index};
use quieten_core::stft::{default_win_length, istft, stft, Waveform};
use quieten_core::vae::{load_weights, save_weights, train as train_vae};
use quieten_core::{AlphaParam, Error, McemConfig, NoiseKind, Result, RngStream};

use crate::config::RunConfig;
use crate::{EnhanceArgs, EvaluateArgs, SampleNoiseArgs, SynthDataArgs, TrainArgs};

fn stft_layout(cfg: &RunConfig, sample_rate: u32) -> (usize, usize) {
    let win = cfg.win_length.unwrap_or_else(|| default_win_length(sample_rate));
    let hop = cfg.hop.unwrap_or(win / 4);
    (win, hop)
}

fn power_frames(w: &Waveform, cfg: &RunConfig) -> Result<Array2<f64>> {
    let (win, hop) = stft_layout(cfg, w.sample_rate);
    let spec = stft(w, win, hop)?;
    Ok(spec.power().t().to_owned())
}

/// Path for a sidecar file: the artifact path plus a suffix.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(v) = a.latent {
        cfg.train.latent_dim = v;
    }
    if let Some(v) = a.hidden {
        cfg.train.hidden_dim = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.max_epochs = v;
    }
    let out = a
        .out
        .or(cfg.out.clone())
        .ok_or_else(|| Error::invalid("no output path: pass --out PATH"))?;

    let dataset = if a.synthetic {
        let frames = a.frames.unwrap_or(2000);
        // decorrelate the corpus draw from the trainer's own stream
        let data_seed = cfg.train.seed ^ 0x9e37_79b9_7f4a_7c15;
        let s = synth_speech_like(frames, data_seed, a.sample_rate)?;
        // room tone: digital silence never occurs in a recorded corpus, and
        // a prior fit to exact zeros transfers poorly to noisy inputs
        let tone = synth_gaussian_noise(s.len(), data_seed ^ 1, a.sample_rate)?;
        let (w, _) = mix_at_snr(&s, &tone, a.dither_snr_db)?;
        println!(
            "synthetic corpus: {frames} frames, {:.1} s at {} Hz, room tone at -{} dB",
            w.len() as f64 / f64::from(w.sample_rate),
            w.sample_rate,
            a.dither_snr_db
        );
        power_frames(&w, &cfg)?
    } else if let Some(dir) = &a.corpus {
        corpus_frames(dir, &cfg)?
    } else {
        return Err(Error::invalid(
            "no training data: pass --synthetic or --corpus DIR",
        ));
    };

    println!(
        "training: {} frames of {} bins, L={}, H={}, seed {}",
        dataset.nrows(),
        dataset.ncols(),
        cfg.train.latent_dim,
        cfg.train.hidden_dim,
        cfg.train.seed
    );
    let t0 = Instant::now();
    let (params, log) = train_vae(dataset.view(), &cfg.train)?;
    for e in &log.epochs {
        println!(
            "epoch {:3}  train_elbo {:14.2}  val_elbo {:14.2}",
            e.epoch, e.train_elbo, e.val_elbo
        );
    }
    println!(
        "best epoch {} (val_elbo {:.4} per frame) in {:.1} s",
        log.best_epoch,
        log.best_val_elbo,
        t0.elapsed().as_secs_f64()
    );

    save_weights(&params, &out)?;
    write_json(&sidecar(&out, ".log.json"), &log)?;
    println!("weights -> {}", out.display());
    Ok(())
}

fn corpus_frames(dir: &Path, cfg: &RunConfig) -> Result<Array2<f64>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|x| x.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .wav files in corpus directory {}",
            dir.display()
        )));
    }

    let mut all: Option<Array2<f64>> = None;
    for p in &paths {
        let w = read_wav(p)?;
        let frames = power_frames(&w, cfg)?;
        all = Some(match all {
            None => frames,
            Some(acc) => {
                if acc.ncols() != frames.ncols() {
                    return Err(Error::invalid(format!(
                        "{} yields {} bins per frame but earlier files yield {}; \
                         corpus sample rates must agree",
                        p.display(),
                        frames.ncols(),
                        acc.ncols()
                    )));
                }
                ndarray::concatenate(ndarray::Axis(0), &[acc.view(), frames.view()])
                    .expect("shapes checked")
            }
        });
    }
    println!("corpus: {} files", paths.len());
    Ok(all.expect("non-empty corpus"))
}

#[derive(Serialize)]
struct EnhanceDiagnostics<'a> {
    alpha: f64,
    win_length: usize,
    hop: usize,
    mcem: &'a McemConfig,
    runtime_seconds: f64,
    iterations: &'a [IterationStats],
}

pub fn enhance(mut cfg: RunConfig, a: EnhanceArgs) -> Result<()> {
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.mcem_iters {
        cfg.mcem.n_iters = v;
    }
    if let Some(v) = a.gibbs_iters {
        cfg.mcem.gibbs_iters = v;
    }
    if let Some(v) = a.burn_in {
        cfg.mcem.burn_in = v;
    }
    if let Some(v) = a.eps2 {
        cfg.mcem.eps2 = v;
    }
    if let Some(v) = a.recon_iters {
        cfg.mcem.recon_iters = v;
    }
    if let Some(v) = a.recon_burn_in {
        cfg.mcem.recon_burn_in = v;
    }
    if let Some(v) = a.seed {
        cfg.mcem.seed = v;
    }
    if a.noise_scale_zero {
        cfg.mcem.noise_scale_zero = true;
    }
    let weights = a
        .weights
        .or(cfg.weights.clone())
        .ok_or_else(|| Error::invalid("no weight file: pass --weights PATH"))?;

    let alpha = AlphaParam::new(cfg.alpha)?;
    let vae = load_weights(&weights)?;
    let noisy = read_wav(&a.input)?;
    let (win, hop) = stft_layout(&cfg, noisy.sample_rate);
    let x = stft(&noisy, win, hop)?;
    println!(
        "enhancing {}: {} samples, {} frames x {} bins, alpha {}",
        a.input.display(),
        noisy.len(),
        x.n_frames(),
        x.n_freqs(),
        alpha.value()
    );

    let t0 = Instant::now();
    let (est, outcome) = quieten_core::mcem::enhance(&x, &vae, alpha, &cfg.mcem)?;
    let runtime = t0.elapsed().as_secs_f64();
    let enhanced = istft(&est)?;
    write_wav(&a.output, &enhanced)?;

    let diag = EnhanceDiagnostics {
        alpha: alpha.value(),
        win_length: win,
        hop,
        mcem: &cfg.mcem,
        runtime_seconds: runtime,
        iterations: &outcome.log,
    };
    let diag_path = sidecar(&a.output, ".diag.json");
    write_json(&diag_path, &diag)?;

    if let Some(last) = outcome.log.last() {
        println!(
            "MCEM: {} iterations, final -q {:.2}, accept rates h {:.2} phi {:.2}",
            outcome.log.len(),
            last.neg_q_tilde,
            last.h_accept_rate,
            last.phi_accept_rate
        );
    }
    println!(
        "enhanced -> {} ({} samples, {:.1} s); diagnostics -> {}",
        a.output.display(),
        enhanced.len(),
        runtime,
        diag_path.display()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let clean = read_wav(&a.clean)?;
    let mixture = read_wav(&a.mixture)?;
    let enhanced = read_wav(&a.enhanced)?;
    let report = quieten_core::metrics::evaluate(&clean, &mixture, &enhanced)?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::format(format!("cannot serialize report: {e}")))?;
    println!("{text}");
    Ok(())
}

pub fn synth_data(mut cfg: RunConfig, a: SynthDataArgs) -> Result<()> {
    if let Some(v) = a.snr_db {
        cfg.mix.snr_db = v;
    }
    if let Some(v) = a.seed {
        cfg.mix.seed = v;
    }
    if let Some(kind) = &a.noise {
        cfg.mix.noise_kind = crate::config::parse_noise_kind(kind)?;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    cfg.mix.validate()?;
    let out_dir = a
        .out
        .or(cfg.out.clone())
        .ok_or_else(|| Error::invalid("no output directory: pass --out DIR"))?;
    std::fs::create_dir_all(&out_dir)?;

    let frames = a.frames.unwrap_or(200);
    let count = a.count;
    let sr = a.sample_rate;
    let alpha = AlphaParam::new(cfg.alpha)?;

    for i in 0..count {
        let clean_seed = cfg.mix.seed.wrapping_add(2 * i as u64);
        let noise_seed = cfg.mix.seed.wrapping_add(2 * i as u64 + 1);
        let clean = synth_speech_like(frames, clean_seed, sr)?;
        let noise = match cfg.mix.noise_kind {
            NoiseKind::GaussianStationary => synth_gaussian_noise(clean.len(), noise_seed, sr)?,
            NoiseKind::SasSynthetic => synth_sas_noise(clean.len(), alpha, noise_seed, sr)?,
            NoiseKind::File => {
                return Err(Error::invalid(
                    "noise kind 'file' needs an explicit noise recording; \
                     use gaussian_stationary or sas_synthetic here",
                ))
            }
        };
        let (mixture, scaled) = mix_at_snr(&clean, &noise, cfg.mix.snr_db)?;

        let energy = |w: &Waveform| -> f64 { w.samples.iter().map(|s| s * s).sum() };
        let achieved = 10.0 * (energy(&clean) / energy(&scaled)).log10();

        write_wav(out_dir.join(format!("clean_{i:03}.wav")), &clean)?;
        write_wav(out_dir.join(format!("noise_{i:03}.wav")), &scaled)?;
        write_wav(out_dir.join(format!("mixture_{i:03}.wav")), &mixture)?;
        println!(
            "mixture {i:03}: {} samples, requested {} dB, achieved {:.9} dB",
            mixture.len(),
            cfg.mix.snr_db,
            achieved
        );
    }
    println!("{count} mixture(s) -> {}", out_dir.display());
    Ok(())
}

pub fn sample_noise(cfg: RunConfig, a: SampleNoiseArgs) -> Result<()> {
    let alpha = AlphaParam::new(a.alpha.unwrap_or(cfg.alpha))?;
    if !(a.sigma > 0.0) || !a.sigma.is_finite() {
        return Err(Error::invalid(format!(
            "sigma must be positive and finite, got {}",
            a.sigma
        )));
    }
    if a.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }

    let mut rng = RngStream::new(a.seed, 0);
    let mut dump = String::with_capacity(a.count * 32);
    let mut magnitudes = Vec::with_capacity(a.count);
    let mut parts = Vec::with_capacity(2 * a.count);
    for _ in 0..a.count {
        let b = sample_sas_complex(alpha, a.sigma, &mut rng)?;
        dump.push_str(&format!("{:e},{:e}\n", b.re, b.im));
        magnitudes.push(b.norm());
        parts.push(b.re);
        parts.push(b.im);
    }

    // summary goes wherever the dump is not
    let summary = |line: &str| match &a.out {
        Some(_) => println!("{line}"),
        None => eprintln!("{line}"),
    };
    summary(&format!(
        "count {}  alpha {}  sigma {}  seed {}",
        a.count,
        alpha.value(),
        a.sigma,
        a.seed
    ));
    if a.count >= 1000 {
        let hill = tail_index(&magnitudes, a.tail_fraction)?;
        summary(&format!("tail index (Hill, top {:.2}%): {hill:.4}", a.tail_fraction * 100.0));
    } else {
        summary("tail index skipped: needs at least 1000 samples");
    }
    if a.count >= 4 {
        let m2 = parts.iter().map(|p| p * p).sum::<f64>() / parts.len() as f64;
        let m4 = parts.iter().map(|p| p.powi(4)).sum::<f64>() / parts.len() as f64;
        summary(&format!("excess kurtosis of re/im parts: {:.4}", m4 / (m2 * m2) - 3.0));
    }

    match &a.out {
        Some(path) => {
            std::fs::write(path, dump)?;
            println!("samples -> {}", path.display());
        }
        None => print!("{dump}"),
    }
    Ok(())
}

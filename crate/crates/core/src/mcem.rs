//! Monte Carlo EM inference on a noisy spectrogram.
//!
//! E-step: Metropolis-within-Gibbs over the per-frame latent vectors h_n
//! (random-walk proposal, variance eps2) and the per-bin impulse variables
//! phi_fn (independence proposal from their prior, so prior terms cancel in
//! the acceptance ratio). M-step: majorization-minimization multiplicative
//! updates of the noise scales sigma_b^2 and frame gains g. Reconstruction:
//! Wiener gains averaged over a fresh chain, applied to the mixture.
//!
//! Every density is evaluated in the log domain; acceptance ratios are
//! exponentiated after differencing and clamped into [0, 1].
//!
//! RNG discipline: sweep m of a chain seeded s gives frame n the stream
//! (s, m*N + n + 1); stream (s, 0) covers initialization draws. Frames
//! therefore advance independently and one sweep may process them in
//! parallel without changing any result.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stable::{sample_impulse, AlphaParam, PositiveStableSampler, RngStream};
use crate::stft::ComplexSpectrogram;
use crate::vae::{decode_raw, encode_means, VaeParams};

/// Noise-model half of theta_u: the characteristic exponent and the
/// per-frequency scale parameters sigma_b^2 (non-negative).
#[derive(Debug, Clone)]
pub struct NoiseParams {
    pub alpha: AlphaParam,
    pub sigma_b2: Array1<f64>,
}

impl NoiseParams {
    pub fn ones(alpha: AlphaParam, n_freqs: usize) -> Self {
        NoiseParams {
            alpha,
            sigma_b2: Array1::ones(n_freqs),
        }
    }
}

/// Gain half of theta_u: per-frame, frequency-independent gains g_n.
#[derive(Debug, Clone)]
pub struct GainVector {
    pub g: Array1<f64>,
}

impl GainVector {
    pub fn ones(n_frames: usize) -> Self {
        GainVector {
            g: Array1::ones(n_frames),
        }
    }
}

/// Speech-variance model sigma_s^2(h): the generative network, or a stub
/// with fixed output for sampler diagnostics.
pub trait SpeechVariance: Sync {
    /// (F, L)
    fn dims(&self) -> (usize, usize);

    /// Variances for a batch of latents; `h` is N x L, result is F x N.
    fn var_batch(&self, h: ArrayView2<f64>) -> Array2<f64>;

    fn var_single(&self, h: ArrayView1<f64>) -> Array1<f64> {
        let hb = h.insert_axis(Axis(0));
        self.var_batch(hb).index_axis(Axis(1), 0).to_owned()
    }
}

impl SpeechVariance for VaeParams {
    fn dims(&self) -> (usize, usize) {
        (self.n_freqs(), self.latent_dim())
    }

    fn var_batch(&self, h: ArrayView2<f64>) -> Array2<f64> {
        let (_, dlv) = decode_raw(self, h.t());
        dlv.mapv(f64::exp)
    }
}

/// h-independent speech variance; makes the likelihood flat in h so the
/// Gibbs chain on h must reproduce its prior.
#[derive(Debug, Clone)]
pub struct ConstantSpeechVariance {
    pub var: Array1<f64>,
    pub latent_dim: usize,
}

impl SpeechVariance for ConstantSpeechVariance {
    fn dims(&self) -> (usize, usize) {
        (self.var.len(), self.latent_dim)
    }

    fn var_batch(&self, h: ArrayView2<f64>) -> Array2<f64> {
        let n = h.nrows();
        Array2::from_shape_fn((self.var.len(), n), |(f, _)| self.var[f])
    }
}

/// Variance of the mixture coefficient given the latents,
/// v = g_n sigma_s^2 + phi_fn sigma_b^2.
pub fn mixture_likelihood_var(
    g_n: f64,
    sigma_s2_f: f64,
    phi_fn: f64,
    sigma_b2_f: f64,
) -> Result<f64> {
    if g_n < 0.0 || sigma_s2_f < 0.0 || phi_fn < 0.0 || sigma_b2_f < 0.0 {
        return Err(Error::invalid("variance factors must be non-negative"));
    }
    let v = g_n * sigma_s2_f + phi_fn * sigma_b2_f;
    if v <= 0.0 {
        return Err(Error::degenerate(
            "speech and noise variances both vanished",
        ));
    }
    Ok(v)
}

/// Log of the complex-Gaussian likelihood ratio between two speech-variance
/// columns for one frame, summed over frequencies.
fn loglik_diff(
    g: f64,
    sig_new: ArrayView1<f64>,
    sig_old: ArrayView1<f64>,
    phi: ArrayView1<f64>,
    sigma_b2: ArrayView1<f64>,
    x_power: ArrayView1<f64>,
) -> Result<f64> {
    let mut acc = 0.0;
    for f in 0..sig_new.len() {
        let pb = phi[f] * sigma_b2[f];
        let v_new = g * sig_new[f] + pb;
        let v_old = g * sig_old[f] + pb;
        if v_new <= 0.0 || v_old <= 0.0 {
            return Err(Error::degenerate(
                "speech and noise variances both vanished",
            ));
        }
        acc += v_old.ln() - v_new.ln() + x_power[f] * (1.0 / v_old - 1.0 / v_new);
    }
    Ok(acc)
}

fn clamp_accept(log_ratio: f64, what: &str) -> Result<f64> {
    if log_ratio.is_nan() {
        return Err(Error::numerical(format!(
            "non-finite log acceptance ratio in {what}"
        )));
    }
    Ok(log_ratio.min(0.0).exp())
}

/// Acceptance probability of a latent proposal h_tilde against h_prev for
/// one frame: Gaussian prior times the product over frequencies of the
/// mixture likelihood.
pub fn accept_prob_h<M: SpeechVariance + ?Sized>(
    h_tilde: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    phi_col: ArrayView1<f64>,
    x_col: ArrayView1<Complex64>,
    model: &M,
    noise: &NoiseParams,
    g_n: f64,
) -> Result<f64> {
    let sig_new = model.var_single(h_tilde);
    let sig_old = model.var_single(h_prev);
    let x_power = x_col.mapv(|c| c.norm_sqr());
    let prior = 0.5 * (h_prev.dot(&h_prev) - h_tilde.dot(&h_tilde));
    let lik = loglik_diff(
        g_n,
        sig_new.view(),
        sig_old.view(),
        phi_col,
        noise.sigma_b2.view(),
        x_power.view(),
    )?;
    clamp_accept(prior + lik, "h acceptance")
}

/// Acceptance probability of an impulse proposal for one bin. The proposal
/// is the prior itself, so only the likelihood ratio remains;
/// `g_sigma_s2` is the current speech term g_n sigma_s^2_f(h_n).
pub fn accept_prob_phi(
    phi_tilde: f64,
    phi_prev: f64,
    x_power: f64,
    g_sigma_s2: f64,
    sigma_b2: f64,
) -> Result<f64> {
    let v_new = g_sigma_s2 + phi_tilde * sigma_b2;
    let v_old = g_sigma_s2 + phi_prev * sigma_b2;
    if v_new <= 0.0 || v_old <= 0.0 {
        return Err(Error::degenerate(
            "speech and noise variances both vanished",
        ));
    }
    let logr = v_old.ln() - v_new.ln() + x_power * (1.0 / v_old - 1.0 / v_new);
    clamp_accept(logr, "phi acceptance")
}

/// Current chain position plus the cached speech variances at h.
#[derive(Debug, Clone)]
pub struct SamplerState {
    /// N x L latents.
    pub h: Array2<f64>,
    /// F x N impulse variables, strictly positive.
    pub phi: Array2<f64>,
    /// F x N speech variances sigma_s^2(h_n), consistent with `h`.
    pub sig_s2: Array2<f64>,
    /// Random-walk proposal variance for h.
    pub eps2: f64,
    pub seed: u64,
    /// Completed sweeps; also the RNG epoch for per-frame streams.
    pub sweep: u64,
}

impl SamplerState {
    /// Chain start: caller-provided latents, impulse variables drawn once
    /// from their prior (stream 0 of the seed), variances decoded from h.
    pub fn init<M: SpeechVariance + ?Sized>(
        h0: Array2<f64>,
        model: &M,
        alpha: AlphaParam,
        eps2: f64,
        seed: u64,
    ) -> Result<Self> {
        let (nf, l) = model.dims();
        if h0.nrows() == 0 || h0.ncols() != l {
            return Err(Error::invalid(format!(
                "initial latents are {}x{}, model expects L={l}",
                h0.nrows(),
                h0.ncols()
            )));
        }
        if !(eps2 > 0.0) {
            return Err(Error::invalid(format!("eps2 must be positive, got {eps2}")));
        }
        let n = h0.nrows();
        let mut rng = RngStream::new(seed, 0);
        let mut phi = Array2::zeros((nf, n));
        for f in 0..nf {
            for t in 0..n {
                phi[[f, t]] = sample_impulse(alpha, &mut rng)?;
            }
        }
        let sig_s2 = model.var_batch(h0.view());
        Ok(SamplerState {
            h: h0,
            phi,
            sig_s2,
            eps2,
            seed,
            sweep: 0,
        })
    }
}

/// Acceptance-rate bookkeeping for one sweep (or averaged over several).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepStats {
    pub h_accept_rate: f64,
    pub phi_accept_rate: f64,
}

struct FrameUpdate {
    accept_h: bool,
    phi: Vec<f64>,
    phi_accepts: u32,
}

/// One Metropolis-within-Gibbs sweep over every frame: a random-walk move
/// on h_n, then an independence move on each phi_fn.
pub fn gibbs_sweep<M: SpeechVariance + ?Sized>(
    state: &mut SamplerState,
    x: &ComplexSpectrogram,
    model: &M,
    noise: &NoiseParams,
    gains: &GainVector,
) -> Result<SweepStats> {
    let (nf, l) = model.dims();
    let n = x.n_frames();
    if x.n_freqs() != nf
        || state.h.dim() != (n, l)
        || state.phi.dim() != (nf, n)
        || state.sig_s2.dim() != (nf, n)
        || noise.sigma_b2.len() != nf
        || gains.g.len() != n
    {
        return Err(Error::invalid("sampler state inconsistent with inputs"));
    }

    let x_power = x.power();
    state.sweep += 1;
    let epoch = state.sweep * n as u64;

    // phase 1: all latent proposals, one RNG stream per frame
    let mut rngs: Vec<RngStream> = (0..n)
        .map(|i| RngStream::new(state.seed, epoch + i as u64 + 1))
        .collect();
    let step = state.eps2.sqrt();
    let mut h_prop = Array2::zeros((n, l));
    for (i, rng) in rngs.iter_mut().enumerate() {
        for j in 0..l {
            let z: f64 = rng.sample(StandardNormal);
            h_prop[[i, j]] = state.h[[i, j]] + step * z;
        }
    }

    // phase 2: one batched decode for every proposal
    let sig_prop = model.var_batch(h_prop.view());

    // phase 3: accept/reject per frame, then the phi sub-sweep
    let impulse = PositiveStableSampler::impulse(noise.alpha)?;
    let h_cur = &state.h;
    let phi_cur = &state.phi;
    let sig_cur = &state.sig_s2;
    let updates: Vec<FrameUpdate> = rngs
        .par_iter_mut()
        .enumerate()
        .map(|(i, rng)| -> Result<FrameUpdate> {
            let g = gains.g[i];
            let frame_err = |e: Error| match e {
                Error::DegenerateModel(m) => {
                    Error::DegenerateModel(format!("frame {i}: {m}"))
                }
                Error::Numerical(m) => Error::Numerical(format!("frame {i}: {m}")),
                other => other,
            };

            let h_old = h_cur.row(i);
            let h_new = h_prop.row(i);
            let prior = 0.5 * (h_old.dot(&h_old) - h_new.dot(&h_new));
            let lik = loglik_diff(
                g,
                sig_prop.column(i),
                sig_cur.column(i),
                phi_cur.column(i),
                noise.sigma_b2.view(),
                x_power.column(i),
            )
            .map_err(frame_err)?;
            let a = clamp_accept(prior + lik, "h acceptance").map_err(frame_err)?;
            let accept_h = rng.random::<f64>() < a;

            let sig_col = if accept_h {
                sig_prop.column(i)
            } else {
                sig_cur.column(i)
            };
            let mut phi = Vec::with_capacity(nf);
            let mut phi_accepts = 0u32;
            for f in 0..nf {
                let prev = phi_cur[[f, i]];
                let prop = impulse.sample(rng);
                let a = accept_prob_phi(
                    prop,
                    prev,
                    x_power[[f, i]],
                    g * sig_col[f],
                    noise.sigma_b2[f],
                )
                .map_err(frame_err)?;
                if rng.random::<f64>() < a {
                    phi.push(prop);
                    phi_accepts += 1;
                } else {
                    phi.push(prev);
                }
            }
            Ok(FrameUpdate {
                accept_h,
                phi,
                phi_accepts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut h_accepts = 0usize;
    let mut phi_accepts = 0u64;
    for (i, up) in updates.into_iter().enumerate() {
        if up.accept_h {
            h_accepts += 1;
            state.h.row_mut(i).assign(&h_prop.row(i));
            state.sig_s2.column_mut(i).assign(&sig_prop.column(i));
        }
        for f in 0..nf {
            state.phi[[f, i]] = up.phi[f];
        }
        phi_accepts += u64::from(up.phi_accepts);
    }

    Ok(SweepStats {
        h_accept_rate: h_accepts as f64 / n as f64,
        phi_accept_rate: phi_accepts as f64 / (n as f64 * nf as f64),
    })
}

/// R retained posterior draws; speech variances are cached per draw so the
/// M-step and reconstruction never re-decode.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    pub h: Vec<Array2<f64>>,
    pub phi: Vec<Array2<f64>>,
    pub sig_s2: Vec<Array2<f64>>,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Runs `gibbs_iters` sweeps from the carried-over state and retains the
/// last `gibbs_iters - burn_in` post-sweep states, in chain order.
pub fn run_e_step<M: SpeechVariance + ?Sized>(
    x: &ComplexSpectrogram,
    model: &M,
    noise: &NoiseParams,
    gains: &GainVector,
    state: &mut SamplerState,
    gibbs_iters: usize,
    burn_in: usize,
) -> Result<(PosteriorSamples, SweepStats)> {
    if burn_in >= gibbs_iters {
        return Err(Error::invalid(format!(
            "burn_in {burn_in} must be smaller than gibbs_iters {gibbs_iters}"
        )));
    }
    let r = gibbs_iters - burn_in;
    let mut samples = PosteriorSamples {
        h: Vec::with_capacity(r),
        phi: Vec::with_capacity(r),
        sig_s2: Vec::with_capacity(r),
    };
    let mut h_rate = 0.0;
    let mut phi_rate = 0.0;
    for m in 1..=gibbs_iters {
        let stats = gibbs_sweep(state, x, model, noise, gains)?;
        h_rate += stats.h_accept_rate;
        phi_rate += stats.phi_accept_rate;
        if m > burn_in {
            samples.h.push(state.h.clone());
            samples.phi.push(state.phi.clone());
            samples.sig_s2.push(state.sig_s2.clone());
        }
    }
    Ok((
        samples,
        SweepStats {
            h_accept_rate: h_rate / gibbs_iters as f64,
            phi_accept_rate: phi_rate / gibbs_iters as f64,
        },
    ))
}

/// Empirical expected complete-data log-likelihood (up to an additive
/// constant): -(1/R) sum_r sum_fn [ln v + |x|^2 / v].
pub fn q_tilde(
    noise: &NoiseParams,
    gains: &GainVector,
    samples: &PosteriorSamples,
    x: &ComplexSpectrogram,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("q_tilde needs at least one sample"));
    }
    let x_power = x.power();
    let (nf, n) = x_power.dim();
    let mut acc = 0.0;
    for r in 0..samples.len() {
        let sig = &samples.sig_s2[r];
        let phi = &samples.phi[r];
        for f in 0..nf {
            for t in 0..n {
                let v = gains.g[t] * sig[[f, t]] + phi[[f, t]] * noise.sigma_b2[f];
                if v <= 0.0 {
                    return Err(Error::degenerate(format!(
                        "zero mixture variance at bin ({f}, {t})"
                    )));
                }
                acc += v.ln() + x_power[[f, t]] / v;
            }
        }
    }
    Ok(-acc / samples.len() as f64)
}

/// Majorization-minimization M-step: `inner_iters` rounds of the two
/// multiplicative updates, sigma_b^2 first, then the gains with the fresh
/// sigma_b^2. Non-negativity is preserved; -q_tilde never increases.
/// Returns the number of zero-denominator skips (parameter left unchanged).
pub fn m_step(
    noise: &mut NoiseParams,
    gains: &mut GainVector,
    samples: &PosteriorSamples,
    x: &ComplexSpectrogram,
    inner_iters: usize,
) -> Result<u32> {
    if samples.is_empty() {
        return Err(Error::invalid("m_step needs at least one sample"));
    }
    let x_power = x.power();
    let (nf, n) = x_power.dim();
    let mut warnings = 0u32;

    for _ in 0..inner_iters {
        let mut num = vec![0.0f64; nf];
        let mut den = vec![0.0f64; nf];
        for r in 0..samples.len() {
            let sig = &samples.sig_s2[r];
            let phi = &samples.phi[r];
            for f in 0..nf {
                for t in 0..n {
                    let p = phi[[f, t]];
                    let v = gains.g[t] * sig[[f, t]] + p * noise.sigma_b2[f];
                    if v <= 0.0 {
                        return Err(Error::degenerate(format!(
                            "zero mixture variance at bin ({f}, {t})"
                        )));
                    }
                    num[f] += x_power[[f, t]] * p / (v * v);
                    den[f] += p / v;
                }
            }
        }
        for f in 0..nf {
            if den[f] > 0.0 {
                noise.sigma_b2[f] *= (num[f] / den[f]).sqrt();
            } else {
                warnings += 1;
            }
        }

        let mut num = vec![0.0f64; n];
        let mut den = vec![0.0f64; n];
        for r in 0..samples.len() {
            let sig = &samples.sig_s2[r];
            let phi = &samples.phi[r];
            for f in 0..nf {
                for t in 0..n {
                    let s = sig[[f, t]];
                    let v = gains.g[t] * s + phi[[f, t]] * noise.sigma_b2[f];
                    if v <= 0.0 {
                        return Err(Error::degenerate(format!(
                            "zero mixture variance at bin ({f}, {t})"
                        )));
                    }
                    num[t] += x_power[[f, t]] * s / (v * v);
                    den[t] += s / v;
                }
            }
        }
        for t in 0..n {
            if den[t] > 0.0 {
                gains.g[t] *= (num[t] / den[t]).sqrt();
            } else {
                warnings += 1;
            }
        }
    }
    Ok(warnings)
}

#[derive(Debug, Clone, Serialize)]
pub struct McemConfig {
    pub n_iters: usize,
    pub gibbs_iters: usize,
    pub burn_in: usize,
    pub eps2: f64,
    /// MM rounds per M-step.
    pub inner_iters: usize,
    pub recon_iters: usize,
    pub recon_burn_in: usize,
    pub seed: u64,
    /// Diagnostic switch: start the noise scales at zero instead of one,
    /// turning the Wiener gains into the identity.
    pub noise_scale_zero: bool,
}

impl Default for McemConfig {
    fn default() -> Self {
        McemConfig {
            n_iters: 200,
            gibbs_iters: 40,
            burn_in: 30,
            eps2: 0.01,
            inner_iters: 1,
            recon_iters: 100,
            recon_burn_in: 50,
            seed: 0,
            noise_scale_zero: false,
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gibbs_iters == 0 || self.burn_in >= self.gibbs_iters {
            return Err(Error::invalid(format!(
                "need burn_in < gibbs_iters, got {}/{}",
                self.burn_in, self.gibbs_iters
            )));
        }
        if self.recon_iters == 0 || self.recon_burn_in >= self.recon_iters {
            return Err(Error::invalid(format!(
                "need recon_burn_in < recon_iters, got {}/{}",
                self.recon_burn_in, self.recon_iters
            )));
        }
        if !(self.eps2 > 0.0) {
            return Err(Error::invalid(format!(
                "eps2 must be positive, got {}",
                self.eps2
            )));
        }
        if self.inner_iters == 0 {
            return Err(Error::invalid("inner_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStats {
    pub iter: usize,
    pub neg_q_tilde: f64,
    pub h_accept_rate: f64,
    pub phi_accept_rate: f64,
    pub sigma_b2_norm: f64,
    pub g_norm: f64,
    pub mm_warnings: u32,
}

#[derive(Debug)]
pub struct McemOutcome {
    pub noise: NoiseParams,
    pub gains: GainVector,
    pub state: SamplerState,
    pub log: Vec<IterationStats>,
}

fn l2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Full MCEM loop: initialization (g = 1, sigma_b^2 = 1, h from the encoder
/// means of the mixture power, phi from one prior draw), then alternating
/// E- and M-steps with a warm-started chain.
pub fn mcem_run(
    x: &ComplexSpectrogram,
    vae: &VaeParams,
    alpha: AlphaParam,
    cfg: &McemConfig,
) -> Result<McemOutcome> {
    cfg.validate()?;
    if x.n_freqs() != vae.n_freqs() {
        return Err(Error::invalid(format!(
            "spectrogram has F={} bins but the weights declare F={}",
            x.n_freqs(),
            vae.n_freqs()
        )));
    }
    let x_power = x.power();
    if x_power.iter().all(|&p| p == 0.0) {
        return Err(Error::invalid("mixture spectrogram is identically zero"));
    }

    let n = x.n_frames();
    let mut noise = NoiseParams::ones(alpha, x.n_freqs());
    if cfg.noise_scale_zero {
        noise.sigma_b2.fill(0.0);
    }
    let mut gains = GainVector::ones(n);

    let h0 = encode_means(vae, x_power.t())?;
    let mut state = SamplerState::init(h0, vae, alpha, cfg.eps2, cfg.seed)?;

    let mut log = Vec::with_capacity(cfg.n_iters);
    for iter in 1..=cfg.n_iters {
        let (samples, stats) = run_e_step(
            x,
            vae,
            &noise,
            &gains,
            &mut state,
            cfg.gibbs_iters,
            cfg.burn_in,
        )?;
        let warnings = m_step(&mut noise, &mut gains, &samples, x, cfg.inner_iters)?;
        let finite = noise.sigma_b2.iter().all(|v| v.is_finite())
            && gains.g.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::numerical(format!(
                "non-finite noise parameters at iteration {iter}"
            )));
        }
        let nq = -q_tilde(&noise, &gains, &samples, x)?;
        log.push(IterationStats {
            iter,
            neg_q_tilde: nq,
            h_accept_rate: stats.h_accept_rate,
            phi_accept_rate: stats.phi_accept_rate,
            sigma_b2_norm: l2(&noise.sigma_b2),
            g_norm: l2(&gains.g),
            mm_warnings: warnings,
        });
    }

    Ok(McemOutcome {
        noise,
        gains,
        state,
        log,
    })
}

/// Posterior-mean Wiener estimate from an explicit set of retained samples:
/// mean over r of g sigma_s^2 / (g sigma_s^2 + phi sigma_b^2), applied to x.
pub fn wiener_from_samples(
    x: &ComplexSpectrogram,
    samples: &PosteriorSamples,
    noise: &NoiseParams,
    gains: &GainVector,
) -> Result<ComplexSpectrogram> {
    if samples.is_empty() {
        return Err(Error::invalid("reconstruction needs at least one sample"));
    }
    let (nf, n) = x.values.dim();
    let mut gain = Array2::<f64>::zeros((nf, n));
    for r in 0..samples.len() {
        let sig = &samples.sig_s2[r];
        let phi = &samples.phi[r];
        for f in 0..nf {
            for t in 0..n {
                let gs = gains.g[t] * sig[[f, t]];
                let v = gs + phi[[f, t]] * noise.sigma_b2[f];
                if v <= 0.0 {
                    return Err(Error::degenerate(format!(
                        "zero mixture variance at bin ({f}, {t})"
                    )));
                }
                gain[[f, t]] += gs / v;
            }
        }
    }
    gain /= samples.len() as f64;
    let mut out = x.clone();
    for f in 0..nf {
        for t in 0..n {
            out.values[[f, t]] = x.values[[f, t]] * gain[[f, t]];
        }
    }
    Ok(out)
}

/// Speech reconstruction: a fresh Metropolis-within-Gibbs run warm-started
/// from the final MCEM state, Wiener gains averaged over its retained
/// samples. Returns the scaled-speech estimate at the mixture's level.
pub fn reconstruct<M: SpeechVariance + ?Sized>(
    x: &ComplexSpectrogram,
    model: &M,
    noise: &NoiseParams,
    gains: &GainVector,
    state: &mut SamplerState,
    recon_iters: usize,
    recon_burn_in: usize,
) -> Result<ComplexSpectrogram> {
    let (samples, _) = run_e_step(x, model, noise, gains, state, recon_iters, recon_burn_in)?;
    wiener_from_samples(x, &samples, noise, gains)
}

/// MCEM followed by reconstruction; the one-call enhancement backend.
pub fn enhance(
    x: &ComplexSpectrogram,
    vae: &VaeParams,
    alpha: AlphaParam,
    cfg: &McemConfig,
) -> Result<(ComplexSpectrogram, McemOutcome)> {
    let mut outcome = mcem_run(x, vae, alpha, cfg)?;
    let est = reconstruct(
        x,
        vae,
        &outcome.noise,
        &outcome.gains,
        &mut outcome.state,
        cfg.recon_iters,
        cfg.recon_burn_in,
    )?;
    Ok((est, outcome))
}

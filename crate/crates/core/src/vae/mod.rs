//! Variational autoencoder speech prior.
//!
//! Recognition network: power spectrum -> tanh hidden layer -> Gaussian
//! posterior (mean, log-variance) over the latent vector. Generative
//! network: latent -> tanh hidden layer -> per-frequency log-variances of
//! a zero-mean circular complex Gaussian on the speech coefficients.
//! The training objective couples an Itakura-Saito reconstruction term
//! with the Gaussian-prior KL term; gradients are derived by hand so the
//! whole trainer stays dependency-free and exactly checkable.

mod train;
mod weights;

pub use train::{train, EpochStats, TrainConfig, TrainLog};
pub use weights::{load_weights, save_weights};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stable::RngStream;

/// Floor applied to power spectra before encoding and inside the
/// Itakura-Saito divergence; keeps silent frames out of ln(0).
pub const EPS_POWER: f64 = 1e-10;

/// All weights and biases of both networks.
///
/// Encoder: w1 (H x F), b1 (H), w_mu/w_lv (L x H), b_mu/b_lv (L).
/// Decoder: v1 (H x L), c1 (H), v_lv (F x H), c_lv (F).
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub w_lv: Array2<f64>,
    pub b_lv: Array1<f64>,
    pub v1: Array2<f64>,
    pub c1: Array1<f64>,
    pub v_lv: Array2<f64>,
    pub c_lv: Array1<f64>,
}

impl VaeParams {
    /// Fan-based uniform initialization for the weight matrices, zero biases.
    pub fn glorot_init(f: usize, l: usize, h: usize, rng: &mut RngStream) -> Result<Self> {
        if f == 0 || l == 0 || h == 0 || l >= f {
            return Err(Error::invalid(format!(
                "need 0 < L < F and H > 0, got F={f} L={l} H={h}"
            )));
        }
        let mat = |rows: usize, cols: usize, rng: &mut RngStream| {
            let lim = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-lim..lim))
        };
        Ok(VaeParams {
            w1: mat(h, f, rng),
            b1: Array1::zeros(h),
            w_mu: mat(l, h, rng),
            b_mu: Array1::zeros(l),
            w_lv: mat(l, h, rng),
            b_lv: Array1::zeros(l),
            v1: mat(h, l, rng),
            c1: Array1::zeros(h),
            v_lv: mat(f, h, rng),
            c_lv: Array1::zeros(f),
        })
    }

    pub fn n_freqs(&self) -> usize {
        self.v_lv.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_mu.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Shape consistency across both networks plus L < F and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (f, l, h) = (self.n_freqs(), self.latent_dim(), self.hidden_dim());
        let shapes_ok = self.w1.dim() == (h, f)
            && self.b1.len() == h
            && self.w_mu.dim() == (l, h)
            && self.b_mu.len() == l
            && self.w_lv.dim() == (l, h)
            && self.b_lv.len() == l
            && self.v1.dim() == (h, l)
            && self.c1.len() == h
            && self.v_lv.dim() == (f, h)
            && self.c_lv.len() == f;
        if !shapes_ok {
            return Err(Error::invalid("inconsistent parameter shapes"));
        }
        if l >= f {
            return Err(Error::invalid(format!(
                "latent dim {l} must be smaller than {f} frequencies"
            )));
        }
        let finite = self
            .tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::numerical("non-finite parameter entry"));
        }
        Ok(())
    }

    /// Fixed-order view of all ten tensors as flat slices.
    pub(crate) fn tensors(&self) -> [&[f64]; 10] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w_mu.as_slice().unwrap(),
            self.b_mu.as_slice().unwrap(),
            self.w_lv.as_slice().unwrap(),
            self.b_lv.as_slice().unwrap(),
            self.v1.as_slice().unwrap(),
            self.c1.as_slice().unwrap(),
            self.v_lv.as_slice().unwrap(),
            self.c_lv.as_slice().unwrap(),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w_mu.as_slice_mut().unwrap(),
            self.b_mu.as_slice_mut().unwrap(),
            self.w_lv.as_slice_mut().unwrap(),
            self.b_lv.as_slice_mut().unwrap(),
            self.v1.as_slice_mut().unwrap(),
            self.c1.as_slice_mut().unwrap(),
            self.v_lv.as_slice_mut().unwrap(),
            self.c_lv.as_slice_mut().unwrap(),
        ]
    }
}

/// Gradient (or any same-shaped tensor bundle, e.g. Adam moments).
#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub w_lv: Array2<f64>,
    pub b_lv: Array1<f64>,
    pub v1: Array2<f64>,
    pub c1: Array1<f64>,
    pub v_lv: Array2<f64>,
    pub c_lv: Array1<f64>,
}

impl VaeGrads {
    pub fn zeros_like(p: &VaeParams) -> Self {
        VaeGrads {
            w1: Array2::zeros(p.w1.dim()),
            b1: Array1::zeros(p.b1.len()),
            w_mu: Array2::zeros(p.w_mu.dim()),
            b_mu: Array1::zeros(p.b_mu.len()),
            w_lv: Array2::zeros(p.w_lv.dim()),
            b_lv: Array1::zeros(p.b_lv.len()),
            v1: Array2::zeros(p.v1.dim()),
            c1: Array1::zeros(p.c1.len()),
            v_lv: Array2::zeros(p.v_lv.dim()),
            c_lv: Array1::zeros(p.c_lv.len()),
        }
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 10] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w_mu.as_slice().unwrap(),
            self.b_mu.as_slice().unwrap(),
            self.w_lv.as_slice().unwrap(),
            self.b_lv.as_slice().unwrap(),
            self.v1.as_slice().unwrap(),
            self.c1.as_slice().unwrap(),
            self.v_lv.as_slice().unwrap(),
            self.c_lv.as_slice().unwrap(),
        ]
    }
}

/// Gaussian recognition posterior for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Array1<f64>,
    pub log_var: Array1<f64>,
}

/// Itakura-Saito divergence d_IS(x; y) = x/y - ln(x/y) - 1.
pub fn itakura_saito(x: f64, y: f64) -> f64 {
    x / y - (x / y).ln() - 1.0
}

fn broadcast_add(mut m: Array2<f64>, v: &Array1<f64>) -> Array2<f64> {
    m += &v.view().insert_axis(Axis(1));
    m
}

/// Batched encoder pass. `x` is F x B (one column per frame), already
/// floored. Returns (t1, mu, log_var), shapes H x B and L x B.
pub(crate) fn encode_raw(
    p: &VaeParams,
    x: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut t1 = broadcast_add(p.w1.dot(&x), &p.b1);
    t1.mapv_inplace(f64::tanh);
    let mu = broadcast_add(p.w_mu.dot(&t1), &p.b_mu);
    let lv = broadcast_add(p.w_lv.dot(&t1), &p.b_lv);
    (t1, mu, lv)
}

/// Batched decoder pass. `h` is L x B; returns (t2, log sigma_s^2), shapes
/// H x B and F x B.
pub(crate) fn decode_raw(p: &VaeParams, h: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let mut t2 = broadcast_add(p.v1.dot(&h), &p.c1);
    t2.mapv_inplace(f64::tanh);
    let dlv = broadcast_add(p.v_lv.dot(&t2), &p.c_lv);
    (t2, dlv)
}

fn check_spectrum(p: &VaeParams, x: ArrayView1<f64>) -> Result<()> {
    if x.len() != p.n_freqs() {
        return Err(Error::invalid(format!(
            "power spectrum has {} bins, network expects {}",
            x.len(),
            p.n_freqs()
        )));
    }
    if x.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("power spectrum must be finite non-negative"));
    }
    Ok(())
}

/// Recognition network on one power spectrum.
pub fn encode(p: &VaeParams, power_spectrum: ArrayView1<f64>) -> Result<EncoderOutput> {
    check_spectrum(p, power_spectrum)?;
    let x = power_spectrum
        .mapv(|v| v.max(EPS_POWER))
        .insert_axis(Axis(1));
    let (_, mu, lv) = encode_raw(p, x.view());
    Ok(EncoderOutput {
        mu: mu.index_axis(Axis(1), 0).to_owned(),
        log_var: lv.index_axis(Axis(1), 0).to_owned(),
    })
}

/// Batched recognition: rows of `frames` are power spectra; returns the
/// posterior means as an N x L matrix (the Gibbs chain's warm start).
pub fn encode_means(p: &VaeParams, frames: ArrayView2<f64>) -> Result<Array2<f64>> {
    if frames.ncols() != p.n_freqs() {
        return Err(Error::invalid(format!(
            "frames have {} bins, network expects {}",
            frames.ncols(),
            p.n_freqs()
        )));
    }
    let x = frames.t().mapv(|v| v.max(EPS_POWER));
    let (_, mu, _) = encode_raw(p, x.view());
    Ok(mu.t().to_owned())
}

/// Generative network: speech variances sigma_s^2(h), strictly positive.
pub fn decode(p: &VaeParams, h: ArrayView1<f64>) -> Result<Array1<f64>> {
    if h.len() != p.latent_dim() {
        return Err(Error::invalid(format!(
            "latent vector has {} dims, network expects {}",
            h.len(),
            p.latent_dim()
        )));
    }
    let hb = h.insert_axis(Axis(1));
    let (_, dlv) = decode_raw(p, hb.view());
    Ok(dlv.index_axis(Axis(1), 0).mapv(f64::exp))
}

/// h = mu + exp(log_var / 2) * eps with eps ~ N(0, I).
pub fn reparam_sample(enc: &EncoderOutput, rng: &mut RngStream) -> Array1<f64> {
    let mut h = Array1::zeros(enc.mu.len());
    for l in 0..h.len() {
        let eps: f64 = rng.sample(StandardNormal);
        h[l] = enc.mu[l] + (enc.log_var[l] / 2.0).exp() * eps;
    }
    h
}

/// Completed KL divergence from the recognition posterior to N(0, I):
/// -1/2 sum(log_var - mu^2 - exp(log_var) + 1). Non-negative, zero iff the
/// posterior is the prior.
pub fn kl_divergence(enc: &EncoderOutput) -> f64 {
    enc.mu
        .iter()
        .zip(&enc.log_var)
        .map(|(&m, &lv)| -0.5 * (lv - m * m - lv.exp() + 1.0))
        .sum()
}

/// Cached forward pass over a batch; one reparametrization draw per frame.
struct Forward {
    x: Array2<f64>,
    t1: Array2<f64>,
    mu: Array2<f64>,
    lv: Array2<f64>,
    eps: Array2<f64>,
    std: Array2<f64>,
    t2: Array2<f64>,
    dlv: Array2<f64>,
    h: Array2<f64>,
}

fn forward(p: &VaeParams, batch: ArrayView2<f64>, rng: &mut RngStream) -> Result<Forward> {
    if batch.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.ncols() != p.n_freqs() {
        return Err(Error::invalid(format!(
            "batch frames have {} bins, network expects {}",
            batch.ncols(),
            p.n_freqs()
        )));
    }
    if batch.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("batch must be finite non-negative"));
    }
    let x = batch.t().mapv(|v| v.max(EPS_POWER));
    let b = x.ncols();
    let l = p.latent_dim();
    let (t1, mu, lv) = encode_raw(p, x.view());
    let eps = Array2::from_shape_fn((l, b), |_| rng.sample(StandardNormal));
    let std = lv.mapv(|v| (v / 2.0).exp());
    let h = &mu + &(&std * &eps);
    let (t2, dlv) = decode_raw(p, h.view());
    Ok(Forward {
        x,
        t1,
        mu,
        lv,
        eps,
        std,
        t2,
        dlv,
        h,
    })
}

fn elbo_value(fw: &Forward) -> f64 {
    // -d_IS(x; sigma^2) summed over bins: ln x - dlv - x e^{-dlv} + 1
    let mut recon = 0.0;
    for (&x, &dlv) in fw.x.iter().zip(fw.dlv.iter()) {
        recon += x.ln() - dlv - x * (-dlv).exp() + 1.0;
    }
    // 1/2 sum(lv - mu^2 - exp(lv)); the +1 constant is dropped
    let mut klp = 0.0;
    for (&m, &lv) in fw.mu.iter().zip(fw.lv.iter()) {
        klp += 0.5 * (lv - m * m - lv.exp());
    }
    recon + klp
}

/// Single-sample ELBO of a batch (rows are power-spectrum frames), summed
/// over frames. Additive constants are dropped.
pub fn elbo(p: &VaeParams, batch: ArrayView2<f64>, rng: &mut RngStream) -> Result<f64> {
    Ok(elbo_value(&forward(p, batch, rng)?))
}

/// ELBO and its exact analytic gradient for every weight and bias; the
/// value and gradient share one reparametrization draw.
pub fn elbo_grad(
    p: &VaeParams,
    batch: ArrayView2<f64>,
    rng: &mut RngStream,
) -> Result<(f64, VaeGrads)> {
    let fw = forward(p, batch, rng)?;
    let value = elbo_value(&fw);

    // decoder chain: dELBO/d dlv = x e^{-dlv} - 1
    let g_dlv = &fw.x * &fw.dlv.mapv(|v| (-v).exp()) - 1.0;
    let g_c_lv = g_dlv.sum_axis(Axis(1));
    let g_v_lv = g_dlv.dot(&fw.t2.t());
    let g_a2 = p.v_lv.t().dot(&g_dlv) * fw.t2.mapv(|t| 1.0 - t * t);
    let g_c1 = g_a2.sum_axis(Axis(1));
    let g_v1 = g_a2.dot(&fw.h.t());

    // through the reparametrized sample into the encoder heads
    let g_h = p.v1.t().dot(&g_a2);
    let g_mu = &g_h - &fw.mu;
    let g_lv = 0.5 * (&g_h * &fw.eps * &fw.std) + fw.lv.mapv(|v| 0.5 * (1.0 - v.exp()));
    let g_b_mu = g_mu.sum_axis(Axis(1));
    let g_w_mu = g_mu.dot(&fw.t1.t());
    let g_b_lv = g_lv.sum_axis(Axis(1));
    let g_w_lv = g_lv.dot(&fw.t1.t());

    let g_a1 =
        (p.w_mu.t().dot(&g_mu) + p.w_lv.t().dot(&g_lv)) * fw.t1.mapv(|t| 1.0 - t * t);
    let g_b1 = g_a1.sum_axis(Axis(1));
    let g_w1 = g_a1.dot(&fw.x.t());

    Ok((
        value,
        VaeGrads {
            w1: g_w1,
            b1: g_b1,
            w_mu: g_w_mu,
            b_mu: g_b_mu,
            w_lv: g_w_lv,
            b_lv: g_b_lv,
            v1: g_v1,
            c1: g_c1,
            v_lv: g_v_lv,
            c_lv: g_c_lv,
        },
    ))
}

/// Numerical self-checks shared by unit tests and the acceptance gate.
pub mod diag {
    use super::*;
    use crate::stable::RngStream;
    use rand::Rng;

    /// Central finite differences over every parameter entry of a
    /// Glorot-initialized net against the analytic gradients, on a random
    /// non-negative batch. Returns the worst relative error per tensor;
    /// denominators are floored at 1e-3 so near-zero entries compare
    /// absolutely.
    pub fn finite_difference_check(
        f: usize,
        l: usize,
        h: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Vec<(&'static str, f64)>> {
        let mut rng = RngStream::new(seed, 0);
        let p = VaeParams::glorot_init(f, l, h, &mut rng)?;
        let mut rng = RngStream::new(seed + 1, 1);
        let batch = Array2::from_shape_fn((batch_size, f), |_| rng.random_range(0.0..4.0));
        let noise_seed = seed + 2;
        let (_, grads) = elbo_grad(&p, batch.view(), &mut RngStream::new(noise_seed, 0))?;

        let step = 1e-5;
        let names = [
            "w1", "b1", "w_mu", "b_mu", "w_lv", "b_lv", "v1", "c1", "v_lv", "c_lv",
        ];
        let mut report = Vec::with_capacity(names.len());
        for ti in 0..names.len() {
            let n_entries = grads.tensors()[ti].len();
            let mut worst = 0.0f64;
            for ei in 0..n_entries {
                let mut pp = p.clone();
                pp.tensors_mut()[ti][ei] += step;
                let up = elbo(&pp, batch.view(), &mut RngStream::new(noise_seed, 0))?;
                let mut pm = p.clone();
                pm.tensors_mut()[ti][ei] -= step;
                let dn = elbo(&pm, batch.view(), &mut RngStream::new(noise_seed, 0))?;
                let fd = (up - dn) / (2.0 * step);
                let an = grads.tensors()[ti][ei];
                worst = worst.max((an - fd).abs() / fd.abs().max(1e-3));
            }
            report.push((names[ti], worst));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array2};

    pub(super) fn random_params(f: usize, l: usize, h: usize, seed: u64) -> VaeParams {
        let mut rng = RngStream::new(seed, 0);
        VaeParams::glorot_init(f, l, h, &mut rng).unwrap()
    }

    fn zero_params(f: usize, l: usize, h: usize) -> VaeParams {
        VaeParams {
            w1: Array2::zeros((h, f)),
            b1: Array1::zeros(h),
            w_mu: Array2::zeros((l, h)),
            b_mu: Array1::zeros(l),
            w_lv: Array2::zeros((l, h)),
            b_lv: Array1::zeros(l),
            v1: Array2::zeros((h, l)),
            c1: Array1::zeros(h),
            v_lv: Array2::zeros((f, h)),
            c_lv: Array1::zeros(f),
        }
    }

    fn random_batch(b: usize, f: usize, seed: u64) -> Array2<f64> {
        use rand::Rng;
        let mut rng = RngStream::new(seed, 1);
        Array2::from_shape_fn((b, f), |_| rng.random_range(0.0..4.0))
    }

    #[test]
    fn zero_net_encodes_to_standard_posterior() {
        let p = zero_params(8, 2, 4);
        let out = encode(&p, arr1(&[1.0; 8]).view()).unwrap();
        assert!(out.mu.iter().all(|&m| m == 0.0));
        assert!(out.log_var.iter().all(|&v| v == 0.0));
        let again = encode(&p, arr1(&[1.0; 8]).view()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn zero_net_decodes_to_unit_variances() {
        let p = zero_params(8, 2, 4);
        let s2 = decode(&p, arr1(&[0.3, -0.7]).view()).unwrap();
        assert!(s2.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn decode_is_positive_for_wild_latents() {
        let p = random_params(16, 4, 8, 5);
        for h in [
            arr1(&[0.0, 0.0, 0.0, 0.0]),
            arr1(&[50.0, -50.0, 3.0, 1e3]),
            arr1(&[-1e6, 1e6, 0.0, 0.5]),
        ] {
            let s2 = decode(&p, h.view()).unwrap();
            assert!(s2.iter().all(|&v| v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn encode_matches_straight_line_oracle() {
        let (f, l, h) = (8, 2, 4);
        let p = random_params(f, l, h, 42);
        let x = random_batch(1, f, 9).row(0).to_owned();
        let out = encode(&p, x.view()).unwrap();

        // independent loop-based reimplementation
        let xf: Vec<f64> = x.iter().map(|&v| v.max(EPS_POWER)).collect();
        let mut hid = vec![0.0; h];
        for i in 0..h {
            let mut acc = p.b1[i];
            for j in 0..f {
                acc += p.w1[[i, j]] * xf[j];
            }
            hid[i] = acc.tanh();
        }
        for li in 0..l {
            let mut mu = p.b_mu[li];
            let mut lv = p.b_lv[li];
            for i in 0..h {
                mu += p.w_mu[[li, i]] * hid[i];
                lv += p.w_lv[[li, i]] * hid[i];
            }
            assert_abs_diff_eq!(out.mu[li], mu, epsilon = 1e-12);
            assert_abs_diff_eq!(out.log_var[li], lv, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_matches_straight_line_oracle() {
        let (f, l, h) = (8, 2, 4);
        let p = random_params(f, l, h, 43);
        let hv = arr1(&[0.4, -1.1]);
        let s2 = decode(&p, hv.view()).unwrap();
        for fi in 0..f {
            let mut hid = vec![0.0; h];
            for i in 0..h {
                let mut acc = p.c1[i];
                for j in 0..l {
                    acc += p.v1[[i, j]] * hv[j];
                }
                hid[i] = acc.tanh();
            }
            let mut dlv = p.c_lv[fi];
            for i in 0..h {
                dlv += p.v_lv[[fi, i]] * hid[i];
            }
            assert_abs_diff_eq!(s2[fi], dlv.exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let p = random_params(8, 2, 4, 1);
        assert!(encode(&p, arr1(&[1.0; 7]).view()).is_err());
        assert!(encode(&p, arr1(&[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).view()).is_err());
        assert!(decode(&p, arr1(&[0.0; 3]).view()).is_err());
        let empty: Array2<f64> = Array2::zeros((0, 8));
        let mut rng = RngStream::new(0, 0);
        assert!(elbo(&p, empty.view(), &mut rng).is_err());
    }

    #[test]
    fn reparam_collapses_to_mean_at_tiny_variance() {
        let enc = EncoderOutput {
            mu: arr1(&[1.5, -2.0]),
            log_var: arr1(&[-800.0, -800.0]),
        };
        let mut rng = RngStream::new(3, 0);
        let h = reparam_sample(&enc, &mut rng);
        assert_eq!(h, enc.mu);
    }

    #[test]
    fn reparam_is_deterministic_and_centered() {
        let enc = EncoderOutput {
            mu: arr1(&[0.0, 0.0]),
            log_var: arr1(&[0.0, 0.0]),
        };
        let mut r1 = RngStream::new(10, 2);
        let mut r2 = RngStream::new(10, 2);
        assert_eq!(reparam_sample(&enc, &mut r1), reparam_sample(&enc, &mut r2));

        let mut rng = RngStream::new(11, 0);
        let m = 100_000usize;
        let mut mean = [0.0f64; 2];
        for _ in 0..m {
            let h = reparam_sample(&enc, &mut rng);
            mean[0] += h[0];
            mean[1] += h[1];
        }
        let tol = 3.0 / (m as f64).sqrt();
        assert!((mean[0] / m as f64).abs() < tol);
        assert!((mean[1] / m as f64).abs() < tol);
    }

    #[test]
    fn itakura_saito_reference_values() {
        assert_abs_diff_eq!(itakura_saito(2.0, 1.0), 2.0 - 2f64.ln() - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(itakura_saito(2.0, 1.0), 0.30685, epsilon = 1e-5);
        assert_eq!(itakura_saito(3.7, 3.7), 0.0);
    }

    #[test]
    fn elbo_of_zero_net_on_unit_input_is_pure_kl() {
        // sigma^2 = 1 = |s|^2: reconstruction term vanishes, KL part is
        // -L*B/2 in the dropped-constant convention.
        let (f, l, h, b) = (8, 2, 4, 3);
        let p = zero_params(f, l, h);
        let batch = Array2::from_elem((b, f), 1.0);
        let mut rng = RngStream::new(0, 0);
        let v = elbo(&p, batch.view(), &mut rng).unwrap();
        assert_abs_diff_eq!(v, -((l * b) as f64) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn elbo_reconstruction_term_uses_itakura_saito() {
        // zero net, x = 2 everywhere: recon = -F*B*d_IS(2; 1)
        let (f, l, h, b) = (8, 2, 4, 3);
        let p = zero_params(f, l, h);
        let batch = Array2::from_elem((b, f), 2.0);
        let mut rng = RngStream::new(0, 0);
        let v = elbo(&p, batch.view(), &mut rng).unwrap();
        let expect = -((f * b) as f64) * itakura_saito(2.0, 1.0) - (l * b) as f64 / 2.0;
        assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
    }

    #[test]
    fn kl_divergence_nonnegative_and_tight_at_prior() {
        use rand::Rng;
        let at_prior = EncoderOutput {
            mu: arr1(&[0.0; 4]),
            log_var: arr1(&[0.0; 4]),
        };
        assert_eq!(kl_divergence(&at_prior), 0.0);

        let mut rng = RngStream::new(17, 0);
        for _ in 0..10_000 {
            let mu = Array1::from_shape_fn(4, |_| rng.random_range(-5.0..5.0));
            let lv = Array1::from_shape_fn(4, |_| rng.random_range(-6.0..4.0));
            let kl = kl_divergence(&EncoderOutput { mu, log_var: lv });
            assert!(kl >= -1e-12, "kl = {kl}");
        }
    }

    #[test]
    fn kl_gradients_vanish_at_the_prior_fixed_point() {
        // zero weights force mu = 0, log_var = 0; unit input makes the
        // reconstruction gradient zero too, so b_mu and b_lv are stationary.
        let (f, l, h, b) = (8, 2, 4, 3);
        let p = zero_params(f, l, h);
        let batch = Array2::from_elem((b, f), 1.0);
        let mut rng = RngStream::new(0, 0);
        let (_, g) = elbo_grad(&p, batch.view(), &mut rng).unwrap();
        assert!(g.b_mu.iter().all(|&v| v == 0.0));
        assert!(g.b_lv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elbo_and_grad_share_the_reparam_draw() {
        let p = random_params(8, 2, 4, 77);
        let batch = random_batch(3, 8, 78);
        let mut r1 = RngStream::new(5, 0);
        let mut r2 = RngStream::new(5, 0);
        let v1 = elbo(&p, batch.view(), &mut r1).unwrap();
        let (v2, _) = elbo_grad(&p, batch.view(), &mut r2).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn gradients_match_finite_differences_small_net() {
        for (name, worst) in diag::finite_difference_check(6, 3, 4, 2, 100).unwrap() {
            assert!(worst < 1e-4, "tensor {name}: worst relative error {worst}");
        }
    }
}

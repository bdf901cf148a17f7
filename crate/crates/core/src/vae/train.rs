//! Adam trainer with early stopping on a held-out validation split.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stable::RngStream;

use super::{elbo, elbo_grad, VaeGrads, VaeParams, EPS_POWER};

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-7,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.2,
            latent_dim: 64,
            hidden_dim: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let pos = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.adam_eps > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.latent_dim > 0
            && self.hidden_dim > 0;
        if !pos {
            return Err(Error::invalid("train config fields must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-frame ELBO over the training minibatches of this epoch.
    pub train_elbo: f64,
    /// Mean per-frame ELBO on the validation split.
    pub val_elbo: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_elbo: f64,
}

struct Adam {
    m: VaeGrads,
    v: VaeGrads,
    t: u64,
}

impl Adam {
    fn new(p: &VaeParams) -> Self {
        Adam {
            m: VaeGrads::zeros_like(p),
            v: VaeGrads::zeros_like(p),
            t: 0,
        }
    }

    /// One ascent step on the ELBO.
    fn step(&mut self, p: &mut VaeParams, g: &VaeGrads, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let mut ms = self.m.tensors_mut();
        let mut vs = self.v.tensors_mut();
        let gs = g.tensors();
        let mut ps = p.tensors_mut();
        for ti in 0..10 {
            let (mt, vt, gt, pt) = (&mut ms[ti], &mut vs[ti], gs[ti], &mut ps[ti]);
            for i in 0..gt.len() {
                mt[i] = cfg.beta1 * mt[i] + (1.0 - cfg.beta1) * gt[i];
                vt[i] = cfg.beta2 * vt[i] + (1.0 - cfg.beta2) * gt[i] * gt[i];
                let mhat = mt[i] / c1;
                let vhat = vt[i] / c2;
                pt[i] += cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

impl VaeGrads {
    fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
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

fn gather_rows(data: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), data.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&data.row(i));
    }
    out
}

/// Train on a dataset whose rows are power-spectrum frames. Returns the
/// parameters of the best validation epoch and the per-epoch log.
pub fn train(dataset: ArrayView2<f64>, cfg: &TrainConfig) -> Result<(VaeParams, TrainLog)> {
    cfg.validate()?;
    let n = dataset.nrows();
    let f = dataset.ncols();
    if n < 10 * cfg.batch_size {
        return Err(Error::invalid(format!(
            "dataset has {n} frames; need at least 10 * batch_size = {}",
            10 * cfg.batch_size
        )));
    }
    if dataset.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("dataset must be finite non-negative"));
    }
    let data = dataset.mapv(|v| v.max(EPS_POWER));

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut params = VaeParams::glorot_init(f, cfg.latent_dim, cfg.hidden_dim, &mut rng)?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).max(1);
    if n - n_val < cfg.batch_size {
        return Err(Error::invalid(
            "validation split leaves less than one training batch",
        ));
    }
    let (train_idx, val_idx) = idx.split_at(n - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_set = gather_rows(&data, val_idx);

    let mut adam = Adam::new(&params);
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_elbo: f64::NEG_INFINITY,
    };
    let mut best_params = params.clone();

    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch = gather_rows(&data, chunk);
            let (value, grads) = elbo_grad(&params, batch.view(), &mut rng)?;
            if !value.is_finite() {
                return Err(Error::numerical(format!(
                    "ELBO diverged at epoch {epoch}"
                )));
            }
            adam.step(&mut params, &grads, cfg);
            total += value;
        }
        let val_total = elbo(&params, val_set.view(), &mut rng)?;
        if !val_total.is_finite() {
            return Err(Error::numerical(format!(
                "validation ELBO diverged at epoch {epoch}"
            )));
        }
        let stats = EpochStats {
            epoch,
            train_elbo: total / train_idx.len() as f64,
            val_elbo: val_total / val_idx.len() as f64,
        };
        log.epochs.push(stats);

        if val_total > log.best_val_elbo {
            log.best_val_elbo = val_total;
            log.best_epoch = epoch;
            best_params = params.clone();
        } else if epoch - log.best_epoch >= cfg.patience {
            break;
        }
    }
    // report the per-frame value for the best epoch
    log.best_val_elbo /= val_idx.len() as f64;
    Ok((best_params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    /// Low-rank-ish synthetic power spectra: two templates plus noise.
    fn toy_dataset(n: usize, f: usize, seed: u64) -> Array2<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut data = Array2::zeros((n, f));
        for i in 0..n {
            let bright = i % 2 == 0;
            for j in 0..f {
                let base = if bright {
                    1.0 + (j as f64 / f as f64)
                } else {
                    2.0 - 1.5 * (j as f64 / f as f64)
                };
                data[[i, j]] = base * rng.random_range(0.5..1.5);
            }
        }
        data
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            max_epochs: 8,
            patience: 3,
            latent_dim: 2,
            hidden_dim: 6,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rejects_small_datasets() {
        let data = toy_dataset(100, 8, 0);
        let err = train(data.view(), &tiny_cfg());
        assert!(err.is_err());
    }

    #[test]
    fn training_improves_validation_elbo() {
        let data = toy_dataset(400, 8, 1);
        let (_, log) = train(data.view(), &tiny_cfg()).unwrap();
        assert!(log.best_val_elbo > log.epochs[0].val_elbo);
    }

    #[test]
    fn early_stop_bookkeeping_is_consistent() {
        let data = toy_dataset(400, 8, 2);
        let cfg = TrainConfig {
            max_epochs: 60,
            patience: 2,
            ..tiny_cfg()
        };
        let (_, log) = train(data.view(), &cfg).unwrap();
        let last = log.epochs.last().unwrap().epoch;
        if last < cfg.max_epochs {
            assert_eq!(last, log.best_epoch + cfg.patience);
        }
        assert!(log
            .epochs
            .iter()
            .enumerate()
            .all(|(i, e)| e.epoch == i + 1));
    }

    #[test]
    fn fixed_seed_reproduces_weights() {
        let data = toy_dataset(400, 8, 3);
        let (p1, _) = train(data.view(), &tiny_cfg()).unwrap();
        let (p2, _) = train(data.view(), &tiny_cfg()).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            validation_fraction: 1.5,
            ..TrainConfig::default()
        };
        assert!(train(toy_dataset(400, 8, 0).view(), &bad).is_err());
    }
}

//! Objective enhancement scores against a known clean reference.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stft::Waveform;

/// Score reported for a perfect (zero-residual) reconstruction; also the
/// magnitude of the floor for an estimate orthogonal to the reference.
pub const SI_SDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalReport {
    pub si_sdr_db: f64,
    pub input_si_sdr_db: f64,
    pub improvement_db: f64,
}

/// Scale-invariant signal-to-distortion ratio in dB: the estimate is
/// projected onto the reference with the optimal scalar gain and the
/// energy ratio of projection to residual is returned, capped at
/// +-SI_SDR_CAP_DB.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "length mismatch: reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.sample_rate != estimate.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: reference {} Hz, estimate {} Hz",
            reference.sample_rate, estimate.sample_rate
        )));
    }
    let rr: f64 = reference.samples.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(Error::invalid("reference is identically zero"));
    }
    let er: f64 = estimate
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| e * r)
        .sum();
    let beta = er / rr;
    let target = beta * beta * rr;
    let residual: f64 = estimate
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| {
            let d = e - beta * r;
            d * d
        })
        .sum();
    if residual == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Scores the enhanced and unprocessed mixtures against the clean signal.
pub fn evaluate(clean: &Waveform, mixture: &Waveform, enhanced: &Waveform) -> Result<EvalReport> {
    let si_sdr_db = si_sdr(clean, enhanced)?;
    let input_si_sdr_db = si_sdr(clean, mixture)?;
    Ok(EvalReport {
        si_sdr_db,
        input_si_sdr_db,
        improvement_db: si_sdr_db - input_si_sdr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    fn random_wave(n: usize, seed: u64) -> Waveform {
        let mut rng = RngStream::new(seed, 0);
        wave((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn perfect_estimate_hits_the_cap() {
        let r = random_wave(256, 1);
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        // scale invariance holds at the cap too
        let scaled = wave(r.samples.iter().map(|s| 3.0 * s).collect());
        assert_eq!(si_sdr(&r, &scaled).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_at_a_tenth_gives_ten_db() {
        // constant reference, alternating-sign noise: exactly orthogonal
        let n = 512;
        let r = wave(vec![0.5; n]);
        let rr: f64 = r.samples.iter().map(|s| s * s).sum();
        let noise_amp = (rr / 10.0 / n as f64).sqrt();
        let est = wave(
            (0..n)
                .map(|i| 0.5 + if i % 2 == 0 { noise_amp } else { -noise_amp })
                .collect(),
        );
        assert_abs_diff_eq!(si_sdr(&r, &est).unwrap(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn scale_invariance_and_noise_monotonicity() {
        let n = 512;
        let r = wave(vec![0.5; n]);
        let noisy = |amp: f64| {
            wave(
                (0..n)
                    .map(|i| 0.5 + if i % 2 == 0 { amp } else { -amp })
                    .collect(),
            )
        };
        let a = si_sdr(&r, &noisy(0.01)).unwrap();
        let scaled = wave(noisy(0.01).samples.iter().map(|s| 7.5 * s).collect());
        assert_abs_diff_eq!(si_sdr(&r, &scaled).unwrap(), a, epsilon = 1e-9);
        let b = si_sdr(&r, &noisy(0.03)).unwrap();
        let c = si_sdr(&r, &noisy(0.3)).unwrap();
        assert!(a > b && b > c);
    }

    #[test]
    fn orthogonal_estimate_hits_the_floor() {
        let r = wave(vec![1.0, 1.0]);
        let e = wave(vec![1.0, -1.0]);
        assert_eq!(si_sdr(&r, &e).unwrap(), -SI_SDR_CAP_DB);
    }

    #[test]
    fn input_validation() {
        let r = random_wave(64, 2);
        let short = random_wave(32, 3);
        assert!(si_sdr(&r, &short).is_err());
        let zero = wave(vec![0.0; 64]);
        assert!(si_sdr(&zero, &r).is_err());
        let mut other_rate = random_wave(64, 4);
        other_rate.sample_rate = 8_000;
        assert!(si_sdr(&r, &other_rate).is_err());
    }

    #[test]
    fn report_arithmetic() {
        let clean = random_wave(300, 10);
        let mixture = wave(
            clean
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| s + 0.1 * ((i % 7) as f64 - 3.0))
                .collect(),
        );
        let enhanced = wave(
            clean
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| s + 0.01 * ((i % 5) as f64 - 2.0))
                .collect(),
        );

        let rep = evaluate(&clean, &mixture, &enhanced).unwrap();
        assert_eq!(rep.improvement_db, rep.si_sdr_db - rep.input_si_sdr_db);

        let same = evaluate(&clean, &mixture, &mixture).unwrap();
        assert_eq!(same.improvement_db, 0.0);

        let perfect = evaluate(&clean, &mixture, &clean).unwrap();
        assert_eq!(perfect.si_sdr_db, SI_SDR_CAP_DB);
        assert_eq!(
            perfect.improvement_db,
            SI_SDR_CAP_DB - perfect.input_si_sdr_db
        );
    }
}

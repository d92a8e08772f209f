use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::{rng, Error, Result};

/// Squared magnitude of one sample.
pub trait SamplePower: Copy {
    fn power(self) -> f64;
}

impl SamplePower for f64 {
    fn power(self) -> f64 {
        self * self
    }
}

impl SamplePower for Complex64 {
    fn power(self) -> f64 {
        self.norm_sqr()
    }
}

fn mean_power<T: SamplePower>(x: &[T]) -> f64 {
    x.iter().map(|v| v.power()).sum::<f64>() / x.len() as f64
}

/// `10·log10(P_reference / P_residual)` over the whole sequence.
/// Returns `+∞` when the residual is exactly zero.
pub fn measure_snr<T: SamplePower>(reference: &[T], residual: &[T]) -> Result<f64> {
    if reference.is_empty() || residual.is_empty() {
        return Err(Error::invalid("SNR of an empty signal"));
    }
    if reference.len() != residual.len() {
        return Err(Error::mismatch("residual length", reference.len(), residual.len()));
    }
    let p_ref = mean_power(reference);
    if p_ref <= 0.0 {
        return Err(Error::invalid("reference power is zero"));
    }
    let p_res = mean_power(residual);
    if p_res == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_ref / p_res).log10())
}

/// Unit-variance white Gaussian noise from the stream `(seed, "noise", channel)`.
pub fn white_noise(seed: u64, channel: usize, len: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, "noise", channel as u64);
    (0..len).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Gain that brings noise of power `noise_power` to `signal_power / 10^(snr_db/10)`.
pub fn noise_gain(signal_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    let target = signal_power / 10f64.powf(snr_db / 10.0);
    (target / noise_power).sqrt()
}

/// Adds white Gaussian noise to every channel at its requested SNR.
///
/// The noise realisation is rescaled so its empirical power is exactly
/// `P_signal / 10^(snr/10)`, making the achieved clip-level SNR exact.
/// Channel `n` draws from its own stream, independent of the channel count.
/// Returns the noisy channels and the per-channel SNRs (μ) that were applied.
pub fn mix_at_snr<S: AsRef<[f64]>>(
    clean: &[S],
    seed: u64,
    snr_db: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if clean.len() != snr_db.len() {
        return Err(Error::mismatch("SNR list length", clean.len(), snr_db.len()));
    }
    let mut noisy = Vec::with_capacity(clean.len());
    for (n, (ch, &snr)) in clean.iter().zip(snr_db).enumerate() {
        let ch = ch.as_ref();
        if ch.is_empty() {
            return Err(Error::invalid(format!("channel {n} is empty")));
        }
        if !snr.is_finite() {
            return Err(Error::invalid(format!("channel {n} has non-finite SNR {snr}")));
        }
        let p_signal = mean_power(ch);
        if p_signal <= 0.0 {
            return Err(Error::SilentChannel { channel: n });
        }
        let noise = white_noise(seed, n, ch.len());
        let g = noise_gain(p_signal, mean_power(&noise), snr);
        noisy.push(ch.iter().zip(&noise).map(|(s, v)| s + g * v).collect());
    }
    Ok((noisy, snr_db.to_vec()))
}

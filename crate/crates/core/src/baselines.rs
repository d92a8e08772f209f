//! Closed-form comparison systems: location-oracle delay-and-sum, the
//! max-SNR channel oracle, sparsemax channel weighting and channel swapping.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexSpectrogram, SpectrogramRole};
use crate::geometry::{Position, SensorLayout};
use crate::propagation::{bin_wavenumbers, greens, SceneMetadata};
use crate::{Error, Result};

/// Non-negative per-channel weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    w: Vec<f64>,
}

impl ChannelWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("channel weights are empty"));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("channel weights must be finite and non-negative"));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("channel weights sum to {s}, not 1")));
        }
        Ok(Self { w })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayAndSumOptions {
    /// Multiply each aligned channel by `4πr_n` before averaging.
    pub amplitude_compensation: bool,
}

impl Default for DelayAndSumOptions {
    fn default() -> Self {
        Self { amplitude_compensation: true }
    }
}

const SINC_TAPS: usize = 31;
const KAISER_BETA: f64 = 8.0;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = (x / 2.0).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc taps for a fractional offset `frac ∈ [0, 1)`;
/// tap `q` multiplies sample `⌊pos⌋ + q − 15`.
fn sinc_taps(frac: f64) -> [f64; SINC_TAPS] {
    let half = (SINC_TAPS / 2) as f64;
    let support = half + 1.0;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut taps = [0.0; SINC_TAPS];
    for (q, tap) in taps.iter_mut().enumerate() {
        let u = q as f64 - half - frac;
        let ratio = u / support;
        *tap = sinc(u) * bessel_i0(KAISER_BETA * (1.0 - ratio * ratio).max(0.0).sqrt()) / i0_beta;
    }
    taps
}

/// `out[m] += gain · x(m + delay)` by windowed-sinc interpolation; samples
/// outside `x` count as zero.
fn accumulate_delayed(out: &mut [f64], x: &[f64], delay: f64, gain: f64) {
    let whole = delay.floor();
    let taps = sinc_taps(delay - whole);
    let half = (SINC_TAPS / 2) as isize;
    let shift = whole as isize - half;
    for (m, o) in out.iter_mut().enumerate() {
        let start = m as isize + shift;
        let mut acc = 0.0;
        for (q, &t) in taps.iter().enumerate() {
            let i = start + q as isize;
            if i >= 0 && (i as usize) < x.len() {
                acc += x[i as usize] * t;
            }
        }
        *o += gain * acc;
    }
}

/// Advances each channel by its propagation delay `r_n / c` and averages.
///
/// The output is aligned with the emitted source signal and has the input
/// length.
pub fn delay_and_sum<S: AsRef<[f64]>>(
    channels: &[S],
    layout: &SensorLayout,
    source: &Position,
    c: f64,
    sample_rate: u32,
    opts: &DelayAndSumOptions,
) -> Result<Vec<f64>> {
    if channels.len() != layout.len() {
        return Err(Error::mismatch("channels", layout.len(), channels.len()));
    }
    if channels.is_empty() {
        return Err(Error::invalid("no channels to beamform"));
    }
    if !(c > 0.0 && c.is_finite()) || !source.is_finite() {
        return Err(Error::invalid("delay-and-sum needs c > 0 and a finite source position"));
    }
    let len = channels[0].as_ref().len();
    if channels.iter().any(|ch| ch.as_ref().len() != len) {
        return Err(Error::invalid("channels differ in length"));
    }
    let distances = layout.distances_to(source);
    if distances.iter().any(|&r| r <= 0.0) {
        return Err(Error::invalid("source coincides with a sensor"));
    }
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    for (ch, &r) in channels.iter().zip(&distances) {
        let gain = if opts.amplitude_compensation { 4.0 * PI * r } else { 1.0 };
        accumulate_delayed(&mut out, ch.as_ref(), r / c * fs, gain);
    }
    let n = channels.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Delay-and-sum carried out per STFT bin: each channel is multiplied by
/// `e^{-ik r_n}` (and `4πr_n` when compensating) and the channels averaged.
/// Exactly undoes per-bin propagation. Returns one channel.
pub fn delay_and_sum_spectral(
    y: &ComplexSpectrogram,
    layout: &SensorLayout,
    source: &Position,
    c: f64,
    opts: &DelayAndSumOptions,
) -> Result<ComplexSpectrogram> {
    let (n, bins, frames) = y.dim();
    if n != layout.len() {
        return Err(Error::mismatch("channels", layout.len(), n));
    }
    let ks = bin_wavenumbers(y.params(), c)?;
    let distances = layout.distances_to(source);
    let mut out = Array3::zeros((1, bins, frames));
    for (ch, &r) in y.data().outer_iter().zip(&distances) {
        let g = greens(0.0, r)?;
        for (f, &k) in ks.iter().enumerate() {
            let w = if opts.amplitude_compensation {
                Complex64::from_polar(1.0 / g.re, -k * r)
            } else {
                Complex64::from_polar(1.0, -k * r)
            } / n as f64;
            for t in 0..frames {
                out[[0, f, t]] += w * ch[[f, t]];
            }
        }
    }
    Ok(ComplexSpectrogram::from_parts(out, *y.params(), SpectrogramRole::Inpainted))
}

/// `argmax_n μ_n`, lowest index on ties.
pub fn max_snr_channel(mu: &[f64]) -> Option<usize> {
    crate::rtm::argmax(mu)
}

/// The channel with the highest recorded SNR.
pub fn max_snr_select<S: AsRef<[f64]>>(y: &[S], meta: &SceneMetadata) -> Result<Vec<f64>> {
    if meta.mu.len() != y.len() {
        return Err(Error::Data(format!(
            "metadata lists SNRs for {} channels, signal has {}",
            meta.mu.len(),
            y.len()
        )));
    }
    let n = max_snr_channel(&meta.mu).ok_or_else(|| Error::Data("metadata has no SNRs".into()))?;
    Ok(y[n].as_ref().to_vec())
}

/// Euclidean projection of `scale · scores` onto the probability simplex.
pub fn scaling_sparsemax(scores: &[f64], scale: f64) -> Result<ChannelWeights> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("sparsemax scale must be positive, got {scale}")));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("sparsemax needs finite scores"));
    }
    let z: Vec<f64> = scores.iter().map(|s| s * scale).collect();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = 0.0;
    let mut k = 0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        if 1.0 + (i + 1) as f64 * v > cumsum {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / k as f64;
    let mut w: Vec<f64> = z.iter().map(|v| (v - tau).max(0.0)).collect();
    // remove the last few ulps of drift so the invariant holds to rounding
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    ChannelWeights::new(w)
}

/// Reorders channels by a uniform random permutation. Returns the shuffled
/// channels and the permutation (`out[i] = batch[perm[i]]`).
pub fn channel_swap<T: Clone, R: Rng + ?Sized>(batch: &[T], rng: &mut R) -> (Vec<T>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..batch.len()).collect();
    perm.shuffle(rng);
    (perm.iter().map(|&i| batch[i].clone()).collect(), perm)
}

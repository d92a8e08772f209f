use ndarray::{Array2, Array3, Axis};

use super::{ComplexSpectrogram, StftParams};
use crate::{Error, Result};

/// Power floor applied before `log10`.
pub const POWER_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `K × F` non-negative triangular filter weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    f_low: f64,
    f_high: f64,
}

impl MelFilterbank {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn band(&self) -> (f64, f64) {
        (self.f_low, self.f_high)
    }
}

/// `K` unit-peak triangles with centres evenly spaced on the mel scale over
/// `[f_low, f_high]`, evaluated at the FFT bin frequencies.
///
/// A triangle narrower than the bin spacing can fall between bins; such a
/// filter collapses onto the bin nearest its centre so that no row is empty.
pub fn mel_filterbank(params: &StftParams, k: usize, f_low: f64, f_high: f64) -> Result<MelFilterbank> {
    let nyquist = params.sample_rate as f64 / 2.0;
    if k == 0 {
        return Err(Error::invalid("need at least one mel band"));
    }
    if !(0.0 <= f_low && f_low < f_high && f_high <= nyquist) {
        return Err(Error::invalid(format!(
            "mel band [{f_low}, {f_high}] Hz must satisfy 0 ≤ low < high ≤ {nyquist}"
        )));
    }
    let (m_lo, m_hi) = (hz_to_mel(f_low), hz_to_mel(f_high));
    let mut edges: Vec<f64> = (0..k + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (k + 1) as f64))
        .collect();
    edges[0] = f_low;
    edges[k + 1] = f_high;
    let freqs = params.bin_frequencies();
    let mut weights = Array2::zeros((k, freqs.len()));
    for (band, mut row) in weights.outer_iter_mut().enumerate() {
        let (lo, mid, hi) = (edges[band], edges[band + 1], edges[band + 2]);
        for (w, &f) in row.iter_mut().zip(&freqs) {
            *w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
        if row.iter().all(|&w| w == 0.0) {
            let spacing = params.sample_rate as f64 / params.fft_size as f64;
            let nearest = ((mid / spacing).round() as usize).min(freqs.len() - 1);
            row[nearest] = 1.0;
        }
    }
    Ok(MelFilterbank { weights, f_low, f_high })
}

/// `C × K × T` log10 mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFeature {
    data: Array3<f64>,
}

impl LogMelFeature {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("log-mel feature has non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// `(channels, mels, frames)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// `E[c][k][t] = log10(max(Σ_f A[k][f]·|X[c][f][t]|², POWER_FLOOR))`.
pub fn log_mel(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<LogMelFeature> {
    let (channels, bins, frames) = spec.dim();
    if bins != fb.n_bins() {
        return Err(Error::mismatch("filterbank bins", bins, fb.n_bins()));
    }
    let mut out = Array3::zeros((channels, fb.n_mels(), frames));
    for (ch, mut dst) in spec.data().outer_iter().zip(out.outer_iter_mut()) {
        let power = ch.mapv(|z| z.norm_sqr());
        let mel = fb.weights().dot(&power);
        dst.assign(&mel.mapv(|p| p.max(POWER_FLOOR).log10()));
    }
    debug_assert_eq!(out.len_of(Axis(0)), channels);
    Ok(LogMelFeature { data: out })
}

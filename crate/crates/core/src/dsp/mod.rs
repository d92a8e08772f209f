//! Time–frequency analysis, mel features and SNR utilities.
//!
//! Spectra use the time-harmonic `e^{-iωt}` convention: the analysis
//! transform is `X(ω) = Σ x[m] e^{+iωm}`, so multiplying a bin by `e^{+ikr}`
//! delays the signal by `r/c`. This is the convention under which the
//! free-space Green's function `e^{ikr}/(4πr)` describes outgoing waves.

mod mel;
mod snr;
mod stft;

pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, LogMelFeature, MelFilterbank, POWER_FLOOR};
pub use snr::{measure_snr, mix_at_snr, noise_gain, white_noise, SamplePower};
pub use stft::{istft, stft, stft_channels};

use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann.
    Hann,
}

impl Window {
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len)
                .map(|m| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * m as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Framing parameters. Defaults: 16 kHz, 25 ms Hann window, 10 ms hop,
/// 512-point FFT (257 bins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftParams {
    pub sample_rate: u32,
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_length: 400,
            hop: 160,
            fft_size: 512,
            window: Window::Hann,
        }
    }
}

impl StftParams {
    /// Checks framing consistency and that the squared window overlap-adds
    /// to a sum bounded away from zero, which is what weighted overlap-add
    /// synthesis needs for perfect reconstruction.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if self.hop == 0 || self.hop > self.window_length || self.window_length > self.fft_size {
            return Err(Error::invalid(format!(
                "need 0 < hop ≤ window_length ≤ fft_size, got hop {} window {} fft {}",
                self.hop, self.window_length, self.fft_size
            )));
        }
        if self.fft_size % 2 != 0 {
            return Err(Error::invalid("fft_size must be even"));
        }
        let w = self.window.coefficients(self.window_length);
        let mut overlap = vec![0.0; self.hop];
        for (m, v) in w.iter().enumerate() {
            overlap[m % self.hop] += v * v;
        }
        let (lo, hi) = overlap
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo < 1e-3 * hi {
            return Err(Error::invalid(format!(
                "window of {} samples at hop {} leaves near-zero overlap gain",
                self.window_length, self.hop
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a signal of `len` samples (no padding).
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.hop + 1
        }
    }

    /// Samples covered by `frames` frames.
    pub fn covered_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_length
        }
    }

    /// Physical frequency of bin `f`, Hz.
    pub fn bin_frequency(&self, f: usize) -> f64 {
        f as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|f| self.bin_frequency(f)).collect()
    }
}

/// What a spectrogram tensor holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrogramRole {
    Observed,
    Clean,
    Inpainted,
    Image,
    Noise,
}

impl SpectrogramRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrogramRole::Observed => "observed",
            SpectrogramRole::Clean => "clean",
            SpectrogramRole::Inpainted => "inpainted",
            SpectrogramRole::Image => "image",
            SpectrogramRole::Noise => "noise",
        }
    }
}

/// `C × F × T` complex tensor; `C` is channels, or grid points for an image.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Array3<Complex64>,
    params: StftParams,
    role: SpectrogramRole,
}

impl ComplexSpectrogram {
    pub fn new(data: Array3<Complex64>, params: StftParams, role: SpectrogramRole) -> Result<Self> {
        let (_, f, _) = data.dim();
        if f != params.n_bins() {
            return Err(Error::mismatch("frequency bins", params.n_bins(), f));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("spectrogram has non-finite entries"));
        }
        Ok(Self { data, params, role })
    }

    pub(crate) fn from_parts(data: Array3<Complex64>, params: StftParams, role: SpectrogramRole) -> Self {
        debug_assert_eq!(data.dim().1, params.n_bins());
        Self { data, params, role }
    }

    pub fn zeros(channels: usize, frames: usize, params: StftParams, role: SpectrogramRole) -> Self {
        Self::from_parts(Array3::zeros((channels, params.n_bins(), frames)), params, role)
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn role(&self) -> SpectrogramRole {
        self.role
    }

    pub fn with_role(mut self, role: SpectrogramRole) -> Self {
        self.role = role;
        self
    }

    /// `(channels, bins, frames)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), c)
    }

    /// Channel `c` flattened in `(f, t)` order.
    pub fn channel_vec(&self, c: usize) -> Vec<Complex64> {
        self.channel(c).iter().copied().collect()
    }

    /// Σ |X|² per channel.
    pub fn channel_powers(&self) -> Vec<f64> {
        self.data
            .outer_iter()
            .map(|ch| ch.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// Keeps only channels in `order`, in that order.
    pub fn select_channels(&self, order: &[usize]) -> Result<Self> {
        if let Some(&bad) = order.iter().find(|&&c| c >= self.channels()) {
            return Err(Error::invalid(format!("channel {bad} out of range")));
        }
        Ok(Self::from_parts(self.data.select(Axis(0), order), self.params, self.role))
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.params != other.params {
            return Err(Error::invalid("spectrograms use different STFT parameters"));
        }
        if self.dim() != other.dim() {
            return Err(Error::mismatch("spectrogram shape", format!("{:?}", self.dim()), format!("{:?}", other.dim())));
        }
        Ok(())
    }

    /// Elementwise `self − other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_parts(&self.data - &other.data, self.params, self.role))
    }

    /// Elementwise `self + other`.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_parts(&self.data + &other.data, self.params, self.role))
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self::from_parts(self.data.mapv(|z| z * a), self.params, self.role)
    }
}

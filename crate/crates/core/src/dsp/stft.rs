use std::sync::Arc;

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{ComplexSpectrogram, SpectrogramRole, StftParams};
use crate::{Error, Result};

/// Single-channel STFT; the result has one channel.
pub fn stft(signal: &[f64], params: &StftParams) -> Result<ComplexSpectrogram> {
    stft_channels(&[signal], params, SpectrogramRole::Observed)
}

/// STFT of every channel. All channels must have the same length.
pub fn stft_channels<S: AsRef<[f64]> + Sync>(
    channels: &[S],
    params: &StftParams,
    role: SpectrogramRole,
) -> Result<ComplexSpectrogram> {
    params.validate()?;
    let len = channels.first().map(|c| c.as_ref().len()).unwrap_or(0);
    if channels.iter().any(|c| c.as_ref().len() != len) {
        return Err(Error::invalid("channels differ in length"));
    }
    if len < params.window_length {
        return Err(Error::invalid(format!(
            "signal of {len} samples is shorter than the {}-sample window",
            params.window_length
        )));
    }
    let frames = params.n_frames(len);
    // FFT direction "inverse" computes Σ x e^{+iωm}; see the module docs.
    let fft = FftPlanner::new().plan_fft_inverse(params.fft_size);
    let window = params.window.coefficients(params.window_length);
    let per_channel: Vec<Array2<Complex64>> = channels
        .par_iter()
        .map(|c| analyse(c.as_ref(), params, frames, &window, &fft))
        .collect();
    let mut data = Array3::zeros((channels.len(), params.n_bins(), frames));
    for (c, spec) in per_channel.into_iter().enumerate() {
        data.slice_mut(s![c, .., ..]).assign(&spec);
    }
    Ok(ComplexSpectrogram::from_parts(data, *params, role))
}

fn analyse(
    x: &[f64],
    params: &StftParams,
    frames: usize,
    window: &[f64],
    fft: &Arc<dyn Fft<f64>>,
) -> Array2<Complex64> {
    let bins = params.n_bins();
    let mut out = Array2::zeros((bins, frames));
    let mut buf = vec![Complex64::default(); params.fft_size];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for t in 0..frames {
        let start = t * params.hop;
        buf.fill(Complex64::default());
        for (m, (b, w)) in buf.iter_mut().zip(window).enumerate() {
            b.re = x[start + m] * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for f in 0..bins {
            out[[f, t]] = buf[f];
        }
    }
    out
}

/// Weighted overlap-add inverse of [`stft`], one output signal per channel.
///
/// Each frame is windowed again and the sum is divided by the overlap-added
/// squared window, which inverts the analysis exactly wherever that sum is
/// non-negligible. `length` pads or truncates the output; by default it is the
/// span covered by the frames.
pub fn istft(
    spec: &ComplexSpectrogram,
    params: &StftParams,
    length: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    if spec.params() != params {
        return Err(Error::invalid("spectrogram was produced with different STFT parameters"));
    }
    params.validate()?;
    let (channels, bins, frames) = spec.dim();
    debug_assert_eq!(bins, params.n_bins());
    let covered = params.covered_len(frames);
    let out_len = length.unwrap_or(covered);
    let window = params.window.coefficients(params.window_length);

    let mut norm = vec![0.0; covered];
    for t in 0..frames {
        for (m, w) in window.iter().enumerate() {
            norm[t * params.hop + m] += w * w;
        }
    }
    let peak = norm.iter().copied().fold(0.0, f64::max);
    // same bound the parameter check demands of the interior; below it the
    // division would amplify whatever inconsistency the spectrogram carries
    let floor = 1e-3 * peak;

    let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
    let scale = 1.0 / params.fft_size as f64;
    let out = (0..channels)
        .into_par_iter()
        .map(|c| {
            let ch = spec.channel(c);
            let mut acc = vec![0.0; covered];
            let mut buf = vec![Complex64::default(); params.fft_size];
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            for t in 0..frames {
                for f in 0..bins {
                    buf[f] = ch[[f, t]];
                }
                for f in 1..params.fft_size - bins + 1 {
                    buf[params.fft_size - f] = ch[[f, t]].conj();
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                let start = t * params.hop;
                for (m, w) in window.iter().enumerate() {
                    acc[start + m] += w * buf[m].re * scale;
                }
            }
            let mut y: Vec<f64> = acc
                .iter()
                .zip(&norm)
                .map(|(a, n)| if *n > floor { a / n } else { 0.0 })
                .collect();
            y.resize(out_len, 0.0);
            y
        })
        .collect();
    Ok(out)
}

//! Fixtures shared by the benchmarks.

use dmas_core::dsp::{stft_channels, ComplexSpectrogram, SpectrogramRole, StftParams};
use dmas_core::geometry::make_layout;
use dmas_core::{Extent, ImagingGrid, LayoutKind, SensorLayout};

/// A circular layout, a square grid and a one-second multichannel chirp.
pub struct Fixture {
    pub layout: SensorLayout,
    pub grid: ImagingGrid,
    pub params: StftParams,
    pub signal: Vec<Vec<f64>>,
    pub spectrogram: ComplexSpectrogram,
}

impl Fixture {
    pub fn new(channels: usize, grid_spacing: f64) -> Self {
        let kind = LayoutKind::Circular;
        let layout = make_layout(kind, channels, 1.0, kind.default_anchor()).expect("layout");
        let grid = ImagingGrid::new(Extent::default(), grid_spacing).expect("grid");
        let params = StftParams::default();
        let fs = params.sample_rate as f64;
        let signal: Vec<Vec<f64>> = (0..channels)
            .map(|c| {
                (0..params.sample_rate as usize)
                    .map(|i| {
                        let t = i as f64 / fs;
                        (2.0 * std::f64::consts::PI * (200.0 + 1500.0 * t) * t + c as f64).sin()
                    })
                    .collect()
            })
            .collect();
        let spectrogram = stft_channels(&signal, &params, SpectrogramRole::Observed).expect("stft");
        Self { layout, grid, params, signal, spectrogram }
    }
}

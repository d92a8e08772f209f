//! Free-space propagation: the Green's-function operator, clean scene
//! synthesis and channel degradation.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, ComplexSpectrogram, SpectrogramRole, StftParams};
use crate::geometry::{distance_matrix, ImagingGrid, LayoutKind, Position, SensorLayout};
use crate::io::tensor;
use crate::{rng, Error, Result};

/// Default operator memory budget: 2 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

/// `k = 2πf / c`, rad/m.
pub fn wavenumber(f_hz: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("speed of sound must be positive, got {c}")));
    }
    if !(f_hz >= 0.0 && f_hz.is_finite()) {
        return Err(Error::invalid(format!("frequency must be non-negative, got {f_hz}")));
    }
    Ok(2.0 * PI * f_hz / c)
}

/// 3D free-space Green's function `e^{ikr} / (4πr)`.
///
/// Rejects `r ≤ 0`; callers clamp distances to their singularity guard first.
pub fn greens(k: f64, r: f64) -> Result<Complex64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("Green's function needs r > 0, got {r}")));
    }
    Ok(greens_kernel(k, r))
}

#[inline]
pub(crate) fn greens_kernel(k: f64, r: f64) -> Complex64 {
    let (s, c) = (k * r).sin_cos();
    let a = 1.0 / (4.0 * PI * r);
    Complex64::new(a * c, a * s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGeometry {
    pub layout: SensorLayout,
    pub grid: ImagingGrid,
    pub params: StftParams,
    pub speed_of_sound: f64,
}

/// `F × N × J` Green's-function values, frequency-major so each per-bin
/// `N × J` slice is contiguous.
#[derive(Debug, Clone)]
pub struct PropagationOperator {
    data: Array3<Complex64>,
    geometry: Option<Arc<OperatorGeometry>>,
}

impl PropagationOperator {
    /// Wraps an arbitrary `F × N × J` tensor with no geometry attached.
    pub fn from_tensor(data: Array3<Complex64>) -> Result<Self> {
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        Ok(Self { data, geometry: None })
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    /// `(F, N, J)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn n_bins(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_points(&self) -> usize {
        self.data.dim().2
    }

    /// The `N × J` slice at bin `f`.
    pub fn slice(&self, f: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), f)
    }

    pub fn geometry(&self) -> Option<&OperatorGeometry> {
        self.geometry.as_deref()
    }

    /// Same operator with sensors reordered (`new[n] = old[order[n]]`).
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        crate::geometry::check_permutation(order, self.n_channels())?;
        let geometry = match &self.geometry {
            Some(g) => Some(Arc::new(OperatorGeometry {
                layout: g.layout.permuted(order)?,
                ..(**g).clone()
            })),
            None => None,
        };
        Ok(Self { data: self.data.select(Axis(1), order), geometry })
    }

    /// Writes the operator with a header recording the layout and grid
    /// fingerprints, STFT parameters and speed of sound.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let g = self
            .geometry()
            .ok_or_else(|| Error::invalid("only geometry-backed operators can be cached"))?;
        let meta = cache_meta(&g.layout, &g.grid, &g.params, g.speed_of_sound)?;
        let meta: Vec<(&str, String)> = meta.iter().map(|(k, v)| (*k, v.clone())).collect();
        tensor::write(path, &self.data.clone().into_dyn(), &["freq", "channel", "grid"], &meta)
    }

    /// Loads a cached operator, refusing it unless it was built for exactly
    /// this layout, grid, STFT parameters and speed of sound.
    pub fn load(
        path: impl AsRef<Path>,
        layout: &SensorLayout,
        grid: &ImagingGrid,
        params: &StftParams,
        c: f64,
    ) -> Result<Self> {
        let path = path.as_ref();
        let header = tensor::read_header(path)?;
        for (k, v) in cache_meta(layout, grid, params, c)? {
            if header.get(k) != Some(v.as_str()) {
                return Err(Error::Data(format!(
                    "{}: cached operator has {k} = {:?}, expected {v}",
                    path.display(),
                    header.get(k)
                )));
            }
        }
        let (data, _) = tensor::read::<Complex64, _>(path)?;
        let data = data
            .into_dimensionality()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let expect = (params.n_bins(), layout.len(), grid.len());
        let got: (usize, usize, usize) = ndarray::Array3::dim(&data);
        if got != expect {
            return Err(Error::mismatch("cached operator shape", format!("{expect:?}"), format!("{got:?}")));
        }
        Ok(Self {
            data,
            geometry: Some(Arc::new(OperatorGeometry {
                layout: layout.clone(),
                grid: grid.clone(),
                params: *params,
                speed_of_sound: c,
            })),
        })
    }
}

fn cache_meta(
    layout: &SensorLayout,
    grid: &ImagingGrid,
    params: &StftParams,
    c: f64,
) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        ("layout_hash", layout.fingerprint()),
        ("grid_hash", grid.fingerprint()),
        ("stft", serde_json::to_string(params)?),
        ("speed_of_sound", format!("{c:?}")),
    ])
}

/// Anything that can hand out the per-bin `N × J` operator slices.
///
/// Implemented by the materialised [`PropagationOperator`] and by
/// [`LazyOperator`], which recomputes each slice from the distance matrix so
/// the full tensor never has to fit in memory.
pub trait OperatorSlices: Sync {
    fn n_bins(&self) -> usize;
    fn n_channels(&self) -> usize;
    fn n_points(&self) -> usize;
    fn with_slice<R>(&self, f: usize, g: impl FnOnce(ArrayView2<'_, Complex64>) -> R) -> R;
}

impl OperatorSlices for PropagationOperator {
    fn n_bins(&self) -> usize {
        self.data.dim().0
    }
    fn n_channels(&self) -> usize {
        self.data.dim().1
    }
    fn n_points(&self) -> usize {
        self.data.dim().2
    }
    fn with_slice<R>(&self, f: usize, g: impl FnOnce(ArrayView2<'_, Complex64>) -> R) -> R {
        g(self.slice(f))
    }
}

/// Operator slices computed on demand from geometry.
#[derive(Debug, Clone)]
pub struct LazyOperator {
    distances: Array2<f64>,
    wavenumbers: Vec<f64>,
}

impl LazyOperator {
    pub fn new(layout: &SensorLayout, grid: &ImagingGrid, params: &StftParams, c: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            distances: distance_matrix(layout, grid).values().clone(),
            wavenumbers: bin_wavenumbers(params, c)?,
        })
    }

    /// Same operator with sensors reordered (`new[n] = old[order[n]]`).
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        crate::geometry::check_permutation(order, self.distances.nrows())?;
        Ok(Self { distances: self.distances.select(Axis(0), order), wavenumbers: self.wavenumbers.clone() })
    }

    /// Materialises the full tensor, subject to `budget_bytes`.
    pub fn materialize(&self, budget_bytes: u64) -> Result<PropagationOperator> {
        let (n, j) = self.distances.dim();
        let f = self.wavenumbers.len();
        let required = operator_bytes(f, n, j);
        if required > budget_bytes {
            return Err(Error::MemoryBudget { what: "propagation operator", required_bytes: required, budget_bytes });
        }
        let mut data = Array3::zeros((f, n, j));
        for (mut slice, &k) in data.outer_iter_mut().zip(&self.wavenumbers) {
            slice.assign(&operator_slice(k, &self.distances));
        }
        PropagationOperator::from_tensor(data)
    }
}

impl OperatorSlices for LazyOperator {
    fn n_bins(&self) -> usize {
        self.wavenumbers.len()
    }
    fn n_channels(&self) -> usize {
        self.distances.nrows()
    }
    fn n_points(&self) -> usize {
        self.distances.ncols()
    }
    fn with_slice<R>(&self, f: usize, g: impl FnOnce(ArrayView2<'_, Complex64>) -> R) -> R {
        let slice = operator_slice(self.wavenumbers[f], &self.distances);
        g(slice.view())
    }
}

/// Bytes an `F × N × J` complex operator occupies.
pub fn operator_bytes(bins: usize, channels: usize, points: usize) -> u64 {
    (bins as u64) * (channels as u64) * (points as u64) * std::mem::size_of::<Complex64>() as u64
}

/// Builds `L[f][n][j] = greens(k_f, r[n][j])` under the default memory budget.
pub fn build_operator(
    layout: &SensorLayout,
    grid: &ImagingGrid,
    params: &StftParams,
    c: f64,
) -> Result<PropagationOperator> {
    build_operator_with_budget(layout, grid, params, c, DEFAULT_MEMORY_BUDGET)
}

pub fn build_operator_with_budget(
    layout: &SensorLayout,
    grid: &ImagingGrid,
    params: &StftParams,
    c: f64,
    budget_bytes: u64,
) -> Result<PropagationOperator> {
    params.validate()?;
    let wavenumbers = bin_wavenumbers(params, c)?;
    let required = operator_bytes(wavenumbers.len(), layout.len(), grid.len());
    if required > budget_bytes {
        return Err(Error::MemoryBudget {
            what: "propagation operator",
            required_bytes: required,
            budget_bytes,
        });
    }
    let r = distance_matrix(layout, grid);
    let mut data = Array3::zeros((wavenumbers.len(), layout.len(), grid.len()));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(wavenumbers.par_iter())
        .for_each(|(mut slice, &k)| {
            for (dst, &rr) in slice.iter_mut().zip(r.values().iter()) {
                *dst = greens_kernel(k, rr);
            }
        });
    Ok(PropagationOperator {
        data,
        geometry: Some(Arc::new(OperatorGeometry {
            layout: layout.clone(),
            grid: grid.clone(),
            params: *params,
            speed_of_sound: c,
        })),
    })
}

/// Wavenumber of every STFT bin.
pub fn bin_wavenumbers(params: &StftParams, c: f64) -> Result<Vec<f64>> {
    params
        .bin_frequencies()
        .into_iter()
        .map(|f| wavenumber(f, c))
        .collect()
}

/// How clean channel signals are synthesised from the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    /// Multiply each STFT bin of the source by the Green's function at the
    /// bin frequency. Exactly the forward model that back-projection inverts.
    #[default]
    PerBin,
    /// Filter the whole zero-padded signal in one long FFT: an exact
    /// fractional delay with spherical attenuation.
    FullSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneOptions {
    pub mode: SynthesisMode,
    /// Apply the `1/(4πr)` spreading loss; off leaves pure delays.
    pub attenuation: bool,
    /// Closest a source may sit to any sensor, metres.
    pub min_distance: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            mode: SynthesisMode::PerBin,
            attenuation: true,
            min_distance: 0.5,
        }
    }
}

/// Noise-free multichannel observation of one point source.
#[derive(Debug, Clone)]
pub struct CleanScene {
    pub samples: Vec<Vec<f64>>,
    pub spectrogram: ComplexSpectrogram,
    pub source_position: Position,
    pub source_distances: Vec<f64>,
    pub layout_kind: LayoutKind,
}

impl CleanScene {
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }
}

/// Propagates a mono source to every sensor of `layout`.
///
/// The source is zero-padded by the largest propagation delay, so every
/// channel has `source.len() + ⌈max_r/c · fs⌉` samples.
pub fn simulate_scene(
    source: &[f64],
    source_pos: Position,
    layout: &SensorLayout,
    params: &StftParams,
    c: f64,
    opts: &SceneOptions,
) -> Result<CleanScene> {
    params.validate()?;
    if source.is_empty() {
        return Err(Error::invalid("source signal is empty"));
    }
    if !source_pos.is_finite() {
        return Err(Error::invalid("source position must be finite"));
    }
    wavenumber(0.0, c)?;
    let distances = layout.distances_to(&source_pos);
    if let Some((n, d)) = distances
        .iter()
        .enumerate()
        .find(|(_, &d)| d < opts.min_distance)
    {
        return Err(Error::invalid(format!(
            "source is {d:.3} m from sensor {n}, closer than {} m",
            opts.min_distance
        )));
    }
    let fs = params.sample_rate as f64;
    let max_r = distances.iter().copied().fold(0.0, f64::max);
    let pad = (max_r / c * fs).ceil() as usize;
    let mut padded = source.to_vec();
    padded.resize((source.len() + pad).max(params.window_length), 0.0);
    let len = padded.len();

    let response = |k: f64, r: f64| {
        if opts.attenuation {
            greens_kernel(k, r)
        } else {
            Complex64::from_polar(1.0, k * r)
        }
    };

    let (samples, spectrogram) = match opts.mode {
        SynthesisMode::PerBin => {
            let src = dsp::stft(&padded, params)?;
            let ks = bin_wavenumbers(params, c)?;
            let (_, bins, frames) = src.dim();
            let s0 = src.channel(0);
            let mut data = Array3::zeros((layout.len(), bins, frames));
            for (n, mut ch) in data.outer_iter_mut().enumerate() {
                for (f, &k) in ks.iter().enumerate() {
                    let g = response(k, distances[n]);
                    ch.slice_mut(s![f, ..]).zip_mut_with(&s0.slice(s![f, ..]), |d, &x| *d = g * x);
                }
            }
            let spec = ComplexSpectrogram::from_parts(data, *params, SpectrogramRole::Clean);
            let samples = dsp::istft(&spec, params, Some(len))?;
            (samples, spec)
        }
        SynthesisMode::FullSpectrum => {
            let samples = full_spectrum_filter(&padded, &distances, fs, c, response);
            let spec = dsp::stft_channels(&samples, params, SpectrogramRole::Clean)?;
            (samples, spec)
        }
    };
    Ok(CleanScene {
        samples,
        spectrogram,
        source_position: source_pos,
        source_distances: distances,
        layout_kind: layout.kind(),
    })
}

fn full_spectrum_filter(
    x: &[f64],
    distances: &[f64],
    fs: f64,
    c: f64,
    response: impl Fn(f64, f64) -> Complex64 + Sync,
) -> Vec<Vec<f64>> {
    // guard band so the sinc tails of fractional delays do not wrap onto the signal
    let n_fft = (x.len() + 1024).next_power_of_two();
    let mut planner = FftPlanner::new();
    let analysis = planner.plan_fft_inverse(n_fft);
    let synthesis = planner.plan_fft_forward(n_fft);
    let mut spectrum: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    spectrum.resize(n_fft, Complex64::default());
    analysis.process(&mut spectrum);
    let half = n_fft / 2;
    distances
        .par_iter()
        .map(|&r| {
            let mut buf = vec![Complex64::default(); n_fft];
            for q in 0..=half {
                let k = 2.0 * PI * (q as f64 * fs / n_fft as f64) / c;
                buf[q] = spectrum[q] * response(k, r);
            }
            for q in 1..half {
                buf[n_fft - q] = buf[q].conj();
            }
            synthesis.process(&mut buf);
            buf[..x.len()].iter().map(|z| z.re / n_fft as f64).collect()
        })
        .collect()
}

/// Ground truth and degradation record for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    #[serde(default)]
    pub clip_id: String,
    #[serde(default)]
    pub class_label: Option<usize>,
    pub layout_kind: LayoutKind,
    pub source_position: Position,
    /// Per-channel SNR μ_n in dB.
    pub mu: Vec<f64>,
    /// Degradation threshold τ in dB.
    pub tau: f64,
    /// Channels with μ_n < τ (0-based).
    pub degraded: Vec<usize>,
    /// All other channels.
    pub reliable: Vec<usize>,
    /// Seed the scene noise was drawn from.
    pub seed: u64,
}

impl SceneMetadata {
    pub fn n_channels(&self) -> usize {
        self.mu.len()
    }

    /// Splits channels by `μ_n < τ`.
    pub fn partition(mu: &[f64], tau: f64) -> (Vec<usize>, Vec<usize>) {
        (0..mu.len()).partition(|&n| mu[n] < tau)
    }

    pub fn validate(&self) -> Result<()> {
        let d: BTreeSet<_> = self.degraded.iter().collect();
        let r: BTreeSet<_> = self.reliable.iter().collect();
        let all: BTreeSet<_> = (0..self.mu.len()).collect();
        let union: BTreeSet<_> = d.union(&r).copied().copied().collect();
        if d.len() != self.degraded.len() || r.len() != self.reliable.len() || !d.is_disjoint(&r) || union != all {
            return Err(Error::Data("degraded and reliable sets do not partition the channels".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    pub snr_low: f64,
    pub snr_high: f64,
    pub tau: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            snr_low: -30.0,
            snr_high: 0.0,
            tau: -15.0,
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_low.is_finite() && self.snr_high.is_finite() && self.tau.is_finite()) {
            return Err(Error::invalid("SNR range and τ must be finite"));
        }
        if self.snr_low > self.snr_high {
            return Err(Error::invalid(format!(
                "SNR range [{}, {}] is empty",
                self.snr_low, self.snr_high
            )));
        }
        Ok(())
    }
}

/// Degraded observation `Y = X* + η` and the noise that was added.
#[derive(Debug, Clone)]
pub struct DegradedScene {
    pub samples: Vec<Vec<f64>>,
    pub spectrogram: ComplexSpectrogram,
    pub noise: ComplexSpectrogram,
}

/// Adds white Gaussian noise to each channel at `μ_n ~ U[snr_low, snr_high]`.
///
/// μ_n and the noise on channel `n` come from streams keyed by `(seed, n)`.
/// The SNR is set over the whole clip in the STFT domain, where the
/// observation model `Y = X* + η` is stated. The time-domain samples receive
/// the same noise realisation, scaled so the audio also sits at μ_n.
pub fn degrade(clean: &CleanScene, seed: u64, cfg: &DegradeConfig) -> Result<(DegradedScene, SceneMetadata)> {
    cfg.validate()?;
    let params = *clean.spectrogram.params();
    let len = clean.samples.first().map(Vec::len).unwrap_or(0);
    let mu: Vec<f64> = (0..clean.n_channels())
        .map(|n| {
            let mut r = rng::stream(seed, "mu", n as u64);
            if cfg.snr_low == cfg.snr_high {
                cfg.snr_low
            } else {
                r.random_range(cfg.snr_low..cfg.snr_high)
            }
        })
        .collect();
    let raw_noise: Vec<Vec<f64>> = (0..clean.n_channels())
        .into_par_iter()
        .map(|n| dsp::white_noise(seed, n, len))
        .collect();
    let noise_spec = dsp::stft_channels(&raw_noise, &params, SpectrogramRole::Noise)?;
    let signal_power = clean.spectrogram.channel_powers();
    let noise_power = noise_spec.channel_powers();

    let mut gains = Vec::with_capacity(mu.len());
    for n in 0..mu.len() {
        if signal_power[n] <= 0.0 {
            return Err(Error::SilentChannel { channel: n });
        }
        gains.push(dsp::noise_gain(signal_power[n], noise_power[n], mu[n]));
    }
    let mut noise = noise_spec;
    for (mut ch, &g) in noise.data_mut().outer_iter_mut().zip(&gains) {
        ch.mapv_inplace(|z| z * g);
    }
    let observed = clean.spectrogram.sum(&noise)?.with_role(SpectrogramRole::Observed);
    // Per-bin synthesis is not a consistent STFT, so its time rendering can
    // carry a different power; the audio gets its own gain to hit μ as well.
    let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let samples = clean
        .samples
        .iter()
        .zip(&raw_noise)
        .zip(gains.iter().zip(&mu))
        .map(|((x, v), (&g, &m))| {
            let (px, pv) = (power(x), power(v));
            let g = if px > 0.0 && pv > 0.0 { dsp::noise_gain(px, pv, m) } else { g };
            x.iter().zip(v).map(|(a, b)| a + g * b).collect()
        })
        .collect();
    let (degraded, reliable) = SceneMetadata::partition(&mu, cfg.tau);
    let meta = SceneMetadata {
        clip_id: String::new(),
        class_label: None,
        layout_kind: clean.layout_kind,
        source_position: clean.source_position,
        mu,
        tau: cfg.tau,
        degraded,
        reliable,
        seed,
    };
    Ok((DegradedScene { samples, spectrogram: observed, noise }, meta))
}

/// Reference `N × J` Green's slice at a single wavenumber, for small checks.
pub fn operator_slice(k: f64, r: &Array2<f64>) -> Array2<Complex64> {
    r.mapv(|rr| greens_kernel(k, rr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::measure_snr;
    use crate::geometry::{make_layout, Extent};

    #[test]
    fn wavenumber_examples() {
        assert!((wavenumber(343.0, 343.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(wavenumber(0.0, 343.0).unwrap(), 0.0);
        assert!((wavenumber(8000.0, 343.0).unwrap() - 146.54).abs() < 0.01);
        assert!(wavenumber(1.0, 0.0).is_err());
        assert!(wavenumber(1.0, -343.0).is_err());
    }

    #[test]
    fn greens_examples() {
        let g = greens(2.0 * PI, 1.0).unwrap();
        assert!((g - Complex64::new(1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
        // exp(iπ/2) / (2π)
        let h = greens(PI, 0.5).unwrap();
        let oracle = Complex64::new(0.0, 1.0) / (2.0 * PI);
        assert!((h - oracle).norm() < 1e-15);
        for k in [0.0, 1.3, 77.0] {
            assert!((greens(k, 2.0).unwrap().norm() - 1.0 / (8.0 * PI)).abs() < 1e-15);
        }
        assert!(greens(1.0, 0.0).is_err());
    }

    fn tiny_geometry() -> (SensorLayout, ImagingGrid, StftParams) {
        let layout = SensorLayout::custom(vec![
            Position::planar(0.3, 0.1),
            Position::planar(2.2, 1.7),
            Position::planar(-1.0, 3.0),
        ])
        .unwrap();
        let grid = ImagingGrid::new(Extent::new(0.0, 1.0, 0.0, 1.0), 1.0).unwrap();
        let params = StftParams { sample_rate: 1000, window_length: 8, hop: 4, fft_size: 8, ..Default::default() };
        (layout, grid, params)
    }

    #[test]
    fn operator_matches_triple_loop() {
        let (layout, grid, params) = tiny_geometry();
        let op = build_operator(&layout, &grid, &params, 343.0).unwrap();
        assert_eq!(op.dim(), (5, 3, 4));
        for f in 0..5 {
            let k = 2.0 * PI * params.bin_frequency(f) / 343.0;
            for (n, s) in layout.positions().iter().enumerate() {
                for (j, g) in grid.points().iter().enumerate() {
                    let r = s.distance(g).max(0.5);
                    let want = Complex64::new(0.0, k * r).exp() / (4.0 * PI * r);
                    assert!((op.data()[[f, n, j]] - want).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_entry_operator() {
        let layout = SensorLayout::custom(vec![Position::planar(3.0, 4.0)]).unwrap();
        let grid = ImagingGrid::new(Extent::square(0.0, 0.0), 1.0).unwrap();
        let params = StftParams { sample_rate: 1000, window_length: 2, hop: 1, fft_size: 2, ..Default::default() };
        let op = build_operator(&layout, &grid, &params, 343.0).unwrap();
        assert_eq!(op.dim(), (2, 1, 1));
        assert_eq!(op.data()[[0, 0, 0]], greens(0.0, 5.0).unwrap());
    }

    #[test]
    fn doubling_distances_halves_modulus() {
        let params = StftParams { sample_rate: 1000, window_length: 8, hop: 4, fft_size: 8, ..Default::default() };
        let grid = ImagingGrid::new(Extent::square(0.0, 0.0), 1.0).unwrap();
        let near = SensorLayout::custom(vec![Position::planar(3.0, 4.0), Position::planar(-2.0, 0.0)]).unwrap();
        let far = SensorLayout::custom(vec![Position::planar(6.0, 8.0), Position::planar(-4.0, 0.0)]).unwrap();
        let a = build_operator(&near, &grid, &params, 343.0).unwrap();
        let b = build_operator(&far, &grid, &params, 343.0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((y.norm() - 0.5 * x.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn lazy_slices_match_materialised() {
        let (layout, grid, params) = tiny_geometry();
        let op = build_operator(&layout, &grid, &params, 343.0).unwrap();
        let lazy = LazyOperator::new(&layout, &grid, &params, 343.0).unwrap();
        assert_eq!(lazy.materialize(u64::MAX).unwrap().data(), op.data());
        for f in 0..5 {
            lazy.with_slice(f, |s| assert_eq!(s, op.slice(f)));
        }
        assert!(lazy.materialize(10).is_err());
    }

    #[test]
    fn memory_budget_reports_required_bytes() {
        let (layout, grid, params) = tiny_geometry();
        let err = build_operator_with_budget(&layout, &grid, &params, 343.0, 100).unwrap_err();
        match err {
            Error::MemoryBudget { required_bytes, budget_bytes, .. } => {
                assert_eq!(required_bytes, 5 * 3 * 4 * 16);
                assert_eq!(budget_bytes, 100);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn operator_cache_round_trip_and_hash_check() {
        let (layout, grid, params) = tiny_geometry();
        let op = build_operator(&layout, &grid, &params, 343.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("op.bin");
        op.save(&p).unwrap();
        let back = PropagationOperator::load(&p, &layout, &grid, &params, 343.0).unwrap();
        assert_eq!(back.data(), op.data());
        assert!(matches!(
            PropagationOperator::load(&p, &layout, &grid, &params, 340.0),
            Err(Error::Data(_))
        ));
        let other = layout.permuted(&[2, 1, 0]).unwrap();
        assert!(PropagationOperator::load(&p, &other, &grid, &params, 343.0).is_err());
    }

    fn impulse(len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        x[0] = 1.0;
        x
    }

    #[test]
    fn full_spectrum_impulse_delay_and_amplitude() {
        let params = StftParams::default();
        let layout = SensorLayout::custom(vec![Position::planar(343.0, 0.0)]).unwrap();
        let opts = SceneOptions { mode: SynthesisMode::FullSpectrum, ..Default::default() };
        let scene = simulate_scene(&impulse(1000), Position::planar(0.0, 0.0), &layout, &params, 343.0, &opts).unwrap();
        let y = &scene.samples[0];
        assert_eq!(y.len(), 1000 + 16_000);
        let (peak, &amp) = y.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
        assert_eq!(peak, 16_000);
        assert!((amp - 1.0 / (4.0 * PI * 343.0)).abs() < 1e-9);
    }

    #[test]
    fn attenuation_flag_leaves_pure_delay() {
        let params = StftParams::default();
        let layout = SensorLayout::custom(vec![Position::planar(3.43, 0.0)]).unwrap();
        let opts = SceneOptions { mode: SynthesisMode::FullSpectrum, attenuation: false, ..Default::default() };
        let scene = simulate_scene(&impulse(500), Position::planar(0.0, 0.0), &layout, &params, 343.0, &opts).unwrap();
        assert!((scene.samples[0][160] - 1.0).abs() < 1e-9);
    }

    fn chirp(len: usize) -> Vec<f64> {
        (0..len).map(|n| {
            let t = n as f64 / 16_000.0;
            (2.0 * PI * (200.0 + 3000.0 * t) * t).sin()
        }).collect()
    }

    #[test]
    fn equidistant_sensors_identical_and_inverse_distance_rms() {
        let params = StftParams::default();
        let src = Position::planar(10.0, 10.0);
        let layout = SensorLayout::custom(vec![
            Position::planar(13.0, 14.0),
            Position::planar(7.0, 6.0),
            Position::planar(16.0, 18.0),
        ])
        .unwrap();
        for mode in [SynthesisMode::PerBin, SynthesisMode::FullSpectrum] {
            let opts = SceneOptions { mode, ..Default::default() };
            let s = simulate_scene(&chirp(8000), src, &layout, &params, 343.0, &opts).unwrap();
            let (a, b) = (&s.samples[0], &s.samples[1]);
            let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err / norm < 1e-9, "{mode:?}");
            // per-bin spectrogram energy is exactly 1/r²; full-spectrum is checked on the samples
            let ratio = match mode {
                SynthesisMode::PerBin => {
                    let p = s.spectrogram.channel_powers();
                    (p[0] / p[2]).sqrt()
                }
                SynthesisMode::FullSpectrum => {
                    let e = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
                    (e(&s.samples[0]) / e(&s.samples[2])).sqrt()
                }
            };
            let tol = if mode == SynthesisMode::PerBin { 1e-9 } else { 1e-3 };
            assert!((ratio - 2.0).abs() < tol, "{mode:?}: {ratio}");
        }
    }

    #[test]
    fn rms_decreases_with_distance() {
        let params = StftParams::default();
        let layout = make_layout(LayoutKind::Linear, 8, 1.0, Position::planar(1.0, 0.0)).unwrap();
        let s = simulate_scene(&chirp(4000), Position::planar(0.0, 0.0), &layout, &params, 343.0, &SceneOptions::default()).unwrap();
        let p = s.spectrogram.channel_powers();
        assert!(p.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn source_on_sensor_rejected() {
        let params = StftParams::default();
        let layout = SensorLayout::custom(vec![Position::planar(1.0, 1.0)]).unwrap();
        let r = simulate_scene(&chirp(1000), Position::planar(1.1, 1.0), &layout, &params, 343.0, &SceneOptions::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    fn circle_scene(mode: SynthesisMode) -> CleanScene {
        let params = StftParams::default();
        let layout = make_layout(LayoutKind::Circular, 20, 1.0, Position::planar(25.0, 25.0)).unwrap();
        let opts = SceneOptions { mode, ..Default::default() };
        simulate_scene(&chirp(4000), Position::planar(25.0, 25.0), &layout, &params, 343.0, &opts).unwrap()
    }

    #[test]
    fn degrade_threshold_rule() {
        let scene = circle_scene(SynthesisMode::PerBin);
        let (_, m) = degrade(&scene, 1, &DegradeConfig { snr_low: 0.0, snr_high: 0.0, tau: -15.0 }).unwrap();
        assert!(m.degraded.is_empty());
        assert_eq!(m.reliable.len(), 20);
        let (_, m) = degrade(&scene, 1, &DegradeConfig { snr_low: -30.0, snr_high: -30.0, tau: -15.0 }).unwrap();
        assert_eq!(m.degraded.len(), 20);
        m.validate().unwrap();
        assert!(degrade(&scene, 1, &DegradeConfig { snr_low: 1.0, snr_high: 0.0, tau: 0.0 }).is_err());
    }

    #[test]
    fn degrade_fraction_below_midpoint() {
        let scene = circle_scene(SynthesisMode::PerBin);
        let mut below = 0;
        let mut total = 0;
        for seed in 0..50 {
            let (_, m) = degrade(&scene, seed, &DegradeConfig::default()).unwrap();
            below += m.degraded.len();
            total += m.n_channels();
        }
        assert_eq!(total, 1000);
        let frac = below as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }

    #[test]
    fn degrade_is_reproducible_and_hits_mu() {
        let scene = circle_scene(SynthesisMode::PerBin);
        let (a, ma) = degrade(&scene, 77, &DegradeConfig::default()).unwrap();
        let (b, mb) = degrade(&scene, 77, &DegradeConfig::default()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.spectrogram, b.spectrogram);
        for n in 0..scene.n_channels() {
            let snr = measure_snr(&scene.spectrogram.channel_vec(n), &a.noise.channel_vec(n)).unwrap();
            assert!((snr - ma.mu[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_on_a_channel_does_not_depend_on_channel_count() {
        let params = StftParams::default();
        let src = Position::planar(0.0, 0.0);
        let big = make_layout(LayoutKind::Linear, 6, 1.0, Position::planar(2.0, 0.0)).unwrap();
        let small = make_layout(LayoutKind::Linear, 3, 1.0, Position::planar(2.0, 0.0)).unwrap();
        let opts = SceneOptions::default();
        let sb = simulate_scene(&chirp(3000), src, &big, &params, 343.0, &opts).unwrap();
        let ss = simulate_scene(&chirp(3000), src, &small, &params, 343.0, &opts).unwrap();
        let (_, mb) = degrade(&sb, 5, &DegradeConfig::default()).unwrap();
        let (_, ms) = degrade(&ss, 5, &DegradeConfig::default()).unwrap();
        assert_eq!(mb.mu[..3], ms.mu[..]);
        let raw_b = dsp::white_noise(5, 2, 100);
        let raw_s = dsp::white_noise(5, 2, 100);
        assert_eq!(raw_b, raw_s);
    }

    #[test]
    fn degraded_channels_carry_more_noise() {
        // equal signal power on every channel: source at the circle centre
        let scene = circle_scene(SynthesisMode::PerBin);
        for seed in 0..10 {
            let (d, m) = degrade(&scene, seed, &DegradeConfig::default()).unwrap();
            if m.degraded.is_empty() || m.reliable.is_empty() {
                continue;
            }
            let p = d.noise.channel_powers();
            let mean = |set: &[usize]| set.iter().map(|&n| p[n]).sum::<f64>() / set.len() as f64;
            assert!(mean(&m.degraded) > mean(&m.reliable));
        }
    }
}

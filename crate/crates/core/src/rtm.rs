//! Back-projection onto the imaging grid, forward projection, and the
//! per-frequency Gram filter that composes the two.
//!
//! Every routine works one frequency bin at a time across all frames and
//! never couples bins, so results do not depend on the parallel schedule.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexSpectrogram, SpectrogramRole, StftParams};
use crate::geometry::ImagingGrid;
use crate::propagation::OperatorSlices;
use crate::{Error, Result};

/// `J × F × T` grid image.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmImage {
    data: Array3<Complex64>,
    params: StftParams,
}

impl RtmImage {
    pub fn new(data: Array3<Complex64>, params: StftParams) -> Result<Self> {
        if data.dim().1 != params.n_bins() {
            return Err(Error::mismatch("image bins", params.n_bins(), data.dim().1));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("image has non-finite entries"));
        }
        Ok(Self { data, params })
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    /// `(J, F, T)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// `F × N × N` Gram matrices `G[f] = L_f L_f^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramFilter {
    data: Array3<Complex64>,
    n_points: usize,
}

impl GramFilter {
    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn slice(&self, f: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), f)
    }

    pub fn n_bins(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    /// Grid size `J` the filter was built over.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `max_f ‖G[f] − G[f]^H‖_F / ‖G[f]‖_F`.
    pub fn hermitian_error(&self) -> f64 {
        self.data
            .outer_iter()
            .map(|g| {
                let norm = frobenius(g);
                if norm == 0.0 {
                    return 0.0;
                }
                let diff: f64 = g
                    .indexed_iter()
                    .map(|((a, b), z)| (z - g[[b, a]].conj()).norm_sqr())
                    .sum();
                diff.sqrt() / norm
            })
            .fold(0.0, f64::max)
    }

    /// Real part of every diagonal, `F × N`.
    pub fn diagonals(&self) -> Array2<f64> {
        let (f, n, _) = self.data.dim();
        Array2::from_shape_fn((f, n), |(f, n)| self.data[[f, n, n]].re)
    }

    /// Same filter with channels reordered (`new[n] = old[order[n]]`).
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        crate::geometry::check_permutation(order, self.n_channels())?;
        let data = self.data.select(Axis(1), order).select(Axis(2), order);
        Ok(Self { data, n_points: self.n_points })
    }
}

pub(crate) fn frobenius(m: ArrayView2<'_, Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn conj_t(m: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    m.t().mapv(|z| z.conj())
}

fn check_spectrogram(op: &impl OperatorSlices, x: &ComplexSpectrogram) -> Result<()> {
    let (n, f, _) = x.dim();
    if n != op.n_channels() {
        return Err(Error::mismatch("spectrogram channels", op.n_channels(), n));
    }
    if f != op.n_bins() {
        return Err(Error::mismatch("spectrogram bins", op.n_bins(), f));
    }
    Ok(())
}

/// `M[j][f][t] = Σ_n conj(L[f][n][j]) · X[n][f][t]`.
pub fn back_project(op: &impl OperatorSlices, x: &ComplexSpectrogram) -> Result<RtmImage> {
    check_spectrogram(op, x)?;
    let (_, bins, frames) = x.dim();
    let slices: Vec<Array2<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|f| op.with_slice(f, |l| conj_t(l).dot(&x.data().slice(s![.., f, ..]))))
        .collect();
    let mut data = Array3::zeros((op.n_points(), bins, frames));
    for (f, m) in slices.into_iter().enumerate() {
        data.slice_mut(s![.., f, ..]).assign(&m);
    }
    Ok(RtmImage { data, params: *x.params() })
}

/// `X̂[n][f][t] = Σ_j L[f][n][j] · M[j][f][t]`.
pub fn forward_project(op: &impl OperatorSlices, m: &RtmImage) -> Result<ComplexSpectrogram> {
    let (j, bins, frames) = m.dim();
    if j != op.n_points() {
        return Err(Error::mismatch("image grid points", op.n_points(), j));
    }
    if bins != op.n_bins() {
        return Err(Error::mismatch("image bins", op.n_bins(), bins));
    }
    let slices: Vec<Array2<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|f| op.with_slice(f, |l| l.dot(&m.data.slice(s![.., f, ..]))))
        .collect();
    let mut data = Array3::zeros((op.n_channels(), bins, frames));
    for (f, x) in slices.into_iter().enumerate() {
        data.slice_mut(s![.., f, ..]).assign(&x);
    }
    Ok(ComplexSpectrogram::from_parts(data, m.params, SpectrogramRole::Inpainted))
}

/// Bytes a Gram filter for `F` bins and `N` channels occupies.
pub fn gram_bytes(bins: usize, channels: usize) -> u64 {
    (bins as u64) * (channels as u64).pow(2) * std::mem::size_of::<Complex64>() as u64
}

pub fn gram_filter(op: &impl OperatorSlices) -> Result<GramFilter> {
    gram_filter_with_budget(op, crate::propagation::DEFAULT_MEMORY_BUDGET)
}

/// `G[f][n][m] = Σ_j L[f][n][j] · conj(L[f][m][j])`.
pub fn gram_filter_with_budget(op: &impl OperatorSlices, budget_bytes: u64) -> Result<GramFilter> {
    let (bins, n) = (op.n_bins(), op.n_channels());
    let required = gram_bytes(bins, n);
    if required > budget_bytes {
        return Err(Error::MemoryBudget { what: "Gram filter", required_bytes: required, budget_bytes });
    }
    let slices: Vec<Array2<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|f| op.with_slice(f, |l| l.dot(&conj_t(l))))
        .collect();
    let mut data = Array3::zeros((bins, n, n));
    for (f, g) in slices.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), f).assign(&g);
    }
    Ok(GramFilter { data, n_points: op.n_points() })
}

/// Output scaling applied after forward projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide channel `n` at bin `f` by `G[f][n][n]`.
    #[default]
    Diagonal,
    None,
    /// Divide everything by the grid size `J`.
    Global,
    /// Divide bin `f` by `‖G[f]‖²_F / tr G[f]`, the Rayleigh quotient of
    /// `G[f]` averaged over grid sources, so a typical source passes at unit
    /// gain in every bin.
    UnitGain,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [Self::Diagonal, Self::None, Self::Global, Self::UnitGain];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Diagonal => "diagonal",
            Self::None => "none",
            Self::Global => "global",
            Self::UnitGain => "unit_gain",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown normalization `{s}` (diagonal, none, global, unit_gain)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InpaintMode {
    /// Back-project onto the grid, then forward-project.
    ImagePath,
    /// Apply the precomputed `N × N` Gram matrix per bin.
    #[default]
    GramPath,
}

/// Per-bin, per-channel divisors for `norm`; `F × N`.
/// `fro2(f)` is `‖G[f]‖²_F`, only called for [`Normalization::UnitGain`].
fn divisors(
    norm: Normalization,
    diag: impl Fn(usize, usize) -> f64,
    fro2: impl Fn(usize) -> f64,
    bins: usize,
    n: usize,
    j: usize,
) -> Result<Array2<f64>> {
    let d = match norm {
        Normalization::None => Array2::ones((bins, n)),
        Normalization::Global => Array2::from_elem((bins, n), j as f64),
        Normalization::Diagonal => Array2::from_shape_fn((bins, n), |(f, c)| diag(f, c)),
        Normalization::UnitGain => {
            let per_bin: Vec<f64> = (0..bins)
                .map(|f| fro2(f) / (0..n).map(|c| diag(f, c)).sum::<f64>())
                .collect();
            Array2::from_shape_fn((bins, n), |(f, _)| per_bin[f])
        }
    };
    if let Some(((f, c), _)) = d.indexed_iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("normalization divisor for channel {c} at bin {f} is not positive")));
    }
    Ok(d)
}

fn assemble(slices: Vec<Array2<Complex64>>, div: &Array2<f64>, y: &ComplexSpectrogram) -> ComplexSpectrogram {
    let (n, bins, frames) = y.dim();
    let mut data = Array3::zeros((n, bins, frames));
    for (f, mut x) in slices.into_iter().enumerate() {
        for (c, mut row) in x.outer_iter_mut().enumerate() {
            let d = div[[f, c]];
            row.mapv_inplace(|z| z / d);
        }
        data.slice_mut(s![.., f, ..]).assign(&x);
    }
    ComplexSpectrogram::from_parts(data, *y.params(), SpectrogramRole::Inpainted)
}

/// Inpaints `Y` through the operator by either path.
///
/// The Gram path builds `G` first; when inpainting many clips with the same
/// geometry build it once with [`gram_filter`] and call [`inpaint_gram`].
pub fn inpaint(
    y: &ComplexSpectrogram,
    op: &impl OperatorSlices,
    mode: InpaintMode,
    norm: Normalization,
) -> Result<ComplexSpectrogram> {
    check_spectrogram(op, y)?;
    match mode {
        InpaintMode::GramPath => inpaint_gram(y, &gram_filter(op)?, norm),
        InpaintMode::ImagePath => {
            let (n, bins, _) = y.dim();
            let per_bin: Vec<(Array2<Complex64>, Vec<f64>, f64)> = (0..bins)
                .into_par_iter()
                .map(|f| {
                    op.with_slice(f, |l| {
                        let m = conj_t(l).dot(&y.data().slice(s![.., f, ..]));
                        let diag = l.outer_iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum()).collect();
                        let fro2 = if norm == Normalization::UnitGain {
                            let g = l.dot(&conj_t(l));
                            g.iter().map(|z| z.norm_sqr()).sum()
                        } else {
                            0.0
                        };
                        (l.dot(&m), diag, fro2)
                    })
                })
                .collect();
            let div = divisors(norm, |f, c| per_bin[f].1[c], |f| per_bin[f].2, bins, n, op.n_points())?;
            Ok(assemble(per_bin.into_iter().map(|(x, _, _)| x).collect(), &div, y))
        }
    }
}

/// `X̂[·][f][t] = G[f] · Y[·][f][t]`, then normalised.
pub fn inpaint_gram(y: &ComplexSpectrogram, g: &GramFilter, norm: Normalization) -> Result<ComplexSpectrogram> {
    let (n, bins, _) = y.dim();
    if n != g.n_channels() {
        return Err(Error::mismatch("spectrogram channels", g.n_channels(), n));
    }
    if bins != g.n_bins() {
        return Err(Error::mismatch("spectrogram bins", g.n_bins(), bins));
    }
    let div = divisors(
        norm,
        |f, c| g.data[[f, c, c]].re,
        |f| g.slice(f).iter().map(|z| z.norm_sqr()).sum(),
        bins,
        n,
        g.n_points,
    )?;
    let slices: Vec<Array2<Complex64>> = (0..bins)
        .into_par_iter()
        .map(|f| g.slice(f).dot(&y.data().slice(s![.., f, ..])))
        .collect();
    Ok(assemble(slices, &div, y))
}

/// How grid energy is weighted before summing over bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyNormalization {
    /// `Σ_{f,t} |M[j][f][t]|²`.
    Raw,
    /// Each bin's energy divided by the grid point's illumination
    /// `Σ_n |L[f][n][j]|²`. Removes the pull of the `1/r` kernel towards
    /// cells next to sensors; the map then peaks where the back-projected
    /// field is most coherent.
    #[default]
    Illumination,
}

/// `Σ_{f,t} |M[j][f][t]|²` per grid point.
pub fn image_energy_map(m: &RtmImage) -> Vec<f64> {
    m.data
        .outer_iter()
        .map(|pt| pt.iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

/// Energy map of the back-projection of `Y`, computed bin by bin without
/// materialising the full image.
///
/// All-zero frames are skipped. When more frames remain than channels the
/// per-point energy is evaluated as the quadratic form `l_j^H R_f l_j` with
/// `R_f = Y_f Y_f^H`, which is cheaper than forming the image.
pub fn energy_map(y: &ComplexSpectrogram, op: &impl OperatorSlices, norm: EnergyNormalization) -> Result<Vec<f64>> {
    check_spectrogram(op, y)?;
    let (n, bins, frames) = y.dim();
    let active: Vec<usize> = (0..frames)
        .filter(|&t| y.data().slice(s![.., .., t]).iter().any(|z| *z != Complex64::default()))
        .collect();
    let per_bin: Vec<Vec<f64>> = (0..bins)
        .into_par_iter()
        .map(|f| {
            let yf = y.data().slice(s![.., f, ..]).select(Axis(1), &active);
            op.with_slice(f, |l| {
                let energy: Vec<f64> = if active.len() > n {
                    let r = yf.dot(&conj_t(yf.view()));
                    let rl = r.dot(&l);
                    (0..l.ncols())
                        .map(|j| l.column(j).iter().zip(rl.column(j)).map(|(a, b)| (a.conj() * b).re).sum())
                        .collect()
                } else {
                    let m = conj_t(l).dot(&yf);
                    m.outer_iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum()).collect()
                };
                match norm {
                    EnergyNormalization::Raw => energy,
                    EnergyNormalization::Illumination => energy
                        .into_iter()
                        .enumerate()
                        .map(|(j, e)| {
                            let illum: f64 = l.column(j).iter().map(|z| z.norm_sqr()).sum();
                            if illum > 0.0 { e / illum } else { 0.0 }
                        })
                        .collect(),
                }
            })
        })
        .collect();
    let mut out = vec![0.0; op.n_points()];
    for row in per_bin {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// `x,y,energy` rows in grid order.
pub fn write_energy_map_csv(path: impl AsRef<Path>, grid: &ImagingGrid, energy: &[f64]) -> Result<()> {
    if energy.len() != grid.len() {
        return Err(Error::mismatch("energy map length", grid.len(), energy.len()));
    }
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "energy"])?;
    for (p, e) in grid.points().iter().zip(energy) {
        w.write_record([p.x.to_string(), p.y.to_string(), e.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

//! Patch tokens, spatial channel weights, correlation analysis and a
//! nearest-centroid reference classifier.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::LogMelFeature;
use crate::geometry::SensorLayout;
use crate::propagation::SceneMetadata;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub mel: usize,
    pub time: usize,
    pub stride_mel: usize,
    pub stride_time: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self { mel: 16, time: 16, stride_mel: 10, stride_time: 10 }
    }
}

impl PatchSpec {
    pub fn patch_len(&self) -> usize {
        self.mel * self.time
    }

    /// Number of `(mel, time)` patch positions on a `K × T` plane.
    pub fn positions(&self, k: usize, t: usize) -> Result<(usize, usize)> {
        if self.mel == 0 || self.time == 0 || self.stride_mel == 0 || self.stride_time == 0 {
            return Err(Error::invalid("patch sizes and strides must be positive"));
        }
        if self.mel > k || self.time > t {
            return Err(Error::invalid(format!(
                "{}×{} patch does not fit a {k}×{t} plane",
                self.mel, self.time
            )));
        }
        Ok(((k - self.mel) / self.stride_mel + 1, (t - self.time) / self.stride_time + 1))
    }
}

/// `N × I × (K_p·T_p)` flattened patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patches: Array3<f64>,
    spec: PatchSpec,
    positions: (usize, usize),
}

impl PatchGrid {
    pub fn patches(&self) -> &Array3<f64> {
        &self.patches
    }

    pub fn spec(&self) -> &PatchSpec {
        &self.spec
    }

    /// `(mel positions, time positions)`; `I` is their product.
    pub fn positions(&self) -> (usize, usize) {
        self.positions
    }

    pub fn n_patches(&self) -> usize {
        self.patches.dim().1
    }
}

/// Patches enumerated row-major over `(mel, time)` positions, each flattened
/// mel-major (`v[dk·T_p + dt]`).
pub fn extract_patches(e: &LogMelFeature, spec: &PatchSpec) -> Result<PatchGrid> {
    let (n, k, t) = e.dim();
    let (pk, pt) = spec.positions(k, t)?;
    let mut patches = Array3::zeros((n, pk * pt, spec.patch_len()));
    for c in 0..n {
        for ik in 0..pk {
            for it in 0..pt {
                let (k0, t0) = (ik * spec.stride_mel, it * spec.stride_time);
                let block = e.data().slice(s![c, k0..k0 + spec.mel, t0..t0 + spec.time]);
                let mut dst = patches.slice_mut(s![c, ik * pt + it, ..]);
                for (d, v) in dst.iter_mut().zip(block.iter()) {
                    *d = *v;
                }
            }
        }
    }
    Ok(PatchGrid { patches, spec: *spec, positions: (pk, pt) })
}

/// Linear patch embedding `t = p·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Embedding {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::mismatch("embedding bias length", weight.ncols(), bias.len()));
        }
        Ok(Self { weight, bias })
    }

    /// Gaussian weights with std `1/√input_dim` and zero bias, drawn from
    /// the `(seed, "embedding")` stream.
    pub fn random(seed: u64, input_dim: usize, dim: usize) -> Result<Self> {
        if input_dim == 0 || dim == 0 {
            return Err(Error::invalid("embedding dimensions must be positive"));
        }
        let normal = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("positive std");
        let mut r = rng::stream(seed, "embedding", 0);
        let weight = Array2::from_shape_fn((input_dim, dim), |_| normal.sample(&mut r));
        Ok(Self { weight, bias: Array1::zeros(dim) })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Per-channel tokens and their channel average.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    tokens: Array3<f64>,
    averaged: Array2<f64>,
}

impl TokenSet {
    /// `N × I × D`.
    pub fn new(tokens: Array3<f64>) -> Result<Self> {
        if tokens.dim().0 == 0 {
            return Err(Error::invalid("token set has no channels"));
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tokens must be finite"));
        }
        let averaged = channel_mean(&tokens);
        Ok(Self { tokens, averaged })
    }

    pub fn tokens(&self) -> &Array3<f64> {
        &self.tokens
    }

    /// `I × D` channel-averaged tokens.
    pub fn averaged(&self) -> &Array2<f64> {
        &self.averaged
    }

    /// `(N, I, D)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.tokens.dim()
    }

    /// Mean of the averaged tokens over patches, length `D`.
    pub fn pooled(&self) -> Vec<f64> {
        let i = self.averaged.nrows() as f64;
        self.averaged.sum_axis(Axis(0)).iter().map(|v| v / i).collect()
    }

    pub fn select_channels(&self, order: &[usize]) -> Result<Self> {
        crate::geometry::check_permutation(order, self.dim().0)?;
        Self::new(self.tokens.select(Axis(0), order))
    }
}

/// Sum that does not depend on the order of its terms.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn channel_mean(tokens: &Array3<f64>) -> Array2<f64> {
    let (n, i, d) = tokens.dim();
    let mut buf = vec![0.0; n];
    Array2::from_shape_fn((i, d), |(ii, dd)| {
        for (c, b) in buf.iter_mut().enumerate() {
            *b = tokens[[c, ii, dd]];
        }
        order_free_sum(&mut buf) / n as f64
    })
}

pub fn embed_patches(p: &PatchGrid, emb: &Embedding) -> Result<TokenSet> {
    let (n, i, len) = p.patches.dim();
    if len != emb.input_dim() {
        return Err(Error::mismatch("embedding input dimension", len, emb.input_dim()));
    }
    let flat = p.patches.view().into_shape_with_order((n * i, len)).expect("contiguous patches");
    let tokens = flat.dot(&emb.weight) + &emb.bias;
    let tokens = tokens.into_shape_with_order((n, i, emb.dim())).expect("size preserved");
    TokenSet::new(tokens)
}

/// Spatial channel weights, `Σ w_n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    w: Vec<f64>,
}

impl SpatialWeights {
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

/// Per patch, softmax over channels of `⟨t̄_i, t_{n,i}⟩ / √D`; the weights
/// are these probabilities averaged over patches.
///
/// All sums across channels are order-free, so permuting channels permutes
/// the weights bit for bit.
pub fn spatial_weights(tokens: &TokenSet) -> SpatialWeights {
    let (n, i, d) = tokens.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut probs = Array2::zeros((n, i));
    let mut buf = vec![0.0; n];
    for ii in 0..i {
        let mean = tokens.averaged.row(ii);
        let scores: Vec<f64> = (0..n)
            .map(|c| tokens.tokens.slice(s![c, ii, ..]).dot(&mean) * scale)
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        buf.copy_from_slice(&exps);
        let z = order_free_sum(&mut buf);
        for c in 0..n {
            probs[[c, ii]] = exps[c] / z;
        }
    }
    // shifted mean: exact when every patch gives the same probability
    let w = probs
        .outer_iter()
        .map(|row| {
            let first = row[0];
            first + row.iter().map(|p| p - first).sum::<f64>() / i as f64
        })
        .collect();
    SpatialWeights { w }
}

/// Pearson product-moment correlation.
///
/// Computed from centred values, clamped to `[-1, 1]`; results within
/// `1e-14` of ±1 are reported as exactly ±1.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::mismatch("pearson lengths", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least two samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("first argument is constant"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("second argument is constant"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(if 1.0 - r.abs() < 1e-14 { r.signum() } else { r })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub corr_snr: f64,
    pub corr_distance: f64,
}

/// Correlation of the weights with channel SNR and with source distance.
pub fn correlation_report(w: &[f64], meta: &SceneMetadata, layout: &SensorLayout) -> Result<CorrelationReport> {
    if w.len() != meta.mu.len() || w.len() != layout.len() {
        return Err(Error::invalid(format!(
            "{} weights, {} SNRs and {} sensors",
            w.len(),
            meta.mu.len(),
            layout.len()
        )));
    }
    let distances = layout.distances_to(&meta.source_position);
    Ok(CorrelationReport {
        corr_snr: pearson(w, &meta.mu)?,
        corr_distance: pearson(w, &distances)?,
    })
}

/// Nearest-centroid classifier over pooled token vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    centroids: Array2<f64>,
}

impl NearestCentroid {
    /// Labels must lie in `0..n_classes`, each with at least one example.
    pub fn train(examples: &[(Vec<f64>, usize)], n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let dim = examples
            .first()
            .map(|(v, _)| v.len())
            .ok_or_else(|| Error::invalid("no training examples"))?;
        let mut sums = Array2::<f64>::zeros((n_classes, dim));
        let mut counts = vec![0usize; n_classes];
        for (v, label) in examples {
            if v.len() != dim {
                return Err(Error::mismatch("feature length", dim, v.len()));
            }
            if *label >= n_classes {
                return Err(Error::invalid(format!("label {label} outside 0..{n_classes}")));
            }
            let mut row = sums.row_mut(*label);
            row.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            counts[*label] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(c));
        }
        for (mut row, &count) in sums.outer_iter_mut().zip(&counts) {
            row.mapv_inplace(|v| v / count as f64);
        }
        Ok(Self { centroids: sums })
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn n_classes(&self) -> usize {
        self.centroids.nrows()
    }

    /// Closest centroid in Euclidean distance; ties go to the lowest label.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.centroids.ncols() {
            return Err(Error::mismatch("feature length", self.centroids.ncols(), x.len()));
        }
        let d: Vec<f64> = self
            .centroids
            .outer_iter()
            .map(|c| -c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        Ok(crate::rtm::argmax(&d).expect("at least two classes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy_percent: f64,
    /// Row = truth, column = prediction.
    pub confusion: Array2<u64>,
}

pub fn evaluate(predictions: &[usize], truth: &[usize], n_classes: usize) -> Result<Evaluation> {
    if predictions.len() != truth.len() {
        return Err(Error::mismatch("prediction count", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mut confusion = Array2::zeros((n_classes, n_classes));
    let mut correct = 0;
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!("label outside 0..{n_classes}")));
        }
        confusion[[t, p]] += 1;
        correct += usize::from(p == t);
    }
    Ok(Evaluation {
        accuracy_percent: 100.0 * correct as f64 / truth.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LayoutKind, Position};
    use proptest::prelude::*;
    use rand::Rng;

    fn feature(n: usize, k: usize, t: usize, f: impl Fn(usize, usize, usize) -> f64) -> LogMelFeature {
        LogMelFeature::new(Array3::from_shape_fn((n, k, t), |(a, b, c)| f(a, b, c))).unwrap()
    }

    #[test]
    fn patch_counts_and_layout() {
        let e = feature(2, 16, 16, |c, k, t| (c * 1000 + k * 16 + t) as f64);
        let spec = PatchSpec { mel: 16, time: 16, stride_mel: 10, stride_time: 10 };
        let p = extract_patches(&e, &spec).unwrap();
        assert_eq!(p.n_patches(), 1);
        let flat: Vec<f64> = e.data().slice(s![1, .., ..]).iter().copied().collect();
        assert_eq!(p.patches().slice(s![1, 0, ..]).to_vec(), flat);

        let tall = feature(1, 32, 16, |_, _, _| 0.0);
        let spec16 = PatchSpec { stride_mel: 16, stride_time: 16, ..spec };
        assert_eq!(extract_patches(&tall, &spec16).unwrap().n_patches(), 2);

        let c = feature(3, 40, 30, |_, _, _| -2.5);
        let p = extract_patches(&c, &PatchSpec::default()).unwrap();
        assert_eq!(p.positions(), (3, 2));
        assert!(p.patches().iter().all(|&v| v == -2.5));

        let small = feature(1, 8, 8, |_, _, _| 0.0);
        assert!(extract_patches(&small, &PatchSpec::default()).is_err());
    }

    #[test]
    fn patch_index_covers_same_region_on_every_channel() {
        let e = feature(3, 36, 26, |_, k, t| (k * 100 + t) as f64);
        let p = extract_patches(&e, &PatchSpec::default()).unwrap();
        for i in 0..p.n_patches() {
            let a = p.patches().slice(s![0, i, ..]);
            for c in 1..3 {
                assert_eq!(p.patches().slice(s![c, i, ..]), a);
            }
        }
        // second time position of the first mel row starts at t = 10
        assert_eq!(p.patches()[[0, 1, 0]], 10.0);
        assert_eq!(p.patches()[[0, 1, 1]], 11.0);
        assert_eq!(p.patches()[[0, 1, 16]], 110.0);
    }

    #[test]
    fn identity_embedding_and_bias() {
        let e = feature(2, 4, 4, |c, k, t| (c + k * t) as f64);
        let spec = PatchSpec { mel: 2, time: 2, stride_mel: 2, stride_time: 2 };
        let p = extract_patches(&e, &spec).unwrap();
        let id = Embedding::new(Array2::eye(4), Array1::zeros(4)).unwrap();
        let t = embed_patches(&p, &id).unwrap();
        assert_eq!(t.tokens(), p.patches());

        let zero = extract_patches(&feature(2, 4, 4, |_, _, _| 0.0), &spec).unwrap();
        let b = Embedding::new(Array2::zeros((4, 3)), Array1::from_elem(3, 1.5)).unwrap();
        assert!(embed_patches(&zero, &b).unwrap().tokens().iter().all(|&v| v == 1.5));
        assert!(embed_patches(&zero, &Embedding::random(0, 5, 3).unwrap()).is_err());
    }

    #[test]
    fn embedding_matches_loop() {
        let mut r = rng::stream(1, "analysis-test", 0);
        let e = LogMelFeature::new(Array3::from_shape_fn((3, 20, 20), |_| r.random_range(-3.0..1.0))).unwrap();
        let p = extract_patches(&e, &PatchSpec::default()).unwrap();
        let emb = Embedding::new(Embedding::random(4, 256, 8).unwrap().weight, Array1::from_shape_fn(8, |i| i as f64)).unwrap();
        let t = embed_patches(&p, &emb).unwrap();
        let (n, i, d) = t.dim();
        for c in 0..n {
            for ii in 0..i {
                for dd in 0..d {
                    let mut acc = emb.bias[dd];
                    for q in 0..256 {
                        acc += p.patches()[[c, ii, q]] * emb.weight[[q, dd]];
                    }
                    assert!((acc - t.tokens()[[c, ii, dd]]).abs() < 1e-12);
                }
            }
            }
        for ii in 0..i {
            for dd in 0..d {
                let mean = (0..n).map(|c| t.tokens()[[c, ii, dd]]).sum::<f64>() / n as f64;
                assert!((mean - t.averaged()[[ii, dd]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spatial_weight_examples() {
        let same = TokenSet::new(Array3::from_shape_fn((4, 3, 5), |(_, i, d)| (i * 5 + d) as f64 * 0.1)).unwrap();
        assert_eq!(spatial_weights(&same).values(), &[0.25; 4]);
        let one = TokenSet::new(Array3::from_elem((1, 2, 3), 0.7)).unwrap();
        assert_eq!(spatial_weights(&one).values(), &[1.0]);

        // D = 1: mean token 1, so scores are the tokens themselves
        let t = Array3::from_shape_vec((2, 1, 1), vec![2.0, 0.0]).unwrap();
        let w = spatial_weights(&TokenSet::new(t).unwrap());
        let e2 = 2f64.exp();
        assert!((w.values()[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((w.values()[0] - 0.8808).abs() < 1e-4);
    }

    fn random_tokens(seed: u64, n: usize, i: usize, d: usize) -> TokenSet {
        let mut r = rng::stream(seed, "tokens", 0);
        TokenSet::new(Array3::from_shape_fn((n, i, d), |_| r.random_range(-2.0..2.0))).unwrap()
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_permute(seed in any::<u64>(), n in 1usize..12, i in 1usize..6, d in 1usize..9) {
            let t = random_tokens(seed, n, i, d);
            let w = spatial_weights(&t);
            prop_assert!((w.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.values().iter().all(|&v| v > 0.0 && v <= 1.0));
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            order.rotate_left(seed as usize % n);
            let wp = spatial_weights(&t.select_channels(&order).unwrap());
            for (a, &b) in wp.values().iter().zip(&order) {
                prop_assert_eq!(a.to_bits(), w.values()[b].to_bits());
            }
        }

        #[test]
        fn pearson_affine_invariant(v in proptest::collection::vec(-10.0f64..10.0, 3..30), a in 0.1f64..5.0, b in -5.0f64..5.0) {
            let y: Vec<f64> = v.iter().rev().map(|x| x.sin()).collect();
            if let Ok(r) = pearson(&v, &y) {
                let t: Vec<f64> = v.iter().map(|x| a * x + b).collect();
                prop_assert!((pearson(&t, &y).unwrap() - r).abs() < 1e-9);
                let neg: Vec<f64> = v.iter().map(|x| -x).collect();
                prop_assert!((pearson(&neg, &y).unwrap() + r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap(), 1.0);
        assert_eq!(pearson(&x, &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0);
        assert!((pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    fn meta(mu: Vec<f64>, src: Position) -> SceneMetadata {
        let (degraded, reliable) = SceneMetadata::partition(&mu, -15.0);
        SceneMetadata {
            clip_id: "c".into(),
            class_label: None,
            layout_kind: LayoutKind::Custom,
            source_position: src,
            mu,
            tau: -15.0,
            degraded,
            reliable,
            seed: 0,
        }
    }

    #[test]
    fn correlation_report_cases() {
        let layout = SensorLayout::custom((0..5).map(|i| Position::planar(i as f64, 0.0)).collect()).unwrap();
        let m = meta(vec![-30.0, -2.0, -17.5, -8.0, -25.0], Position::planar(-3.0, 0.0));
        let lo = -30.0;
        let total: f64 = m.mu.iter().map(|v| v - lo + 1.0).sum();
        let w: Vec<f64> = m.mu.iter().map(|v| (v - lo + 1.0) / total).collect();
        let r = correlation_report(&w, &m, &layout).unwrap();
        assert_eq!(r.corr_snr, 1.0);
        assert!((-1.0..=1.0).contains(&r.corr_distance));
        assert!(matches!(correlation_report(&[0.2; 5], &m, &layout), Err(Error::UndefinedCorrelation(_))));
        assert!(correlation_report(&[0.5; 2], &m, &layout).is_err());
    }

    #[test]
    fn nearest_centroid_cases() {
        let mut r = rng::stream(3, "clusters", 0);
        let mut ex = Vec::new();
        for label in 0..2 {
            for _ in 0..20 {
                let c = if label == 0 { -5.0 } else { 5.0 };
                ex.push((vec![c + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)], label));
            }
        }
        let m = NearestCentroid::train(&ex, 2).unwrap();
        let pred: Vec<usize> = ex.iter().map(|(v, _)| m.predict(v).unwrap()).collect();
        let truth: Vec<usize> = ex.iter().map(|(_, l)| *l).collect();
        assert_eq!(evaluate(&pred, &truth, 2).unwrap().accuracy_percent, 100.0);

        let singles = vec![(vec![0.0, 1.0], 0), (vec![3.0, 3.0], 1), (vec![-4.0, 2.0], 2)];
        let m = NearestCentroid::train(&singles, 3).unwrap();
        for (v, l) in &singles {
            assert_eq!(m.predict(v).unwrap(), *l);
        }
        // relabel 0→2, 1→0, 2→1
        let perm = [2, 0, 1];
        let relabelled: Vec<_> = singles.iter().map(|(v, l)| (v.clone(), perm[*l])).collect();
        let mp = NearestCentroid::train(&relabelled, 3).unwrap();
        for q in [[0.5, 0.5], [2.0, 2.0], [-3.0, 1.0], [10.0, -1.0]] {
            assert_eq!(mp.predict(&q).unwrap(), perm[m.predict(&q).unwrap()]);
        }
        assert!(matches!(NearestCentroid::train(&singles, 4), Err(Error::EmptyClass(3))));
    }

    #[test]
    fn evaluate_cases() {
        let e = evaluate(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(e.accuracy_percent, 100.0);
        assert_eq!(e.confusion, Array2::eye(3).mapv(|v: f64| v as u64));
        assert!(evaluate(&[], &[], 3).is_err());
        assert!(evaluate(&[0], &[0, 1], 3).is_err());

        let mut r = rng::stream(9, "chance", 0);
        let truth: Vec<usize> = (0..20_000).map(|i| i % 50).collect();
        let pred: Vec<usize> = (0..20_000).map(|_| r.random_range(0..50)).collect();
        let acc = evaluate(&pred, &truth, 50).unwrap().accuracy_percent;
        assert!((acc - 2.0).abs() < 0.5, "{acc}");
    }
}

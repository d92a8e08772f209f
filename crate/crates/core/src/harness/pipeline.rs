//! Variant × layout sweep: features, reference classifier, SNR gain,
//! spatial weights and correlations, written as CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FeatureConfig, Variant};
use super::dataset::{load_source, realize_scene, Dataset, Scene};
use super::manifest::ClipManifest;
use super::output::{create_dir, write_rows, Provenance};
use crate::analysis::{
    correlation_report, embed_patches, evaluate, extract_patches, spatial_weights, Embedding, NearestCentroid,
    TokenSet,
};
use crate::baselines::{delay_and_sum, delay_and_sum_spectral, max_snr_channel, DelayAndSumOptions};
use crate::dsp::{self, log_mel, mel_filterbank, measure_snr, ComplexSpectrogram, LogMelFeature, MelFilterbank, SpectrogramRole};
use crate::geometry::{LayoutKind, SensorLayout};
use crate::propagation::{LazyOperator, SynthesisMode};
use crate::rtm::{gram_filter, inpaint_gram, GramFilter};
use crate::{rng, Error, Result};

/// Log-mel → patches → embedding chain shared by every variant.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    filterbank: MelFilterbank,
    embedding: Embedding,
    cfg: FeatureConfig,
}

impl FeatureExtractor {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let f = &cfg.features;
        let filterbank = mel_filterbank(&cfg.stft, f.n_mels, f.f_low_hz, f.f_high_hz)?;
        let embedding = Embedding::random(rng::child_seed(cfg.seed()?, "embedding", 0), f.patch.patch_len(), f.embed_dim)?;
        Ok(Self { filterbank, embedding, cfg: f.clone() })
    }

    pub fn log_mel(&self, spec: &ComplexSpectrogram) -> Result<LogMelFeature> {
        let e = log_mel(spec, &self.filterbank)?;
        if !self.cfg.level_normalize {
            return Ok(e);
        }
        let mut data = e.data().clone();
        for mut ch in data.outer_iter_mut() {
            let mean = ch.sum() / ch.len() as f64;
            ch.mapv_inplace(|v| v - mean);
        }
        LogMelFeature::new(data)
    }

    /// Per-channel patch tokens and the number of mel patch positions.
    pub fn tokens(&self, spec: &ComplexSpectrogram) -> Result<(TokenSet, usize)> {
        let patches = extract_patches(&self.log_mel(spec)?, &self.cfg.patch)?;
        let mel_positions = patches.positions().0;
        Ok((embed_patches(&patches, &self.embedding)?, mel_positions))
    }

    /// Channel-averaged tokens pooled over time, one block per mel position.
    pub fn vector(tokens: &TokenSet, mel_positions: usize) -> Vec<f64> {
        let avg = tokens.averaged();
        let (i, d) = avg.dim();
        let time_positions = i / mel_positions;
        let mut v = vec![0.0; mel_positions * d];
        for ik in 0..mel_positions {
            for it in 0..time_positions {
                let row = avg.row(ik * time_positions + it);
                for (dst, x) in v[ik * d..(ik + 1) * d].iter_mut().zip(row) {
                    *dst += x;
                }
            }
        }
        v.iter_mut().for_each(|x| *x /= time_positions as f64);
        v
    }
}

/// A variant applied to the observation and, by linearity, separately to its
/// clean and noise parts for SNR measurement.
#[derive(Debug, Clone)]
pub struct VariantOutput {
    pub observed: ComplexSpectrogram,
    pub clean: ComplexSpectrogram,
    pub noise: ComplexSpectrogram,
}

impl VariantOutput {
    /// Measured SNR of each output channel.
    pub fn channel_snr(&self) -> Result<Vec<f64>> {
        (0..self.clean.channels())
            .map(|c| measure_snr(&self.clean.channel_vec(c), &self.noise.channel_vec(c)))
            .collect()
    }
}

pub fn apply_variant(
    variant: Variant,
    scene: &Scene,
    layout: &SensorLayout,
    gram: Option<&GramFilter>,
    cfg: &ExperimentConfig,
) -> Result<VariantOutput> {
    let y = &scene.degraded.spectrogram;
    let x = &scene.clean.spectrogram;
    let eta = &scene.degraded.noise;
    let all = |f: &dyn Fn(&ComplexSpectrogram) -> Result<ComplexSpectrogram>| -> Result<VariantOutput> {
        Ok(VariantOutput { observed: f(y)?, clean: f(x)?, noise: f(eta)? })
    };
    match variant {
        Variant::Raw => Ok(VariantOutput { observed: y.clone(), clean: x.clone(), noise: eta.clone() }),
        Variant::Inpaint => {
            let g = gram.ok_or_else(|| Error::invalid("inpaint variant needs a Gram filter"))?;
            all(&|s| inpaint_gram(s, g, cfg.normalization))
        }
        Variant::BeamformOracle => {
            let opts = DelayAndSumOptions { amplitude_compensation: cfg.dns_amplitude_comp };
            let pos = scene.metadata.source_position;
            match cfg.synthesis {
                SynthesisMode::PerBin => all(&|s| delay_and_sum_spectral(s, layout, &pos, cfg.speed_of_sound, &opts)),
                SynthesisMode::FullSpectrum => {
                    let noise: Vec<Vec<f64>> = scene
                        .degraded
                        .samples
                        .iter()
                        .zip(&scene.clean.samples)
                        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                        .collect();
                    let beam = |ch: &[Vec<f64>]| -> Result<ComplexSpectrogram> {
                        let out = delay_and_sum(ch, layout, &pos, cfg.speed_of_sound, cfg.stft.sample_rate, &opts)?;
                        dsp::stft_channels(&[out], &cfg.stft, SpectrogramRole::Inpainted)
                    };
                    Ok(VariantOutput {
                        observed: beam(&scene.degraded.samples)?,
                        clean: beam(&scene.clean.samples)?,
                        noise: beam(&noise)?,
                    })
                }
            }
        }
        Variant::MaxsnrOracle => {
            let c = max_snr_channel(&scene.metadata.mu).ok_or_else(|| Error::Data("scene has no channels".into()))?;
            all(&|s| s.select_channels(&[c]))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub variant: Variant,
    pub train_layout: LayoutKind,
    pub test_layout: LayoutKind,
    pub n_test: usize,
    pub n_correct: usize,
    pub accuracy_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub variant: Variant,
    pub train_layout: LayoutKind,
    pub test_layout: LayoutKind,
    pub true_label: usize,
    pub predicted_label: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub variant: Variant,
    pub train_layout: LayoutKind,
    pub test_layout: LayoutKind,
    pub clip_id: String,
    pub fold: usize,
    pub label: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGainRow {
    pub variant: Variant,
    pub layout: LayoutKind,
    pub clip_id: String,
    pub input_snr_mean_db: f64,
    pub output_snr_mean_db: f64,
    pub output_snr_median_db: f64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub variant: Variant,
    pub layout: LayoutKind,
    pub clip_id: String,
    pub corr_snr: f64,
    pub corr_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub variant: Variant,
    pub layout: LayoutKind,
    pub clip_id: String,
    pub channel: usize,
    pub x: f64,
    pub y: f64,
    pub mu: f64,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub layout: LayoutKind,
    pub clip_id: String,
    pub label: usize,
    pub fold: usize,
    pub source_x: f64,
    pub source_y: f64,
    pub n_degraded: usize,
    pub mu_mean: f64,
    pub distance_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub layout: LayoutKind,
    pub clip_id: String,
    pub channel: usize,
    pub x: f64,
    pub y: f64,
    pub mu: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub test_layout: LayoutKind,
    /// Averaged over training layouts.
    pub accuracy_percent_mean: f64,
    pub snr_gain_db_mean: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Results {
    pub dir: PathBuf,
    pub accuracy: Vec<AccuracyRow>,
    pub confusion: Vec<ConfusionRow>,
    pub predictions: Vec<PredictionRow>,
    pub snr_gain: Vec<SnrGainRow>,
    pub correlation: Vec<CorrelationRow>,
    pub weights: Vec<WeightRow>,
    pub scenes: Vec<SceneRow>,
    pub channels: Vec<ChannelRow>,
    pub summary: Vec<SummaryRow>,
}

impl Results {
    pub fn accuracy_of(&self, variant: Variant, train: LayoutKind, test: LayoutKind) -> Option<f64> {
        self.accuracy
            .iter()
            .find(|r| r.variant == variant && r.train_layout == train && r.test_layout == test)
            .map(|r| r.accuracy_percent)
    }
}

/// The CSV files [`run_pipeline`] writes, by schema kind.
pub const RESULT_FILES: [&str; 9] =
    ["accuracy", "confusion", "predictions", "snr_gain", "correlation", "weights", "scenes", "channels", "summary"];

struct VariantScene {
    feature: Vec<f64>,
    snr: SnrGainRow,
    weights: Vec<WeightRow>,
    correlation: Option<CorrelationRow>,
}

struct SceneOutcome {
    clip_id: String,
    label: usize,
    fold: usize,
    scene: SceneRow,
    channels: Vec<ChannelRow>,
    variants: Vec<VariantScene>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

fn canonical<T: Ord + Copy>(items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.sort();
    v.dedup();
    v
}

fn canonical_layouts(kinds: &[LayoutKind]) -> Vec<LayoutKind> {
    LayoutKind::GENERATED.into_iter().filter(|k| kinds.contains(k)).collect()
}

#[allow(clippy::too_many_arguments)]
fn process_scene(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    extractor: &FeatureExtractor,
    layout: &SensorLayout,
    gram: Option<&GramFilter>,
    scene: &Scene,
    fold: usize,
) -> Result<SceneOutcome> {
    let meta = &scene.metadata;
    let kind = layout.kind();
    let distances = &scene.clean.source_distances;
    let channels: Vec<ChannelRow> = (0..meta.n_channels())
        .map(|n| {
            let p = layout.positions()[n];
            ChannelRow {
                layout: kind,
                clip_id: meta.clip_id.clone(),
                channel: n,
                x: p.x,
                y: p.y,
                mu: meta.mu[n],
                distance: distances[n],
            }
        })
        .collect();
    let mut out = Vec::with_capacity(variants.len());
    for &v in variants {
        let o = apply_variant(v, scene, layout, gram, cfg)?;
        let (tokens, mel_positions) = extractor.tokens(&o.observed)?;
        let feature = FeatureExtractor::vector(&tokens, mel_positions);
        let snr = o.channel_snr()?;
        let input = mean(&meta.mu);
        let snr_row = SnrGainRow {
            variant: v,
            layout: kind,
            clip_id: meta.clip_id.clone(),
            input_snr_mean_db: input,
            output_snr_mean_db: mean(&snr),
            output_snr_median_db: median(&snr),
            gain_db: mean(&snr) - input,
        };
        let (weights, correlation) = if tokens.dim().0 == meta.n_channels() && meta.n_channels() > 1 {
            let w = spatial_weights(&tokens);
            let rows = channels
                .iter()
                .zip(w.values())
                .map(|(c, &weight)| WeightRow {
                    variant: v,
                    layout: kind,
                    clip_id: c.clip_id.clone(),
                    channel: c.channel,
                    x: c.x,
                    y: c.y,
                    mu: c.mu,
                    distance: c.distance,
                    weight,
                })
                .collect();
            let (corr_snr, corr_distance) = match correlation_report(w.values(), meta, layout) {
                Ok(r) => (r.corr_snr, r.corr_distance),
                Err(Error::UndefinedCorrelation(_)) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let corr = CorrelationRow { variant: v, layout: kind, clip_id: meta.clip_id.clone(), corr_snr, corr_distance };
            (rows, Some(corr))
        } else {
            (Vec::new(), None)
        };
        out.push(VariantScene { feature, snr: snr_row, weights, correlation });
    }
    let label = meta.class_label.ok_or_else(|| Error::Data(format!("scene {} has no label", meta.clip_id)))?;
    Ok(SceneOutcome {
        clip_id: meta.clip_id.clone(),
        label,
        fold,
        scene: SceneRow {
            layout: kind,
            clip_id: meta.clip_id.clone(),
            label,
            fold,
            source_x: meta.source_position.x,
            source_y: meta.source_position.y,
            n_degraded: meta.degraded.len(),
            mu_mean: mean(&meta.mu),
            distance_mean: mean(distances),
        },
        channels,
        variants: out,
    })
}

/// Runs every (variant, train layout, test layout) cell over a synthesised
/// dataset and writes the result CSVs to `out_dir`.
///
/// Scenes are regenerated from the dataset records. Training uses the clips
/// outside fold `k` of the training layout, testing the clips in fold `k` of
/// the test layout; with a single fold both use every clip.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    manifest: &ClipManifest,
    out_dir: impl AsRef<Path>,
) -> Result<Results> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref().to_path_buf();
    let seed = cfg.seed()?;
    let prov = Provenance { config_hash: cfg.config_hash(), seed };
    let variants = canonical(&cfg.variants);
    let train_layouts = canonical_layouts(&cfg.train_layouts);
    let test_layouts = canonical_layouts(&cfg.test_layouts);
    let extractor = FeatureExtractor::new(cfg)?;
    let n_classes = manifest.n_classes().max(2);
    let n_folds = manifest.n_folds();
    for k in cfg.layouts() {
        if !dataset.info.layouts.contains(&k) {
            return Err(Error::Data(format!("dataset has no `{k}` scenes")));
        }
    }

    let mut per_layout: BTreeMap<LayoutKind, Vec<SceneOutcome>> = BTreeMap::new();
    for kind in cfg.layouts() {
        let layout = cfg.layout(kind)?;
        let gram = if variants.contains(&Variant::Inpaint) {
            Some(gram_filter(&LazyOperator::new(&layout, &cfg.grid()?, &cfg.stft, cfg.speed_of_sound)?)?)
        } else {
            None
        };
        let outcomes: Vec<SceneOutcome> = manifest
            .rows()
            .par_iter()
            .map(|rec| {
                let source = load_source(manifest, rec, cfg.stft.sample_rate)?;
                let scene = realize_scene(cfg, dataset, &layout, rec, &source)?;
                process_scene(cfg, &variants, &extractor, &layout, gram.as_ref(), &scene, rec.fold)
            })
            .collect::<Result<_>>()?;
        per_layout.insert(kind, outcomes);
    }

    let mut res = Results { dir: out_dir.clone(), ..Default::default() };
    for kind in cfg.layouts() {
        for o in &per_layout[&kind] {
            res.scenes.push(o.scene.clone());
            res.channels.extend(o.channels.iter().cloned());
        }
    }
    for (vi, &v) in variants.iter().enumerate() {
        for kind in cfg.layouts() {
            for o in &per_layout[&kind] {
                let vs = &o.variants[vi];
                res.snr_gain.push(vs.snr.clone());
                res.weights.extend(vs.weights.iter().cloned());
                res.correlation.extend(vs.correlation.clone());
            }
        }
        for &train in &train_layouts {
            for &test in &test_layouts {
                let mut preds = Vec::new();
                for fold in 0..n_folds {
                    let examples: Vec<(Vec<f64>, usize)> = per_layout[&train]
                        .iter()
                        .filter(|o| n_folds == 1 || o.fold != fold)
                        .map(|o| (o.variants[vi].feature.clone(), o.label))
                        .collect();
                    let clf = NearestCentroid::train(&examples, n_classes).map_err(|e| match e {
                        Error::EmptyClass(c) => {
                            Error::Data(format!("class {c} has no training clips outside fold {fold}"))
                        }
                        other => other,
                    })?;
                    for o in per_layout[&test].iter().filter(|o| o.fold == fold) {
                        preds.push(PredictionRow {
                            variant: v,
                            train_layout: train,
                            test_layout: test,
                            clip_id: o.clip_id.clone(),
                            fold,
                            label: o.label,
                            predicted: clf.predict(&o.variants[vi].feature)?,
                        });
                    }
                }
                preds.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
                let p: Vec<usize> = preds.iter().map(|r| r.predicted).collect();
                let t: Vec<usize> = preds.iter().map(|r| r.label).collect();
                let ev = evaluate(&p, &t, n_classes)?;
                res.accuracy.push(AccuracyRow {
                    variant: v,
                    train_layout: train,
                    test_layout: test,
                    n_test: t.len(),
                    n_correct: p.iter().zip(&t).filter(|(a, b)| a == b).count(),
                    accuracy_percent: ev.accuracy_percent,
                });
                for ((ti, pi), &count) in ev.confusion.indexed_iter() {
                    res.confusion.push(ConfusionRow {
                        variant: v,
                        train_layout: train,
                        test_layout: test,
                        true_label: ti,
                        predicted_label: pi,
                        count,
                    });
                }
                res.predictions.extend(preds);
            }
        }
        for &test in &test_layouts {
            let acc: Vec<f64> = res
                .accuracy
                .iter()
                .filter(|r| r.variant == v && r.test_layout == test)
                .map(|r| r.accuracy_percent)
                .collect();
            let gains: Vec<f64> = per_layout[&test].iter().map(|o| o.variants[vi].snr.gain_db).collect();
            res.summary.push(SummaryRow {
                variant: v,
                test_layout: test,
                accuracy_percent_mean: mean(&acc),
                snr_gain_db_mean: mean(&gains),
            });
        }
    }
    debug_assert!(res.confusion.len() == res.accuracy.len() * n_classes * n_classes);

    create_dir(&out_dir)?;
    let path = |kind: &str| out_dir.join(format!("{kind}.csv"));
    write_rows(path("accuracy"), "accuracy", &prov, &res.accuracy)?;
    write_rows(path("confusion"), "confusion", &prov, &res.confusion)?;
    write_rows(path("predictions"), "predictions", &prov, &res.predictions)?;
    write_rows(path("snr_gain"), "snr_gain", &prov, &res.snr_gain)?;
    write_rows(path("correlation"), "correlation", &prov, &res.correlation)?;
    write_rows(path("weights"), "weights", &prov, &res.weights)?;
    write_rows(path("scenes"), "scenes", &prov, &res.scenes)?;
    write_rows(path("channels"), "channels", &prov, &res.channels)?;
    write_rows(path("summary"), "summary", &prov, &res.summary)?;
    Ok(res)
}

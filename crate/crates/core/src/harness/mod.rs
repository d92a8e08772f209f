//! Experiment orchestration: corpus, dataset synthesis, the variant × layout
//! sweep and plot data.
//!
//! An experiment directory looks like
//!
//! ```text
//! config.toml      resolved configuration
//! corpus/          synthetic clips + manifest.csv (when no manifest is given)
//! dataset/         scene records
//! results/         metric CSVs
//! plots/           plot-data CSVs (and SVGs)
//! ```
//!
//! Every output is a pure function of the configuration and seed: work is
//! spread over a bounded rayon pool but merged in clip-id order.

mod config;
mod corpus;
mod dataset;
mod manifest;
mod output;
mod pipeline;
mod plots;

use std::path::{Path, PathBuf};

pub use config::{CorpusConfig, ExperimentConfig, FeatureConfig, Variant};
pub use corpus::{generate_corpus, synth_clip};
pub use dataset::{
    load_source, realize, realize_scene, scene_seed, source_position, synthesize_dataset, Dataset, DatasetInfo, Scene,
    SceneRecord, DATASET_FORMAT,
};
pub use manifest::{ClipManifest, ClipRecord};
pub use output::{
    create_csv, finish_csv, read_json, read_rows, write_json, write_rows, CsvWriter, Provenance, CSV_SCHEMA_VERSION,
};
pub use pipeline::{
    apply_variant, run_pipeline, AccuracyRow, ChannelRow, ConfusionRow, CorrelationRow, FeatureExtractor, PredictionRow,
    Results, SceneRow, SnrGainRow, SummaryRow, VariantOutput, WeightRow, RESULT_FILES,
};
pub use plots::{
    distance_histogram, distance_summary, emit_plots, DistanceSummaryRow, HeatmapRow, Histogram, PlotFiles,
    PlotOptions, ScatterRow,
};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub manifest: ClipManifest,
    pub dataset: Dataset,
    pub results: Results,
    pub plots: PlotFiles,
}

/// Corpus (unless a manifest is configured), dataset, results and plots under
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let dir = cfg.output_dir.clone();
    output::create_dir(&dir)?;
    let text = format!(
        "# dmas/config v{CSV_SCHEMA_VERSION} config_hash={} seed={}\n{}",
        cfg.config_hash(),
        cfg.seed()?,
        cfg.to_toml()?
    );
    write_text(&dir.join("config.toml"), &text)?;
    let manifest = match &cfg.manifest {
        Some(p) => ClipManifest::read(p)?,
        None => generate_corpus(dir.join("corpus"), &cfg.corpus, cfg.stft.sample_rate, cfg.seed()?)?,
    };
    let dataset = synthesize_dataset(cfg, &manifest, dir.join("dataset"))?;
    let results = run_pipeline(cfg, &dataset, &manifest, dir.join("results"))?;
    let plots = emit_plots(
        dir.join("results"),
        dir.join("plots"),
        &PlotOptions { histogram_bins: cfg.histogram_bins, svg: cfg.svg },
    )?;
    Ok(ExperimentOutput { dir, manifest, dataset, results, plots })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

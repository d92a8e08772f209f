//! Seeded multichannel scene synthesis over a clip manifest.
//!
//! Layout `dataset/`:
//!
//! ```text
//! dataset.json                  provenance, clip ids, layouts
//! scenes/<layout>/<clip>.json   SceneRecord
//! audio/<layout>/<clip>.*.wav   only with save_audio
//! ```
//!
//! Audio is not needed to rerun the pipeline: every scene is a pure function
//! of the config, the seed and the source clip, and is regenerated on demand.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{ClipManifest, ClipRecord};
use super::output::{create_dir, read_json, write_json, Provenance};
use crate::geometry::{sample_source, LayoutKind, Position, SensorLayout};
use crate::io::wav::{read_wav, write_wav, WavFormat};
use crate::propagation::{degrade, simulate_scene, CleanScene, DegradedScene, SceneMetadata};
use crate::{rng, Error, Result};

pub const DATASET_FORMAT: &str = "dmas-dataset v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub format: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub manifest_hash: String,
    pub layouts: Vec<LayoutKind>,
    pub clips: Vec<String>,
}

/// One persisted scene: metadata plus what is needed to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub fold: usize,
    pub n_samples: usize,
    pub source_distances: Vec<f64>,
    pub metadata: SceneMetadata,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub info: DatasetInfo,
}

/// A fully realised scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub clean: CleanScene,
    pub degraded: DegradedScene,
    pub metadata: SceneMetadata,
}

impl Dataset {
    /// Opens an existing dataset and checks it matches `cfg` and `manifest`.
    pub fn open(dir: impl AsRef<Path>, cfg: &ExperimentConfig, manifest: &ClipManifest) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let info: DatasetInfo = read_json(dir.join("dataset.json"))?;
        if info.format != DATASET_FORMAT {
            return Err(Error::Data(format!("unsupported dataset format `{}`", info.format)));
        }
        if info.provenance.config_hash != cfg.config_hash() || info.provenance.seed != cfg.seed()? {
            return Err(Error::Data(format!(
                "dataset {} was built with config {} seed {}, expected {} seed {}",
                dir.display(),
                info.provenance.config_hash,
                info.provenance.seed,
                cfg.config_hash(),
                cfg.seed()?
            )));
        }
        if info.manifest_hash != manifest.content_hash()? {
            return Err(Error::Data("manifest contents changed since the dataset was built".into()));
        }
        Ok(Self { dir, info })
    }

    pub fn scene_path(&self, layout: LayoutKind, clip_id: &str) -> PathBuf {
        scene_path(&self.dir, layout, clip_id)
    }

    pub fn record(&self, layout: LayoutKind, clip_id: &str) -> Result<SceneRecord> {
        let p = self.scene_path(layout, clip_id);
        if !p.exists() {
            return Err(Error::Data(format!("missing scene record {}", p.display())));
        }
        read_json(p)
    }
}

fn scene_path(dir: &Path, layout: LayoutKind, clip_id: &str) -> PathBuf {
    dir.join("scenes").join(layout.as_str()).join(format!("{clip_id}.json"))
}

/// Source position for a clip, shared by every layout so layouts differ only
/// in geometry. Redrawn until it clears every sensor by the minimum distance.
pub fn source_position(cfg: &ExperimentConfig, layouts: &[SensorLayout], clip_id: &str) -> Result<Position> {
    let seed = cfg.seed()?;
    let mut r = rng::stream(seed, &format!("position/{clip_id}"), 0);
    for _ in 0..10_000 {
        let p = sample_source(&mut r, &cfg.extent)?;
        let clear = layouts
            .iter()
            .all(|l| l.distances_to(&p).iter().all(|&d| d >= cfg.min_source_distance_m));
        if clear {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "no source position in the field clears every sensor by {} m",
        cfg.min_source_distance_m
    )))
}

pub fn scene_seed(seed: u64, layout: LayoutKind, clip_id: &str) -> u64 {
    rng::child_seed(seed, &format!("scene/{}/{clip_id}", layout.as_str()), 0)
}

/// Reads a source clip, checking it is mono at the STFT sample rate.
pub fn load_source(manifest: &ClipManifest, record: &ClipRecord, sample_rate: u32) -> Result<Vec<f64>> {
    let path = manifest.resolve(record);
    let audio = read_wav(&path).map_err(|e| match e {
        Error::Io { .. } | Error::Wav(_) => Error::Data(format!("{}: {e}", path.display())),
        other => other,
    })?;
    if audio.n_channels() != 1 {
        return Err(Error::Data(format!("{}: expected mono, found {} channels", path.display(), audio.n_channels())));
    }
    if audio.sample_rate != sample_rate {
        return Err(Error::Data(format!(
            "{}: sample rate {} Hz, config expects {sample_rate} Hz",
            path.display(),
            audio.sample_rate
        )));
    }
    let x = audio.channels.into_iter().next().unwrap_or_default();
    if x.is_empty() || x.iter().all(|&v| v == 0.0) {
        return Err(Error::Data(format!("{}: clip is silent", path.display())));
    }
    Ok(x)
}

/// Simulates and degrades one scene.
pub fn realize(
    cfg: &ExperimentConfig,
    layout: &SensorLayout,
    source: &[f64],
    position: Position,
    record: &ClipRecord,
) -> Result<Scene> {
    let seed = cfg.seed()?;
    let clean = simulate_scene(source, position, layout, &cfg.stft, cfg.speed_of_sound, &cfg.scene_options())?;
    let (degraded, mut metadata) = degrade(&clean, scene_seed(seed, layout.kind(), &record.clip_id), &cfg.degrade_config())?;
    metadata.clip_id = record.clip_id.clone();
    metadata.class_label = Some(record.label);
    Ok(Scene { clean, degraded, metadata })
}

/// Regenerates a persisted scene and checks it against its record.
pub fn realize_scene(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    layout: &SensorLayout,
    record: &ClipRecord,
    source: &[f64],
) -> Result<Scene> {
    let stored = dataset.record(layout.kind(), &record.clip_id)?;
    let scene = realize(cfg, layout, source, stored.metadata.source_position, record)?;
    if scene.metadata != stored.metadata || scene.clean.samples[0].len() != stored.n_samples {
        return Err(Error::Data(format!(
            "scene {}/{} does not regenerate to its stored record",
            layout.kind(),
            record.clip_id
        )));
    }
    Ok(scene)
}

/// Samples a source position per clip, synthesises a scene per layout and
/// persists the records under `dir`.
pub fn synthesize_dataset(cfg: &ExperimentConfig, manifest: &ClipManifest, dir: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let dir = dir.as_ref().to_path_buf();
    let seed = cfg.seed()?;
    let prov = Provenance { config_hash: cfg.config_hash(), seed };
    let kinds = cfg.layouts();
    let layouts: Vec<SensorLayout> = kinds.iter().map(|&k| cfg.layout(k)).collect::<Result<_>>()?;
    for k in &kinds {
        create_dir(&dir.join("scenes").join(k.as_str()))?;
        if cfg.save_audio {
            create_dir(&dir.join("audio").join(k.as_str()))?;
        }
    }
    manifest
        .rows()
        .par_iter()
        .map(|rec| -> Result<()> {
            let source = load_source(manifest, rec, cfg.stft.sample_rate)?;
            let position = source_position(cfg, &layouts, &rec.clip_id)?;
            for layout in &layouts {
                let scene = realize(cfg, layout, &source, position, rec)?;
                let record = SceneRecord {
                    provenance: prov.clone(),
                    fold: rec.fold,
                    n_samples: scene.clean.samples[0].len(),
                    source_distances: scene.clean.source_distances.clone(),
                    metadata: scene.metadata,
                };
                write_json(scene_path(&dir, layout.kind(), &rec.clip_id), &record)?;
                if cfg.save_audio {
                    let base = dir.join("audio").join(layout.kind().as_str());
                    let fs = cfg.stft.sample_rate;
                    write_wav(base.join(format!("{}.clean.wav", rec.clip_id)), &scene.clean.samples, fs, WavFormat::Float32)?;
                    write_wav(base.join(format!("{}.degraded.wav", rec.clip_id)), &scene.degraded.samples, fs, WavFormat::Float32)?;
                }
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    let info = DatasetInfo {
        format: DATASET_FORMAT.into(),
        provenance: prov,
        manifest_hash: manifest.content_hash()?,
        layouts: kinds,
        clips: manifest.rows().iter().map(|r| r.clip_id.clone()).collect(),
    };
    write_json(dir.join("dataset.json"), &info)?;
    Ok(Dataset { dir, info })
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::PatchSpec;
use crate::dsp::StftParams;
use crate::geometry::{hex, make_layout, Extent, ImagingGrid, LayoutKind, SensorLayout};
use crate::propagation::{DegradeConfig, SceneOptions, SynthesisMode};
use crate::rtm::Normalization;
use crate::{Error, Result, SPEED_OF_SOUND};

/// What the classifier sees for each scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The degraded multichannel observation.
    Raw,
    /// The observation after Gram-filter inpainting.
    Inpaint,
    /// Delay-and-sum towards the true source position.
    BeamformOracle,
    /// The channel with the highest recorded SNR.
    MaxsnrOracle,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Self::Raw, Self::Inpaint, Self::BeamformOracle, Self::MaxsnrOracle];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Inpaint => "inpaint",
            Self::BeamformOracle => "beamform_oracle",
            Self::MaxsnrOracle => "maxsnr_oracle",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub patch: PatchSpec,
    pub embed_dim: usize,
    /// Subtract each channel's mean log-mel level before patching.
    pub level_normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { n_mels: 128, f_low_hz: 0.0, f_high_hz: 8000.0, patch: PatchSpec::default(), embed_dim: 64, level_normalize: true }
    }
}

/// Synthetic corpus used when no manifest is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_classes: usize,
    pub clips_per_class: usize,
    pub n_folds: usize,
    pub clip_seconds: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { n_classes: 8, clips_per_class: 10, n_folds: 2, clip_seconds: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required to run; may come from the command line instead.
    pub seed: Option<u64>,
    pub train_layouts: Vec<LayoutKind>,
    pub test_layouts: Vec<LayoutKind>,
    pub n_channels: usize,
    pub spacing_m: f64,
    pub extent: Extent,
    pub grid_spacing_m: f64,
    pub snr_range_db: [f64; 2],
    pub tau_db: f64,
    pub speed_of_sound: f64,
    pub stft: StftParams,
    pub variants: Vec<Variant>,
    pub normalization: Normalization,
    pub synthesis: SynthesisMode,
    pub attenuation: bool,
    pub min_source_distance_m: f64,
    /// Amplitude compensation in the delay-and-sum oracle.
    pub dns_amplitude_comp: bool,
    pub features: FeatureConfig,
    pub corpus: CorpusConfig,
    /// CSV manifest of mono source clips; a synthetic corpus is generated when absent.
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub save_audio: bool,
    pub histogram_bins: usize,
    pub svg: bool,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let all = LayoutKind::GENERATED.to_vec();
        Self {
            seed: None,
            train_layouts: all.clone(),
            test_layouts: all,
            n_channels: 50,
            spacing_m: 1.0,
            extent: Extent::default(),
            grid_spacing_m: 1.0,
            snr_range_db: [-30.0, 0.0],
            tau_db: -15.0,
            speed_of_sound: SPEED_OF_SOUND,
            stft: StftParams::default(),
            variants: Variant::ALL.to_vec(),
            normalization: Normalization::Diagonal,
            synthesis: SynthesisMode::PerBin,
            attenuation: true,
            min_source_distance_m: 0.5,
            dns_amplitude_comp: true,
            features: FeatureConfig::default(),
            corpus: CorpusConfig::default(),
            manifest: None,
            output_dir: PathBuf::from("dmas-out"),
            save_audio: false,
            histogram_bins: 20,
            svg: false,
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.train_layouts.is_empty() || self.test_layouts.is_empty() {
            return cfg("train and test layout lists must be non-empty".into());
        }
        if let Some(k) = self.layouts().iter().find(|k| **k == LayoutKind::Custom) {
            return cfg(format!("layout `{k}` cannot be generated; use circular, linear or right_angle"));
        }
        if self.n_channels == 0 {
            return cfg("n_channels must be positive".into());
        }
        if self.variants.is_empty() {
            return cfg("at least one variant is required".into());
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return cfg(format!("speed of sound must be positive, got {}", self.speed_of_sound));
        }
        if self.histogram_bins == 0 {
            return cfg("histogram_bins must be positive".into());
        }
        if self.corpus.n_classes < 2 || self.corpus.clips_per_class == 0 || self.corpus.n_folds == 0 {
            return cfg("corpus needs ≥ 2 classes, ≥ 1 clip per class and ≥ 1 fold".into());
        }
        if self.corpus.n_folds > self.corpus.clips_per_class {
            return cfg("more folds than clips per class".into());
        }
        if self.corpus.clip_seconds.is_nan() || self.corpus.clip_seconds <= 0.0 {
            return cfg("clip_seconds must be positive".into());
        }
        if self.features.embed_dim == 0 {
            return cfg("embed_dim must be positive".into());
        }
        self.degrade_config().validate().map_err(to_config)?;
        self.stft.validate().map_err(to_config)?;
        self.extent.validate().map_err(to_config)?;
        self.grid().map_err(to_config)?;
        for kind in self.layouts() {
            self.layout(kind).map_err(to_config)?;
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return cfg(format!("manifest {} does not exist", m.display()));
            }
        }
        Ok(())
    }

    /// Every layout used for training or testing, in canonical order.
    pub fn layouts(&self) -> Vec<LayoutKind> {
        let mut all: Vec<LayoutKind> = self.train_layouts.iter().chain(&self.test_layouts).copied().collect();
        all.sort_by_key(|k| k.as_str());
        all.dedup();
        all.sort_by_key(|k| LayoutKind::GENERATED.iter().position(|g| g == k).unwrap_or(usize::MAX));
        all
    }

    pub fn layout(&self, kind: LayoutKind) -> Result<SensorLayout> {
        make_layout(kind, self.n_channels, self.spacing_m, kind.default_anchor())
    }

    pub fn grid(&self) -> Result<ImagingGrid> {
        ImagingGrid::new(self.extent, self.grid_spacing_m)
    }

    pub fn degrade_config(&self) -> DegradeConfig {
        DegradeConfig { snr_low: self.snr_range_db[0], snr_high: self.snr_range_db[1], tau: self.tau_db }
    }

    pub fn scene_options(&self) -> SceneOptions {
        SceneOptions { mode: self.synthesis, attenuation: self.attenuation, min_distance: self.min_source_distance_m }
    }

    /// Hash of everything that affects results. Paths, worker count and
    /// rendering switches are excluded so relocated reruns match.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.manifest = None;
        c.workers = 0;
        c.svg = false;
        c.save_audio = false;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

fn to_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

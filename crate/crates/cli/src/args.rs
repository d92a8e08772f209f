use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmas_core::harness::{ExperimentConfig, Variant};
use dmas_core::io::wav::WavFormat;
use dmas_core::propagation::SynthesisMode;
use dmas_core::rtm::{InpaintMode, Normalization};
use dmas_core::{Error, Extent, LayoutKind};

#[derive(Parser, Debug)]
#[command(
    name = "dmas",
    version,
    about = "Green's-function inpainting and analysis for distributed acoustic sensing",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write sensor layouts and the imaging grid.
    Layout(LayoutArgs),
    /// Simulate and degrade one scene.
    Simulate(SimulateArgs),
    /// Inpaint one multichannel clip, or run an oracle baseline on it.
    Inpaint(InpaintArgs),
    /// Log-mel features, patch tokens and the pooled feature vector.
    Features(FeaturesArgs),
    /// Spatial channel weights and their correlation with SNR and distance.
    Weights(WeightsArgs),
    /// Full train-layout × test-layout × variant sweep.
    Experiment(ExperimentArgs),
    /// Summarise an experiment directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    Beamform,
    Maxsnr,
}

impl Oracle {
    pub fn variant(self) -> Variant {
        match self {
            Oracle::Beamform => Variant::BeamformOracle,
            Oracle::Maxsnr => Variant::MaxsnrOracle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Synthesis {
    PerBin,
    FullSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Gram,
    Image,
}

impl From<Mode> for InpaintMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Gram => InpaintMode::GramPath,
            Mode::Image => InpaintMode::ImagePath,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    F32,
    Pcm16,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::F32 => WavFormat::Float32,
            Format::Pcm16 => WavFormat::Pcm16,
        }
    }
}

/// Configuration shared by every command. Precedence, lowest first: built-in
/// defaults, `--config`, `--set`, the named flags.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set stft.hop=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Speed of sound in m/s [default: 343].
    #[arg(long, value_name = "M_PER_S")]
    pub speed_of_sound: Option<f64>,
    /// Per-channel SNR range in dB [default: -30,0].
    #[arg(long, value_name = "LOW,HIGH", allow_hyphen_values = true, value_parser = parse_pair)]
    pub snr_range: Option<[f64; 2]>,
    /// Degradation threshold in dB [default: -15].
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_channels: Option<usize>,
    /// Sensor spacing in metres.
    #[arg(long, value_name = "M")]
    pub spacing: Option<f64>,
    /// Field extent in metres.
    #[arg(long, value_name = "XMIN,XMAX,YMIN,YMAX", allow_hyphen_values = true, value_parser = parse_extent)]
    pub extent: Option<Extent>,
    /// Imaging grid spacing in metres.
    #[arg(long, value_name = "M")]
    pub grid_spacing: Option<f64>,
    /// Inpainting normalization: diagonal, none, global or unit_gain.
    #[arg(long, value_parser = parse_from_str::<Normalization>)]
    pub normalization: Option<Normalization>,
    #[arg(long, value_enum)]
    pub synthesis: Option<Synthesis>,
    /// Spherical spreading loss in scene synthesis.
    #[arg(long, value_enum)]
    pub attenuation: Option<Toggle>,
    /// Amplitude compensation in the delay-and-sum oracle.
    #[arg(long, value_enum)]
    pub dns_amplitude_comp: Option<Toggle>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        cfg = apply_sets(cfg, &self.set)?;
        macro_rules! put {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field {
                    $target = v.into();
                }
            };
        }
        put!(seed, cfg.seed);
        put!(speed_of_sound, cfg.speed_of_sound);
        put!(snr_range, cfg.snr_range_db);
        put!(tau, cfg.tau_db);
        put!(n_channels, cfg.n_channels);
        put!(spacing, cfg.spacing_m);
        put!(extent, cfg.extent);
        put!(grid_spacing, cfg.grid_spacing_m);
        put!(normalization, cfg.normalization);
        put!(workers, cfg.workers);
        if let Some(s) = self.synthesis {
            cfg.synthesis = match s {
                Synthesis::PerBin => SynthesisMode::PerBin,
                Synthesis::FullSpectrum => SynthesisMode::FullSpectrum,
            };
        }
        if let Some(t) = self.attenuation {
            cfg.attenuation = t.on();
        }
        if let Some(t) = self.dns_amplitude_comp {
            cfg.dns_amplitude_comp = t.on();
        }
        Ok(cfg)
    }
}

/// Applies dotted `key=value` assignments by round-tripping through a TOML
/// table, so every field is reachable and unknown keys are rejected.
pub fn apply_sets(cfg: ExperimentConfig, sets: &[String]) -> Result<ExperimentConfig, Error> {
    if sets.is_empty() {
        return Ok(cfg);
    }
    let mut root = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {s}`: expected KEY=VALUE")))?;
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let last = parts.pop().unwrap_or_default();
        let mut table = root.as_table_mut().expect("config serialises to a table");
        for p in parts {
            table = table
                .entry(p)
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{p}` is not a table")))?;
        }
        table.insert(last.to_string(), parse_value(raw.trim()));
    }
    root.try_into().map_err(|e: toml::de::Error| Error::Config(format!("--set: {}", e.message())))
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn parse_from_str<T: FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_floats<const K: usize>(s: &str) -> Result<[f64; K], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {K} comma-separated numbers, got {}", v.len()))
}

pub fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats::<2>(s)
}

fn parse_extent(s: &str) -> Result<Extent, String> {
    let [a, b, c, d] = parse_floats::<4>(s)?;
    Ok(Extent::new(a, b, c, d))
}

#[derive(Args, Debug)]
pub struct LayoutArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Layouts to write [default: circular, linear and right_angle].
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<LayoutKind>)]
    pub kind: Vec<LayoutKind>,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also draw the layouts as SVG.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Layout kind, or a layout `.csv`/`.toml` file.
    #[arg(long, default_value = "circular")]
    pub layout: String,
    /// Mono source clip; a synthetic clip of `--class` is used when absent.
    #[arg(long, value_name = "WAV")]
    pub source: Option<PathBuf>,
    /// Class label of the source (selects the synthetic family too).
    #[arg(long, default_value_t = 0)]
    pub class: usize,
    /// Source position; sampled from the seed when absent.
    #[arg(long, value_name = "X,Y", allow_hyphen_values = true, value_parser = parse_pair)]
    pub position: Option<[f64; 2]>,
    #[arg(long, value_enum, default_value = "f32")]
    pub format: Format,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Degraded clip: a multichannel WAV or a spectrogram tensor.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Layout kind, or a layout `.csv`/`.toml` file.
    #[arg(long, default_value = "circular")]
    pub layout: String,
    #[arg(long, value_enum, default_value = "gram")]
    pub mode: Mode,
    /// Operator cache; built and written when missing, verified when present.
    #[arg(long, value_name = "FILE")]
    pub operator_cache: Option<PathBuf>,
    /// Run an oracle baseline instead of inpainting (needs `--metadata`).
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
    /// Scene metadata JSON as written by `simulate`.
    #[arg(long, value_name = "JSON")]
    pub metadata: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    pub format: Format,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Multichannel WAV or spectrogram tensor.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Multichannel WAV or spectrogram tensor.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Layout kind, or a layout `.csv`/`.toml` file.
    #[arg(long, default_value = "circular")]
    pub layout: String,
    /// Scene metadata JSON; adds SNR and distance columns and correlations.
    #[arg(long, value_name = "JSON")]
    pub metadata: Option<PathBuf>,
    /// Scale applied to the weights before the sparsemax channel selection.
    #[arg(long, default_value_t = 1.0)]
    pub sparsemax_scale: f64,
    /// Output CSV.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Clip manifest CSV; a synthetic corpus is generated when absent.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<LayoutKind>)]
    pub train_layouts: Option<Vec<LayoutKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<LayoutKind>)]
    pub test_layouts: Option<Vec<LayoutKind>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<Variant>)]
    pub variants: Option<Vec<Variant>>,
    /// Run only this oracle baseline.
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub clips_per_class: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_name = "S")]
    pub clip_seconds: Option<f64>,
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    /// Also render SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Keep clean and degraded audio for every scene.
    #[arg(long)]
    pub save_audio: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, Error> {
        if self.common.seed.is_none() {
            return Err(Error::Config("`experiment` requires --seed".into()));
        }
        let mut cfg = self.common.resolve()?;
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(v) = &self.train_layouts {
            cfg.train_layouts = v.clone();
        }
        if let Some(v) = &self.test_layouts {
            cfg.test_layouts = v.clone();
        }
        if let Some(v) = &self.variants {
            cfg.variants = v.clone();
        }
        if let Some(o) = self.oracle {
            let keep = o.variant();
            cfg.variants.retain(|v| !matches!(v, Variant::BeamformOracle | Variant::MaxsnrOracle) || *v == keep);
            if !cfg.variants.contains(&keep) {
                cfg.variants.push(keep);
            }
        }
        if let Some(v) = self.classes {
            cfg.corpus.n_classes = v;
        }
        if let Some(v) = self.clips_per_class {
            cfg.corpus.clips_per_class = v;
        }
        if let Some(v) = self.folds {
            cfg.corpus.n_folds = v;
        }
        if let Some(v) = self.clip_seconds {
            cfg.corpus.clip_seconds = v;
        }
        if let Some(v) = self.histogram_bins {
            cfg.histogram_bins = v;
        }
        cfg.svg |= self.svg;
        cfg.save_audio |= self.save_audio;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Experiment directory.
    pub dir: PathBuf,
    /// Rewrite the plot data from the stored results.
    #[arg(long)]
    pub replot: bool,
    #[arg(long, default_value_t = 20)]
    pub histogram_bins: usize,
    #[arg(long)]
    pub svg: bool,
}

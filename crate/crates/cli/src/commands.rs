use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dmas_core::analysis::{correlation_report, spatial_weights};
use dmas_core::baselines::{
    delay_and_sum, delay_and_sum_spectral, max_snr_channel, scaling_sparsemax, DelayAndSumOptions,
};
use dmas_core::dsp::{istft, stft_channels, ComplexSpectrogram, SpectrogramRole, StftParams};
use dmas_core::geometry::LayoutConfig;
use dmas_core::harness::{
    emit_plots, read_json, read_rows, realize, run_experiment, source_position, synth_clip, write_json,
    AccuracyRow, ClipRecord, ExperimentConfig, FeatureExtractor, PlotOptions, Provenance, SummaryRow, RESULT_FILES,
};
use dmas_core::io::tensor;
use dmas_core::io::wav::{read_wav, write_wav, WavFormat};
use dmas_core::propagation::{build_operator, LazyOperator, OperatorSlices, PropagationOperator, SceneMetadata};
use dmas_core::rtm::{argmax, energy_map, inpaint, write_energy_map_csv, EnergyNormalization};
use dmas_core::{Complex64, Error, ImagingGrid, LayoutKind, Position, SensorLayout};
use serde::Serialize;

use crate::args::{
    ExperimentArgs, FeaturesArgs, InpaintArgs, LayoutArgs, Oracle, ReportArgs, SimulateArgs, WeightsArgs,
};

/// Resolves the shared configuration for single-clip commands, where the
/// seed defaults to 0.
fn single_clip_config(common: &crate::args::ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = common.resolve()?;
    cfg.seed.get_or_insert(0);
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// A layout kind, or a layout file (`.csv` positions or `.toml` description).
fn resolve_layout(spec: &str, cfg: &ExperimentConfig) -> Result<SensorLayout> {
    if let Ok(kind) = spec.parse::<LayoutKind>() {
        if kind != LayoutKind::Custom {
            return Ok(cfg.layout(kind)?);
        }
    }
    let path = Path::new(spec);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    match ext {
        "csv" => Ok(SensorLayout::read_csv(path)?),
        "toml" => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            Ok(LayoutConfig::from_toml(&text)?.layout()?)
        }
        _ => Err(Error::Config(format!("`{spec}` is neither a layout kind nor a .csv/.toml layout file")).into()),
    }
}

struct Input {
    spec: ComplexSpectrogram,
    /// Present when the input was audio.
    samples: Option<Vec<Vec<f64>>>,
}

fn read_input(path: &Path, params: &StftParams) -> Result<Input> {
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        let audio = read_wav(path)?;
        if audio.sample_rate != params.sample_rate {
            return Err(Error::Data(format!(
                "{}: sample rate {} Hz, config expects {} Hz",
                path.display(),
                audio.sample_rate,
                params.sample_rate
            ))
            .into());
        }
        let spec = stft_channels(&audio.channels, params, SpectrogramRole::Observed)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        return Ok(Input { spec, samples: Some(audio.channels) });
    }
    let (data, header) = tensor::read::<Complex64, _>(path)?;
    let stored: StftParams = header
        .get("stft")
        .map(serde_json::from_str)
        .transpose()
        .map_err(|e| Error::Data(format!("{}: stft header: {e}", path.display())))?
        .ok_or_else(|| Error::Data(format!("{}: tensor has no stft header", path.display())))?;
    if stored != *params {
        return Err(Error::Data(format!("{}: spectrogram STFT parameters differ from the config", path.display())).into());
    }
    let role = header
        .get("role")
        .and_then(|r| serde_json::from_value(serde_json::Value::String(r.into())).ok())
        .unwrap_or(SpectrogramRole::Observed);
    let data = data
        .into_dimensionality()
        .map_err(|e| Error::Data(format!("{}: expected a channel × freq × frame tensor: {e}", path.display())))?;
    let spec = ComplexSpectrogram::new(data, *params, role).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(Input { spec, samples: None })
}

fn write_spectrogram(path: &Path, spec: &ComplexSpectrogram) -> Result<()> {
    let meta = [("stft", serde_json::to_string(spec.params())?), ("role", spec.role().as_str().to_string())];
    tensor::write(path, &spec.data().clone().into_dyn(), &["channel", "freq", "frame"], &meta)?;
    Ok(())
}

fn check_channels(input: &Input, layout: &SensorLayout) -> Result<()> {
    if input.spec.channels() != layout.len() {
        return Err(Error::Data(format!(
            "input has {} channels, layout has {} sensors",
            input.spec.channels(),
            layout.len()
        ))
        .into());
    }
    Ok(())
}

fn read_metadata(path: &Path, layout: &SensorLayout) -> Result<SceneMetadata> {
    let meta: SceneMetadata = read_json(path)?;
    meta.validate().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if meta.n_channels() != layout.len() {
        return Err(Error::Data(format!(
            "{}: metadata covers {} channels, layout has {}",
            path.display(),
            meta.n_channels(),
            layout.len()
        ))
        .into());
    }
    Ok(meta)
}

pub fn layout(args: &LayoutArgs) -> Result<()> {
    let cfg = single_clip_config(&args.common)?;
    let kinds = if args.kind.is_empty() { LayoutKind::GENERATED.to_vec() } else { args.kind.clone() };
    if kinds.contains(&LayoutKind::Custom) {
        return Err(Error::Config("custom layouts are read from files, not generated".into()).into());
    }
    create_dir(&args.out)?;
    let grid = cfg.grid()?;
    let mut drawn = Vec::new();
    for kind in kinds {
        let layout = cfg.layout(kind)?;
        layout.write_csv(args.out.join(format!("{kind}.csv")))?;
        let desc = LayoutConfig {
            kind,
            n_channels: cfg.n_channels,
            spacing_m: cfg.spacing_m,
            anchor_xyz: None,
            extent: cfg.extent,
            grid_spacing_m: cfg.grid_spacing_m,
        };
        std::fs::write(args.out.join(format!("{kind}.toml")), desc.to_toml()?)?;
        println!("{kind}: {} sensors, fingerprint {}", layout.len(), &layout.fingerprint()[..16]);
        drawn.push(layout);
    }
    write_grid_csv(&args.out.join("grid.csv"), &grid)?;
    println!("grid: {} × {} points at {} m", grid.shape().0, grid.shape().1, grid.spacing());
    if args.svg {
        std::fs::write(args.out.join("layouts.svg"), layouts_svg(&drawn, &grid))?;
    }
    Ok(())
}

fn write_grid_csv(path: &Path, grid: &ImagingGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "x", "y", "z"])?;
    for (j, p) in grid.points().iter().enumerate() {
        w.write_record([j.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn layouts_svg(layouts: &[SensorLayout], grid: &ImagingGrid) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 20.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let e = grid.extent();
    let scale = (SIZE - 2.0 * PAD) / (e.x_max - e.x_min).max(e.y_max - e.y_min);
    let px = |p: &Position| (PAD + (p.x - e.x_min) * scale, SIZE - PAD - (p.y - e.y_min) * scale);
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}">"#);
    let (x0, y1) = px(&Position::planar(e.x_min, e.y_min));
    let (x1, y0) = px(&Position::planar(e.x_max, e.y_max));
    let _ = write!(s, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#999"/>"##, x1 - x0, y1 - y0);
    for (i, l) in layouts.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for p in l.positions() {
            let (x, y) = px(p);
            let _ = write!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.5" fill="{color}"/>"#);
        }
        let _ = write!(s, r#"<text x="{PAD}" y="{}" font-size="12" fill="{color}">{}</text>"#, PAD + 14.0 * i as f64, l.kind());
    }
    s.push_str("</svg>\n");
    s
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = single_clip_config(&args.common)?;
    let seed = cfg.seed()?;
    let layout = resolve_layout(&args.layout, &cfg)?;
    let fs = cfg.stft.sample_rate;
    let (source, clip_id) = match &args.source {
        Some(p) => {
            let audio = read_wav(p)?;
            if audio.n_channels() != 1 || audio.sample_rate != fs {
                return Err(Error::Data(format!(
                    "{}: need mono audio at {fs} Hz, found {} channels at {} Hz",
                    p.display(),
                    audio.n_channels(),
                    audio.sample_rate
                ))
                .into());
            }
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("source").to_string();
            (audio.channels.into_iter().next().unwrap_or_default(), id)
        }
        None => (synth_clip(args.class, 0, 1, cfg.corpus.clip_seconds, fs, seed)?, format!("c{:02}", args.class)),
    };
    let position = match args.position {
        Some([x, y]) => Position::planar(x, y),
        None => source_position(&cfg, std::slice::from_ref(&layout), &clip_id)?,
    };
    let record = ClipRecord { clip_id, path: PathBuf::new(), label: args.class, fold: 0 };
    let scene = realize(&cfg, &layout, &source, position, &record)
        .map_err(|e| if let Error::InvalidArgument(m) = e { Error::Data(m) } else { e })?;

    let out = &args.out;
    create_dir(out)?;
    let fmt: WavFormat = args.format.into();
    write_wav(out.join("clean.wav"), &scene.clean.samples, fs, fmt)?;
    write_wav(out.join("degraded.wav"), &scene.degraded.samples, fs, fmt)?;
    write_spectrogram(&out.join("clean.tensor"), &scene.clean.spectrogram)?;
    write_spectrogram(&out.join("degraded.tensor"), &scene.degraded.spectrogram)?;
    write_spectrogram(&out.join("noise.tensor"), &scene.degraded.noise)?;
    write_json(out.join("metadata.json"), &scene.metadata)?;
    layout.write_csv(out.join("layout.csv"))?;
    let m = &scene.metadata;
    println!(
        "source at ({:.2}, {:.2}) m; {} of {} channels below τ = {} dB",
        m.source_position.x,
        m.source_position.y,
        m.degraded.len(),
        m.n_channels(),
        m.tau
    );
    Ok(())
}

pub fn inpaint_cmd(args: &InpaintArgs) -> Result<()> {
    let cfg = single_clip_config(&args.common)?;
    let layout = resolve_layout(&args.layout, &cfg)?;
    let input = read_input(&args.input, &cfg.stft)?;
    check_channels(&input, &layout)?;
    create_dir(&args.out)?;
    let len = input.samples.as_ref().and_then(|s| s.first()).map(Vec::len);

    if let Some(oracle) = args.oracle {
        let meta_path = args
            .metadata
            .as_ref()
            .ok_or_else(|| Error::Config("--oracle needs --metadata".into()))?;
        let meta = read_metadata(meta_path, &layout)?;
        let (name, spec, audio) = match oracle {
            Oracle::Beamform => {
                let opts = DelayAndSumOptions { amplitude_compensation: cfg.dns_amplitude_comp };
                let c = cfg.speed_of_sound;
                match &input.samples {
                    Some(s) => {
                        let y = delay_and_sum(s, &layout, &meta.source_position, c, cfg.stft.sample_rate, &opts)?;
                        let spec = stft_channels(&[&y], &cfg.stft, SpectrogramRole::Inpainted)?;
                        ("beamform", spec, vec![y])
                    }
                    None => {
                        let spec = delay_and_sum_spectral(&input.spec, &layout, &meta.source_position, c, &opts)?;
                        let y = istft(&spec, &cfg.stft, None)?;
                        ("beamform", spec, y)
                    }
                }
            }
            Oracle::Maxsnr => {
                let n = max_snr_channel(&meta.mu).ok_or_else(|| Error::Data("metadata has no SNRs".into()))?;
                let spec = input.spec.select_channels(&[n])?;
                let y = match &input.samples {
                    Some(s) => vec![s[n].clone()],
                    None => istft(&spec, &cfg.stft, None)?,
                };
                println!("max-SNR channel {n} (μ = {:.2} dB)", meta.mu[n]);
                ("maxsnr", spec, y)
            }
        };
        write_spectrogram(&args.out.join(format!("{name}.tensor")), &spec)?;
        write_wav(args.out.join(format!("{name}.wav")), &audio, cfg.stft.sample_rate, args.format.into())?;
        return Ok(());
    }

    let grid = cfg.grid()?;
    let c = cfg.speed_of_sound;
    let (out, energy) = match &args.operator_cache {
        Some(path) => {
            let op = if path.exists() {
                PropagationOperator::load(path, &layout, &grid, &cfg.stft, c)?
            } else {
                let op = build_operator(&layout, &grid, &cfg.stft, c)?;
                op.save(path)?;
                op
            };
            run_inpaint(&input.spec, &op, args, &cfg)?
        }
        None => run_inpaint(&input.spec, &LazyOperator::new(&layout, &grid, &cfg.stft, c)?, args, &cfg)?,
    };
    write_spectrogram(&args.out.join("inpainted.tensor"), &out)?;
    let audio = istft(&out, &cfg.stft, len)?;
    write_wav(args.out.join("inpainted.wav"), &audio, cfg.stft.sample_rate, args.format.into())?;
    write_energy_map_csv(args.out.join("energy.csv"), &grid, &energy)?;
    if let Some(j) = argmax(&energy) {
        let p = grid.points()[j];
        println!("energy peak at ({:.2}, {:.2}) m", p.x, p.y);
    }
    Ok(())
}

fn run_inpaint(
    y: &ComplexSpectrogram,
    op: &impl OperatorSlices,
    args: &InpaintArgs,
    cfg: &ExperimentConfig,
) -> Result<(ComplexSpectrogram, Vec<f64>)> {
    let out = inpaint(y, op, args.mode.into(), cfg.normalization)?;
    let energy = energy_map(y, op, EnergyNormalization::Illumination)?;
    Ok((out, energy))
}

pub fn features(args: &FeaturesArgs) -> Result<()> {
    let cfg = single_clip_config(&args.common)?;
    let input = read_input(&args.input, &cfg.stft)?;
    let fx = FeatureExtractor::new(&cfg)?;
    let lm = fx.log_mel(&input.spec).map_err(data_if_invalid)?;
    let (tokens, mel_positions) = fx.tokens(&input.spec).map_err(data_if_invalid)?;
    let v = FeatureExtractor::vector(&tokens, mel_positions);
    create_dir(&args.out)?;
    let prov = Provenance { config_hash: cfg.config_hash(), seed: cfg.seed()? };
    let meta = [("config_hash", prov.config_hash.clone()), ("seed", prov.seed.to_string())];
    tensor::write(args.out.join("logmel.tensor"), &lm.data().clone().into_dyn(), &["channel", "mel", "frame"], &meta)?;
    tensor::write(args.out.join("tokens.tensor"), &tokens.tokens().clone().into_dyn(), &["channel", "patch", "dim"], &meta)?;

    #[derive(Serialize)]
    struct Row {
        index: usize,
        value: f64,
    }
    let rows: Vec<Row> = v.iter().enumerate().map(|(index, &value)| Row { index, value }).collect();
    dmas_core::harness::write_rows(args.out.join("vector.csv"), "feature_vector", &prov, &rows)?;
    let (c, k, t) = lm.dim();
    println!("log-mel {c} × {k} × {t}; {} tokens per channel; vector length {}", tokens.dim().1, v.len());
    Ok(())
}

/// Too-short clips surface as invalid arguments inside the DSP code; for a
/// file given on the command line they are bad data.
fn data_if_invalid(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Data(m),
        other => other,
    }
}

pub fn weights(args: &WeightsArgs) -> Result<()> {
    let cfg = single_clip_config(&args.common)?;
    let layout = resolve_layout(&args.layout, &cfg)?;
    let input = read_input(&args.input, &cfg.stft)?;
    check_channels(&input, &layout)?;
    let meta = args.metadata.as_deref().map(|p| read_metadata(p, &layout)).transpose()?;
    let fx = FeatureExtractor::new(&cfg)?;
    let (tokens, _) = fx.tokens(&input.spec).map_err(data_if_invalid)?;
    let w = spatial_weights(&tokens);
    let selected = scaling_sparsemax(w.values(), args.sparsemax_scale)?;

    #[derive(Serialize)]
    struct Row {
        channel: usize,
        x: f64,
        y: f64,
        weight: f64,
        sparsemax: f64,
        mu: Option<f64>,
        distance: Option<f64>,
    }
    let distances = meta.as_ref().map(|m| layout.distances_to(&m.source_position));
    let rows: Vec<Row> = layout
        .positions()
        .iter()
        .enumerate()
        .map(|(n, p)| Row {
            channel: n,
            x: p.x,
            y: p.y,
            weight: w.values()[n],
            sparsemax: selected.values()[n],
            mu: meta.as_ref().map(|m| m.mu[n]),
            distance: distances.as_ref().map(|d| d[n]),
        })
        .collect();
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let prov = Provenance { config_hash: cfg.config_hash(), seed: cfg.seed()? };
    dmas_core::harness::write_rows(&args.out, "channel_weights", &prov, &rows)?;
    let support = selected.values().iter().filter(|&&v| v > 0.0).count();
    println!("sparsemax keeps {support} of {} channels", layout.len());
    if let Some(m) = &meta {
        match correlation_report(w.values(), m, &layout) {
            Ok(r) => println!("corr(weight, snr) = {:.3}; corr(weight, distance) = {:.3}", r.corr_snr, r.corr_distance),
            Err(e) => println!("correlations undefined: {e}"),
        }
    }
    Ok(())
}

pub fn experiment(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let out = run_experiment(&cfg)?;
    eprintln!("wrote {}", out.dir.display());
    print!("{}", render_report(&out.dir)?);
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    if args.replot {
        emit_plots(
            args.dir.join("results"),
            args.dir.join("plots"),
            &PlotOptions { histogram_bins: args.histogram_bins, svg: args.svg },
        )?;
    }
    print!("{}", render_report(&args.dir)?);
    Ok(())
}

/// Accuracy matrices per variant and the per-test-layout summary. Refuses
/// directories whose result files disagree on provenance.
fn render_report(dir: &Path) -> Result<String> {
    let results = dir.join("results");
    let mut prov: Option<Provenance> = None;
    for kind in RESULT_FILES {
        let path = results.join(format!("{kind}.csv"));
        if !path.exists() {
            return Err(Error::Data(format!("missing {}", path.display())).into());
        }
        let (_, p) = Provenance::read_from(&path)?;
        match &prov {
            Some(first) if *first != p => {
                return Err(Error::Data(format!("{} comes from a different run", path.display())).into())
            }
            _ => prov = Some(p),
        }
    }
    let prov = prov.expect("at least one result file");
    let acc: Vec<AccuracyRow> = read_rows(results.join("accuracy.csv"))?;
    let summary: Vec<SummaryRow> = read_rows(results.join("summary.csv"))?;

    let mut s = format!("config {} seed {}\n", prov.config_hash, prov.seed);
    let mut by_variant: BTreeMap<_, Vec<&AccuracyRow>> = BTreeMap::new();
    for r in &acc {
        by_variant.entry(r.variant).or_default().push(r);
    }
    for (variant, rows) in by_variant {
        let mut tests: Vec<LayoutKind> = rows.iter().map(|r| r.test_layout).collect();
        let mut trains: Vec<LayoutKind> = rows.iter().map(|r| r.train_layout).collect();
        for v in [&mut tests, &mut trains] {
            v.sort_by_key(|k| k.as_str());
            v.dedup();
        }
        let _ = writeln!(s, "\n{variant} accuracy % (rows train, columns test)");
        let _ = write!(s, "{:>12}", "");
        for t in &tests {
            let _ = write!(s, " {:>12}", t.as_str());
        }
        s.push('\n');
        for tr in &trains {
            let _ = write!(s, "{:>12}", tr.as_str());
            for te in &tests {
                match rows.iter().find(|r| r.train_layout == *tr && r.test_layout == *te) {
                    Some(r) => {
                        let _ = write!(s, " {:>12.2}", r.accuracy_percent);
                    }
                    None => {
                        let _ = write!(s, " {:>12}", "-");
                    }
                }
            }
            s.push('\n');
        }
    }
    let _ = writeln!(s, "\n{:<16} {:>12} {:>12} {:>14}", "variant", "test", "accuracy %", "snr gain dB");
    for r in &summary {
        let _ = writeln!(
            s,
            "{:<16} {:>12} {:>12.2} {:>14.2}",
            r.variant.as_str(),
            r.test_layout.as_str(),
            r.accuracy_percent_mean,
            r.snr_gain_db_mean
        );
    }
    Ok(s)
}

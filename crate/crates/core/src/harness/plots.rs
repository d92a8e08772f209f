//! Plot data derived from a results directory: channel–source distance
//! histograms, weight-vs-SNR scatter and weight heatmaps, with optional SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::output::{create_dir, read_rows, write_rows, Provenance};
use super::pipeline::{ChannelRow, WeightRow};
use crate::geometry::LayoutKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotOptions {
    pub histogram_bins: usize,
    pub svg: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { histogram_bins: 20, svg: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummaryRow {
    pub layout: LayoutKind,
    pub n: usize,
    pub mean_m: f64,
    pub median_m: f64,
    pub min_m: f64,
    pub max_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub variant: String,
    pub layout: LayoutKind,
    pub clip_id: String,
    pub channel: usize,
    pub mu: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub variant: String,
    pub layout: LayoutKind,
    pub clip_id: String,
    pub channel: usize,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Counts per layout, one per bin.
    pub counts: BTreeMap<LayoutKind, Vec<u64>>,
}

/// Histogram over `[0, max]` shared by all layouts; the last bin is closed.
pub fn distance_histogram(distances: &BTreeMap<LayoutKind, Vec<f64>>, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let max = distances.values().flatten().copied().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let counts = distances
        .iter()
        .map(|(k, d)| {
            let mut c = vec![0u64; bins];
            for &v in d {
                c[((v / width) as usize).min(bins - 1)] += 1;
            }
            (*k, c)
        })
        .collect();
    Ok(Histogram { edges, counts })
}

pub fn distance_summary(layout: LayoutKind, d: &[f64]) -> DistanceSummaryRow {
    let mut s = d.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 0 {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    } else {
        s[n / 2]
    };
    DistanceSummaryRow {
        layout,
        n,
        mean_m: s.iter().sum::<f64>() / n as f64,
        median_m: median,
        min_m: s.first().copied().unwrap_or(f64::NAN),
        max_m: s.last().copied().unwrap_or(f64::NAN),
    }
}

/// Paths of the files [`emit_plots`] wrote.
#[derive(Debug, Clone, Default)]
pub struct PlotFiles {
    pub csv: Vec<PathBuf>,
    pub svg: Vec<PathBuf>,
}

/// Reads `channels.csv` and `weights.csv` from `results` and writes plot data
/// into `out`, stamped with the results' provenance.
pub fn emit_plots(results: impl AsRef<Path>, out: impl AsRef<Path>, opts: &PlotOptions) -> Result<PlotFiles> {
    let results = results.as_ref();
    let out = out.as_ref();
    let channels_path = results.join("channels.csv");
    let weights_path = results.join("weights.csv");
    for p in [&channels_path, &weights_path] {
        if !p.exists() {
            return Err(Error::Data(format!("missing results file {}", p.display())));
        }
    }
    let (_, prov) = Provenance::read_from(&channels_path)?;
    let channels: Vec<ChannelRow> = read_rows(&channels_path)?;
    let weights: Vec<WeightRow> = read_rows(&weights_path)?;
    create_dir(out)?;
    let mut files = PlotFiles::default();

    let mut distances: BTreeMap<LayoutKind, Vec<f64>> = BTreeMap::new();
    for c in &channels {
        distances.entry(c.layout).or_default().push(c.distance);
    }
    let hist = distance_histogram(&distances, opts.histogram_bins)?;
    let p = out.join("distance_histogram.csv");
    let mut w = super::output::create_csv(&p, "distance_histogram", &prov)?;
    let mut header = vec!["bin_low_m".to_string(), "bin_high_m".to_string()];
    header.extend(hist.counts.keys().map(|k| k.as_str().to_string()));
    w.write_record(&header)?;
    for b in 0..opts.histogram_bins {
        let mut row = vec![hist.edges[b].to_string(), hist.edges[b + 1].to_string()];
        row.extend(hist.counts.values().map(|c| c[b].to_string()));
        w.write_record(&row)?;
    }
    super::output::finish_csv(w, &p)?;
    files.csv.push(p);

    let summary: Vec<DistanceSummaryRow> = distances.iter().map(|(k, d)| distance_summary(*k, d)).collect();
    let p = out.join("distance_summary.csv");
    write_rows(&p, "distance_summary", &prov, &summary)?;
    files.csv.push(p);

    let scatter: Vec<ScatterRow> = weights
        .iter()
        .map(|r| ScatterRow {
            variant: r.variant.to_string(),
            layout: r.layout,
            clip_id: r.clip_id.clone(),
            channel: r.channel,
            mu: r.mu,
            weight: r.weight,
        })
        .collect();
    let p = out.join("weight_snr_scatter.csv");
    write_rows(&p, "weight_snr_scatter", &prov, &scatter)?;
    files.csv.push(p);

    let heat: Vec<HeatmapRow> = weights
        .iter()
        .map(|r| HeatmapRow {
            variant: r.variant.to_string(),
            layout: r.layout,
            clip_id: r.clip_id.clone(),
            channel: r.channel,
            x: r.x,
            y: r.y,
            weight: r.weight,
        })
        .collect();
    let p = out.join("weight_heatmap.csv");
    write_rows(&p, "weight_heatmap", &prov, &heat)?;
    files.csv.push(p);

    if opts.svg {
        let items = [
            ("distance_histogram.svg", histogram_svg(&hist, &prov)),
            ("weight_snr_scatter.svg", scatter_svg(&scatter, &prov)),
            ("weight_heatmap.svg", heatmap_svg(&heat, &prov)),
        ];
        for (name, body) in items {
            let p = out.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            files.svg.push(p);
        }
    }
    Ok(files)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn svg_open(title: &str, prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, "<!-- config_hash={} seed={} -->", prov.config_hash, prov.seed);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} L{M} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    s
}

fn axis_labels(s: &mut String, x: &str, y: &str, xr: (f64, f64), yr: (f64, f64)) {
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y}</text>"#, H / 2.0, H / 2.0);
    let _ = writeln!(s, r#"<text x="{M}" y="{}" text-anchor="middle">{:.3}</text>"#, H - M + 14.0, xr.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#, W - M, H - M + 14.0, xr.1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, M - 4.0, H - M, yr.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, M - 4.0, M + 4.0, yr.1);
}

fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        0.5 * (a + b)
    }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn histogram_svg(h: &Histogram, prov: &Provenance) -> String {
    let mut s = svg_open("Channel-source distance", prov);
    let bins = h.edges.len() - 1;
    let ymax = h.counts.values().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let layers = h.counts.len().max(1) as f64;
    let bw = (W - 2.0 * M) / bins as f64;
    for (li, (k, c)) in h.counts.iter().enumerate() {
        let color = COLORS[li % COLORS.len()];
        for (b, &n) in c.iter().enumerate() {
            let hgt = n as f64 / ymax * (H - 2.0 * M);
            let x = M + b as f64 * bw + li as f64 * bw / layers;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{hgt:.2}" fill="{color}"/>"#,
                H - M - hgt,
                bw / layers
            );
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{k}</text>"#, W - M - 80.0, M + 14.0 * li as f64);
    }
    axis_labels(&mut s, "distance [m]", "count", (h.edges[0], h.edges[bins]), (0.0, ymax));
    s.push_str("</svg>\n");
    s
}

fn scatter_svg(rows: &[ScatterRow], prov: &Provenance) -> String {
    let mut s = svg_open("Spatial weight vs channel SNR", prov);
    let xr = range(rows.iter().map(|r| r.mu));
    let yr = range(rows.iter().map(|r| r.weight));
    let variants: Vec<&str> = {
        let mut v: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
        v.sort();
        v.dedup();
        v
    };
    for r in rows.iter().filter(|r| r.mu.is_finite() && r.weight.is_finite()) {
        let vi = variants.iter().position(|v| *v == r.variant).unwrap_or(0);
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{}" fill-opacity="0.5"/>"#,
            scale(r.mu, xr.0, xr.1, M, W - M),
            scale(r.weight, yr.0, yr.1, H - M, M),
            COLORS[vi % COLORS.len()]
        );
    }
    for (vi, v) in variants.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{}">{v}</text>"#, W - M - 100.0, M + 14.0 * vi as f64, COLORS[vi % COLORS.len()]);
    }
    axis_labels(&mut s, "channel SNR [dB]", "weight", xr, yr);
    s.push_str("</svg>\n");
    s
}

/// Heatmap of the first scene in the rows.
fn heatmap_svg(rows: &[HeatmapRow], prov: &Provenance) -> String {
    let Some(first) = rows.first() else {
        let mut s = svg_open("Spatial weights (no data)", prov);
        s.push_str("</svg>\n");
        return s;
    };
    let scene: Vec<&HeatmapRow> = rows
        .iter()
        .filter(|r| r.variant == first.variant && r.layout == first.layout && r.clip_id == first.clip_id)
        .collect();
    let title = format!("Spatial weights: {} / {} / {}", first.variant, first.layout, first.clip_id);
    let mut s = svg_open(&title, prov);
    let xr = range(scene.iter().map(|r| r.x));
    let yr = range(scene.iter().map(|r| r.y));
    let wr = range(scene.iter().map(|r| r.weight));
    let span = (xr.1 - xr.0).max(yr.1 - yr.0).max(1e-9);
    for r in &scene {
        let t = scale(r.weight, wr.0, wr.1, 0.0, 1.0);
        let red = (255.0 * t).round() as u8;
        let blue = (255.0 * (1.0 - t)).round() as u8;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="rgb({red},64,{blue})"/>"#,
            M + (r.x - xr.0) / span * (H - 2.0 * M),
            H - M - (r.y - yr.0) / span * (H - 2.0 * M)
        );
    }
    axis_labels(&mut s, "x [m]", "y [m]", xr, yr);
    s.push_str("</svg>\n");
    s
}

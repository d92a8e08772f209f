//! Sensor layouts, imaging grids and sensor–grid distances.
//!
//! All generated geometry lives on the `z = 0` plane; distances are still
//! Euclidean in 3D so custom layouts may use elevation.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Circular,
    Linear,
    RightAngle,
    Custom,
}

impl LayoutKind {
    pub const GENERATED: [LayoutKind; 3] =
        [LayoutKind::Circular, LayoutKind::Linear, LayoutKind::RightAngle];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutKind::Circular => "circular",
            LayoutKind::Linear => "linear",
            LayoutKind::RightAngle => "right_angle",
            LayoutKind::Custom => "custom",
        }
    }

    /// Anchor used when none is configured, for the default 50 m × 50 m field:
    /// circle centred on the field, line along `y = 25` from `x = 0.5`, and the
    /// right angle cornered at `(0.5, 0.5)` with arms along the field edges.
    pub fn default_anchor(&self) -> Position {
        match self {
            LayoutKind::Circular => Position::planar(25.0, 25.0),
            LayoutKind::Linear => Position::planar(0.5, 25.0),
            LayoutKind::RightAngle | LayoutKind::Custom => Position::planar(0.5, 0.5),
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circular" => Ok(LayoutKind::Circular),
            "linear" => Ok(LayoutKind::Linear),
            "right_angle" | "right-angle" => Ok(LayoutKind::RightAngle),
            "custom" => Ok(LayoutKind::Custom),
            other => Err(Error::invalid(format!("unknown layout kind `{other}`"))),
        }
    }
}

/// Ordered positions of the N sensing channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    kind: LayoutKind,
    positions: Vec<Position>,
}

impl SensorLayout {
    /// Builds a layout from explicit positions.
    pub fn custom(positions: Vec<Position>) -> Result<Self> {
        Self::with_kind(LayoutKind::Custom, positions)
    }

    fn with_kind(kind: LayoutKind, positions: Vec<Position>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("a layout needs at least one sensor"));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("sensor {i} has a non-finite coordinate")));
        }
        for (i, a) in positions.iter().enumerate() {
            for (j, b) in positions.iter().enumerate().skip(i + 1) {
                if a.distance(b) == 0.0 {
                    return Err(Error::invalid(format!("sensors {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { kind, positions })
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same sensors in a new order: sensor `i` of the result is `self[order[i]]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        Ok(Self {
            kind: self.kind,
            positions: order.iter().map(|&i| self.positions[i]).collect(),
        })
    }

    /// Distances from every sensor to `point`.
    pub fn distances_to(&self, point: &Position) -> Vec<f64> {
        self.positions.iter().map(|p| p.distance(point)).collect()
    }

    /// SHA-256 over kind and coordinate bits; stable across runs and platforms.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.as_str().as_bytes());
        for p in &self.positions {
            for v in p.as_array() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_positions_csv(path.as_ref(), &self.positions)
    }

    /// Reads an `index,x,y,z` CSV; the result is a custom layout.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::custom(read_positions_csv(path.as_ref())?)
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::mismatch("permutation length", n, order.len()));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("order is not a permutation"));
        }
    }
    Ok(())
}

/// Generates one of the standard layouts.
///
/// Circular layouts are centred on `anchor` with radius `N·spacing/(2π)` so
/// the arc between neighbours equals `spacing`. Linear layouts run along +x
/// from `anchor`. Right-angle layouts put `⌈N/2⌉` sensors along +x starting
/// at the corner and the rest along +y, the corner counted once.
pub fn make_layout(
    kind: LayoutKind,
    n_channels: usize,
    spacing: f64,
    anchor: Position,
) -> Result<SensorLayout> {
    if n_channels == 0 {
        return Err(Error::invalid("n_channels must be at least 1"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }
    if !anchor.is_finite() {
        return Err(Error::invalid("anchor must be finite"));
    }
    let n = n_channels;
    let positions = match kind {
        LayoutKind::Circular => {
            let radius = n as f64 * spacing / (2.0 * PI);
            (0..n)
                .map(|i| {
                    let theta = 2.0 * PI * i as f64 / n as f64;
                    Position::new(
                        anchor.x + radius * theta.cos(),
                        anchor.y + radius * theta.sin(),
                        anchor.z,
                    )
                })
                .collect()
        }
        LayoutKind::Linear => (0..n)
            .map(|i| Position::new(anchor.x + i as f64 * spacing, anchor.y, anchor.z))
            .collect(),
        LayoutKind::RightAngle => {
            let x_arm = n.div_ceil(2);
            let mut v: Vec<Position> = (0..x_arm)
                .map(|i| Position::new(anchor.x + i as f64 * spacing, anchor.y, anchor.z))
                .collect();
            v.extend((1..=n - x_arm).map(|i| {
                Position::new(anchor.x, anchor.y + i as f64 * spacing, anchor.z)
            }));
            v
        }
        LayoutKind::Custom => {
            return Err(Error::invalid(
                "custom layouts are built from explicit positions, not generated",
            ))
        }
    };
    SensorLayout::with_kind(kind, positions)
}

/// Axis-aligned rectangle on the `z = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub const fn square(min: f64, max: f64) -> Self {
        Self::new(min, max, min, max)
    }

    /// Min ≤ max per axis; a collapsed axis is allowed.
    pub fn validate(&self) -> Result<()> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("extent must be finite"));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::invalid(format!("extent has min > max: {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn center(&self) -> Position {
        Position::planar(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

impl Default for Extent {
    fn default() -> Self {
        Extent::square(0.0, 50.0)
    }
}

/// Draws a source position uniformly over `extent`, at `z = 0`.
pub fn sample_source<R: Rng + ?Sized>(rng: &mut R, extent: &Extent) -> Result<Position> {
    extent.validate()?;
    let x = extent.x_min + (extent.x_max - extent.x_min) * rng.random::<f64>();
    let y = extent.y_min + (extent.y_max - extent.y_min) * rng.random::<f64>();
    Ok(Position::planar(x, y))
}

/// Planar imaging grid with inclusive endpoints, enumerated row-major
/// (y outer, x inner): `j = iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    extent: Extent,
    spacing: f64,
    nx: usize,
    ny: usize,
    points: Vec<Position>,
}

impl ImagingGrid {
    pub fn new(extent: Extent, spacing: f64) -> Result<Self> {
        extent.validate()?;
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        let steps = |lo: f64, hi: f64| ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
        let nx = steps(extent.x_min, extent.x_max);
        let ny = steps(extent.y_min, extent.y_max);
        let points = (0..ny)
            .flat_map(|iy| {
                (0..nx).map(move |ix| {
                    Position::planar(
                        extent.x_min + ix as f64 * spacing,
                        extent.y_min + iy as f64 * spacing,
                    )
                })
            })
            .collect();
        Ok(Self { extent, spacing, nx, ny, points })
    }

    pub fn points(&self) -> &[Position] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Singularity guard for the Green's kernel: half a grid cell.
    pub fn r_min(&self) -> f64 {
        0.5 * self.spacing
    }

    pub fn index_of(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// `(ix, iy)` of flat index `j`.
    pub fn cell_of(&self, j: usize) -> (usize, usize) {
        (j % self.nx, j / self.nx)
    }

    /// Flat index of the grid point closest to `p` (ties resolved toward lower indices).
    pub fn nearest(&self, p: &Position) -> usize {
        let snap = |v: f64, lo: f64, n: usize| {
            (((v - lo) / self.spacing).round().max(0.0) as usize).min(n - 1)
        };
        self.index_of(snap(p.x, self.extent.x_min, self.nx), snap(p.y, self.extent.y_min, self.ny))
    }

    /// Chebyshev distance in cells between two grid indices.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.cell_of(a);
        let (bx, by) = self.cell_of(b);
        ax.abs_diff(bx).max(ay.abs_diff(by))
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.extent.x_min, self.extent.x_max, self.extent.y_min, self.extent.y_max, self.spacing] {
            h.update(v.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_positions_csv(path.as_ref(), &self.points)
    }
}

/// Sensor–grid distances, clamped below at `r_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    r: Array2<f64>,
    r_min: f64,
}

impl DistanceMatrix {
    /// `N × J` distances in metres.
    pub fn values(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.r[[n, j]]
    }

    pub fn dim(&self) -> (usize, usize) {
        self.r.dim()
    }
}

/// `r[n][j] = max(‖s_n − g_j‖₂, r_min)` with `r_min` = half the grid spacing.
pub fn distance_matrix(layout: &SensorLayout, grid: &ImagingGrid) -> DistanceMatrix {
    distances_with_floor(layout.positions(), grid.points(), grid.r_min())
}

pub(crate) fn distances_with_floor(
    sensors: &[Position],
    points: &[Position],
    r_min: f64,
) -> DistanceMatrix {
    let r = Array2::from_shape_fn((sensors.len(), points.len()), |(n, j)| {
        sensors[n].distance(&points[j]).max(r_min)
    });
    DistanceMatrix { r, r_min }
}

/// Human-readable description of a layout plus its imaging grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub kind: LayoutKind,
    pub n_channels: usize,
    #[serde(default = "default_spacing")]
    pub spacing_m: f64,
    #[serde(default)]
    pub anchor_xyz: Option<[f64; 3]>,
    #[serde(default)]
    pub extent: Extent,
    #[serde(default = "default_spacing")]
    pub grid_spacing_m: f64,
}

fn default_spacing() -> f64 {
    1.0
}

impl LayoutConfig {
    pub fn new(kind: LayoutKind, n_channels: usize) -> Self {
        Self {
            kind,
            n_channels,
            spacing_m: 1.0,
            anchor_xyz: None,
            extent: Extent::default(),
            grid_spacing_m: 1.0,
        }
    }

    pub fn anchor(&self) -> Position {
        self.anchor_xyz
            .map(|[x, y, z]| Position::new(x, y, z))
            .unwrap_or_else(|| self.kind.default_anchor())
    }

    pub fn layout(&self) -> Result<SensorLayout> {
        make_layout(self.kind, self.n_channels, self.spacing_m, self.anchor())
    }

    pub fn grid(&self) -> Result<ImagingGrid> {
        ImagingGrid::new(self.extent, self.grid_spacing_m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn write_positions_csv(path: &Path, positions: &[Position]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "x", "y", "z"])?;
    for (i, p) in positions.iter().enumerate() {
        w.write_record([i.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_positions_csv(path: &Path) -> Result<Vec<Position>> {
    #[derive(Deserialize)]
    struct Row {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
    }
    let mut rows: Vec<Row> = csv::Reader::from_path(path)?
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.index);
    if rows.iter().enumerate().any(|(i, r)| r.index != i) {
        return Err(Error::Data(format!("{}: indices are not 0..N", path.display())));
    }
    Ok(rows.into_iter().map(|r| Position::new(r.x, r.y, r.z)).collect())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

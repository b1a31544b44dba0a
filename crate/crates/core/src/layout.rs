//! Physical and pixel-space description of the marker array.
//!
//! A [`MarkerLayout`] fixes the marker count, the grid pitch, the sensor
//! extent and the fabrication position of every marker in pixels. Marker ids
//! are indices into [`MarkerLayout::initial_positions`] (row-major for grids
//! built by [`canonical_layout`]).
//!
//! Layouts persist as TOML; see [`MarkerLayout::to_toml`] and the format notes
//! in `docs/formats.md`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;

/// Current version written into layout and manifest files.
pub const LAYOUT_FORMAT_VERSION: u32 = 1;

/// Tolerance used when comparing generated grid distances.
const SPACING_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStyle {
    /// Dark inner disk inside a contrasting outer ring.
    Keyline,
    /// A single filled disk.
    Solid,
}

impl fmt::Display for MarkerStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkerStyle::Keyline => f.write_str("keyline"),
            MarkerStyle::Solid => f.write_str("solid"),
        }
    }
}

/// Printed marker shape in millimetres and its two ink intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerGeometry {
    pub style: MarkerStyle,
    pub r_in_mm: f64,
    /// Equal to `r_in_mm` for solid markers.
    pub r_out_mm: f64,
    pub inner_color: f64,
    pub outer_color: f64,
}

impl MarkerGeometry {
    /// Black 0.6 mm disk inside a white 1.0 mm ring.
    pub fn keyline() -> Self {
        Self {
            style: MarkerStyle::Keyline,
            r_in_mm: 0.6,
            r_out_mm: 1.0,
            inner_color: 0.0,
            outer_color: 1.0,
        }
    }

    /// Black 0.6 mm disk without a ring.
    pub fn solid() -> Self {
        Self {
            style: MarkerStyle::Solid,
            r_in_mm: 0.6,
            r_out_mm: 0.6,
            inner_color: 0.0,
            outer_color: 0.0,
        }
    }

    pub fn for_style(style: MarkerStyle) -> Self {
        match style {
            MarkerStyle::Keyline => Self::keyline(),
            MarkerStyle::Solid => Self::solid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.inner_color) || !in_unit(self.outer_color) {
            return Err(Error::InvalidGeometry(format!(
                "ink intensities must lie in [0, 1], got inner {} outer {}",
                self.inner_color, self.outer_color
            )));
        }
        if !(self.r_in_mm > 0.0 && self.r_in_mm.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "inner radius must be positive, got {}",
                self.r_in_mm
            )));
        }
        match self.style {
            MarkerStyle::Keyline => {
                if !(self.r_out_mm > self.r_in_mm && self.r_out_mm.is_finite()) {
                    return Err(Error::InvalidGeometry(format!(
                        "keyline needs r_in < r_out, got {} and {}",
                        self.r_in_mm, self.r_out_mm
                    )));
                }
                if self.inner_color == self.outer_color {
                    return Err(Error::InvalidGeometry(
                        "keyline inner and outer colors must differ".into(),
                    ));
                }
            }
            MarkerStyle::Solid => {
                if self.r_out_mm != self.r_in_mm {
                    return Err(Error::InvalidGeometry(format!(
                        "solid marker must have r_out == r_in, got {} and {}",
                        self.r_in_mm, self.r_out_mm
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Immutable description of the marker array.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerLayout {
    format_version: u32,
    n_markers: usize,
    spacing_mm: f64,
    sensor_size_mm: [f64; 2],
    px_per_mm: f64,
    initial_positions_px: Vec<Point2>,
    geometry: MarkerGeometry,
}

#[derive(Deserialize)]
struct LayoutFile {
    format_version: u32,
    n_markers: usize,
    spacing_mm: f64,
    sensor_size_mm: [f64; 2],
    px_per_mm: f64,
    initial_positions_px: Vec<Point2>,
    geometry: MarkerGeometry,
}

impl<'de> Deserialize<'de> for MarkerLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = LayoutFile::deserialize(d)?;
        if f.format_version != LAYOUT_FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!(
                "unsupported layout format_version {}",
                f.format_version
            )));
        }
        if f.n_markers != f.initial_positions_px.len() {
            return Err(serde::de::Error::custom(format!(
                "n_markers = {} but {} positions listed",
                f.n_markers,
                f.initial_positions_px.len()
            )));
        }
        MarkerLayout::new(
            f.spacing_mm,
            f.sensor_size_mm,
            f.px_per_mm,
            f.initial_positions_px,
            f.geometry,
        )
        .map_err(serde::de::Error::custom)
    }
}

impl MarkerLayout {
    /// Builds a layout from explicit positions, checking every invariant.
    pub fn new(
        spacing_mm: f64,
        sensor_size_mm: [f64; 2],
        px_per_mm: f64,
        initial_positions_px: Vec<Point2>,
        geometry: MarkerGeometry,
    ) -> Result<Self> {
        geometry.validate()?;
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(Error::InvalidLayout(format!(
                "spacing_mm must be positive, got {spacing_mm}"
            )));
        }
        if !(px_per_mm > 0.0 && px_per_mm.is_finite()) {
            return Err(Error::InvalidLayout(format!(
                "px_per_mm must be positive, got {px_per_mm}"
            )));
        }
        if !sensor_size_mm.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidLayout(format!(
                "sensor size must be positive, got {sensor_size_mm:?}"
            )));
        }
        if initial_positions_px.is_empty() {
            return Err(Error::InvalidLayout("layout has no markers".into()));
        }
        let layout = Self {
            format_version: LAYOUT_FORMAT_VERSION,
            n_markers: initial_positions_px.len(),
            spacing_mm,
            sensor_size_mm,
            px_per_mm,
            initial_positions_px,
            geometry,
        };
        let (width, height) = layout.frame_size();
        for (marker, p) in layout.initial_positions_px.iter().enumerate() {
            if !point_in_frame(*p, width, height) {
                return Err(Error::GridOutOfBounds {
                    marker,
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
        }
        if let Some(d) = min_pairwise_distance(&layout.initial_positions_px) {
            if d < layout.spacing_px() - SPACING_EPS * layout.spacing_px().max(1.0) {
                return Err(Error::InvalidLayout(format!(
                    "minimum marker distance {d:.6} px is below the declared pitch {:.6} px",
                    layout.spacing_px()
                )));
            }
        }
        Ok(layout)
    }

    /// The 8x8, 3.5 mm pitch array centred on a 40 mm square elastomer at
    /// 10 px/mm.
    pub fn default_grid(style: MarkerStyle) -> Self {
        let spacing_mm = 3.5;
        let px_per_mm = 10.0;
        let sensor = [40.0, 40.0];
        let span = 7.0 * spacing_mm * px_per_mm;
        let origin = Point2::new(
            (sensor[0] * px_per_mm - span) / 2.0,
            (sensor[1] * px_per_mm - span) / 2.0,
        );
        canonical_layout(
            8,
            8,
            spacing_mm,
            px_per_mm,
            origin,
            sensor,
            MarkerGeometry::for_style(style),
        )
        .expect("default grid is valid")
    }

    pub fn n_markers(&self) -> usize {
        self.n_markers
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn spacing_px(&self) -> f64 {
        self.spacing_mm * self.px_per_mm
    }

    pub fn px_per_mm(&self) -> f64 {
        self.px_per_mm
    }

    pub fn sensor_size_mm(&self) -> [f64; 2] {
        self.sensor_size_mm
    }

    /// Frame size in pixels, `(width, height)`.
    pub fn frame_size(&self) -> (usize, usize) {
        (
            (self.sensor_size_mm[0] * self.px_per_mm).round() as usize,
            (self.sensor_size_mm[1] * self.px_per_mm).round() as usize,
        )
    }

    pub fn initial_positions(&self) -> &[Point2] {
        &self.initial_positions_px
    }

    pub fn geometry(&self) -> &MarkerGeometry {
        &self.geometry
    }

    pub fn r_in_px(&self) -> f64 {
        self.geometry.r_in_mm * self.px_per_mm
    }

    pub fn r_out_px(&self) -> f64 {
        self.geometry.r_out_mm * self.px_per_mm
    }

    /// Same positions with a different marker geometry.
    pub fn with_geometry(&self, geometry: MarkerGeometry) -> Result<Self> {
        Self::new(
            self.spacing_mm,
            self.sensor_size_mm,
            self.px_per_mm,
            self.initial_positions_px.clone(),
            geometry,
        )
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("layout serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::Format(format!("layout file: {e}")))?;
        check_version(&value)?;
        toml::from_str(text).map_err(|e| Error::Format(format!("layout file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn check_version(table: &toml::Table) -> Result<()> {
    match table.get("format_version").and_then(|v| v.as_integer()) {
        Some(v) if v == LAYOUT_FORMAT_VERSION as i64 => Ok(()),
        Some(v) => Err(Error::UnsupportedVersion {
            found: v as u32,
            expected: LAYOUT_FORMAT_VERSION,
        }),
        None => Err(Error::Format("missing format_version".into())),
    }
}

fn point_in_frame(p: Point2, width: usize, height: usize) -> bool {
    p.is_finite() && p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64
}

/// Smallest distance between any two points, `None` for fewer than two.
pub fn min_pairwise_distance(points: &[Point2]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.distance(*b);
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best
}

/// Row-major `rows x cols` grid at `origin_px + (j*s, i*s)` with
/// `s = spacing_mm * px_per_mm`.
pub fn canonical_layout(
    rows: usize,
    cols: usize,
    spacing_mm: f64,
    px_per_mm: f64,
    origin_px: Point2,
    sensor_size_mm: [f64; 2],
    geometry: MarkerGeometry,
) -> Result<MarkerLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidLayout(format!(
            "grid must be at least 1x1, got {rows}x{cols}"
        )));
    }
    if !(spacing_mm > 0.0) || !(px_per_mm > 0.0) {
        return Err(Error::InvalidLayout(format!(
            "spacing_mm and px_per_mm must be positive, got {spacing_mm} and {px_per_mm}"
        )));
    }
    let s = spacing_mm * px_per_mm;
    let positions = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| Point2::new(origin_px.x + j as f64 * s, origin_px.y + i as f64 * s)))
        .collect();
    MarkerLayout::new(spacing_mm, sensor_size_mm, px_per_mm, positions, geometry)
}

/// Outcome of one layout check.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail per layout invariant for a given frame and gate.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutReport {
    pub checks: Vec<LayoutCheck>,
}

impl LayoutReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LayoutCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for LayoutReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.checks.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Checks a layout against a frame size and an association gate.
///
/// The gate check fails when the pitch is not larger than the gate diameter,
/// since two markers could then claim the same detection.
pub fn validate_layout(layout: &MarkerLayout, frame_size: (usize, usize), gate_radius_px: f64) -> LayoutReport {
    let mut checks = Vec::with_capacity(4);
    let positions = layout.initial_positions();

    checks.push(LayoutCheck {
        name: "marker_count",
        passed: positions.len() == layout.n_markers() && !positions.is_empty(),
        detail: format!("{} positions for {} markers", positions.len(), layout.n_markers()),
    });

    let outside = positions
        .iter()
        .filter(|p| !point_in_frame(**p, frame_size.0, frame_size.1))
        .count();
    checks.push(LayoutCheck {
        name: "in_bounds",
        passed: outside == 0,
        detail: format!("{outside} markers outside {}x{} px", frame_size.0, frame_size.1),
    });

    let spacing_px = layout.spacing_px();
    let min_d = min_pairwise_distance(positions);
    checks.push(LayoutCheck {
        name: "grid_regularity",
        passed: min_d.map_or(true, |d| d >= spacing_px - SPACING_EPS * spacing_px.max(1.0)),
        detail: match min_d {
            Some(d) => format!("min distance {d:.3} px, pitch {spacing_px:.3} px"),
            None => "single marker".into(),
        },
    });

    let gate_ok = gate_radius_px > 0.0 && (positions.len() <= 1 || spacing_px > 2.0 * gate_radius_px);
    checks.push(LayoutCheck {
        name: "gate_ambiguity",
        passed: gate_ok,
        detail: format!(
            "pitch {spacing_px:.3} px vs gate diameter {:.3} px",
            2.0 * gate_radius_px
        ),
    });

    LayoutReport { checks }
}

/// Where a [`DeviationField`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    Unknown,
}

/// Per-marker true displacement in pixels, indexed by marker id.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationField {
    displacements: Vec<Point2>,
    provenance: Provenance,
}

impl DeviationField {
    pub fn new(displacements: Vec<Point2>, provenance: Provenance) -> Result<Self> {
        if let Some(i) = displacements.iter().position(|d| !d.is_finite()) {
            return Err(Error::ScenarioInvalid(format!(
                "non-finite displacement for marker {i}"
            )));
        }
        Ok(Self {
            displacements,
            provenance,
        })
    }

    pub fn zeros(n_markers: usize) -> Self {
        Self {
            displacements: vec![Point2::ZERO; n_markers],
            provenance: Provenance::Simulated,
        }
    }

    pub fn displacements(&self) -> &[Point2] {
        &self.displacements
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }
}

//! Synthetic sensor frames with known marker displacements.
//!
//! A [`Scenario`] describes a background (which may drift across the view
//! from frame to frame), a deformation applied to the markers, and the
//! imaging degradations. [`render_frame`] paints, in order: background, marker
//! disks at `x0 + displacement`, Gaussian blur, additive Gaussian noise, and
//! finally quantizes to 8-bit levels so that in-memory frames equal frames
//! read back from disk.
//!
//! Everything stochastic is seeded: background shapes from their own seeds,
//! per-frame pixel noise from `(seed, frame_index)`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::io::{write_image, write_truth, SequenceManifest, MANIFEST_FILE};
use crate::layout::{DeviationField, MarkerLayout, MarkerStyle, Provenance};
use crate::pipeline::{acquire_measurements, GrayFrame, PipelineConfig};
use crate::raster::Canvas;
use crate::tracker::DEFAULT_GATE_FRACTION;

/// Axis-aligned region in background (world) pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Scene behind the transparent skin. Layers paint over a white (1.0)
/// canvas in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Uniform {
        intensity: f64,
    },
    Checkerboard {
        cell_px: f64,
        i1: f64,
        i2: f64,
    },
    /// Dark letter-like glyphs on a cell grid; only the ink is painted.
    TextLike {
        seed: u64,
        /// Probability that a glyph cell holds a glyph.
        density: f64,
        ink: f64,
        region: Region,
    },
    /// Randomly placed disks.
    BlobClutter {
        seed: u64,
        count: usize,
        radius_min_px: f64,
        radius_max_px: f64,
        intensity: f64,
        region: Region,
    },
    /// Filled rectangle.
    Patch {
        region: Region,
        intensity: f64,
    },
    Layered {
        layers: Vec<Background>,
    },
}

const GLYPH_CELL: (f64, f64) = (36.0, 40.0);

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { center: Point2, radius: f64 },
}

impl Background {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, what: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::ScenarioInvalid(format!("{what} intensity {v} outside [0, 1]")))
            }
        };
        match self {
            Background::Uniform { intensity } => unit(*intensity, "uniform"),
            Background::Checkerboard { cell_px, i1, i2 } => {
                if !(*cell_px > 0.0) {
                    return Err(Error::ScenarioInvalid("checkerboard cell must be positive".into()));
                }
                unit(*i1, "checkerboard")?;
                unit(*i2, "checkerboard")
            }
            Background::TextLike { density, ink, .. } => {
                if !(0.0..=1.0).contains(density) {
                    return Err(Error::ScenarioInvalid(format!(
                        "glyph density {density} outside [0, 1]"
                    )));
                }
                unit(*ink, "ink")
            }
            Background::BlobClutter {
                radius_min_px,
                radius_max_px,
                intensity,
                ..
            } => {
                if !(*radius_min_px > 0.0 && radius_min_px <= radius_max_px) {
                    return Err(Error::ScenarioInvalid(format!(
                        "clutter radius range [{radius_min_px}, {radius_max_px}] is invalid"
                    )));
                }
                unit(*intensity, "clutter")
            }
            Background::Patch { intensity, .. } => unit(*intensity, "patch"),
            Background::Layered { layers } => layers.iter().try_for_each(Background::validate),
        }
    }

    /// True if the background contains distractor-generating layers.
    pub fn has_clutter(&self) -> bool {
        match self {
            Background::TextLike { .. } | Background::BlobClutter { .. } => true,
            Background::Layered { layers } => layers.iter().any(Background::has_clutter),
            _ => false,
        }
    }

    fn shapes(&self) -> Vec<Shape> {
        match self {
            Background::TextLike {
                seed, density, region, ..
            } => text_shapes(*seed, *density, region),
            Background::BlobClutter {
                seed,
                count,
                radius_min_px,
                radius_max_px,
                region,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| Shape::Disk {
                        center: Point2::new(
                            region.x0 + rng.random::<f64>() * region.width(),
                            region.y0 + rng.random::<f64>() * region.height(),
                        ),
                        radius: rng.random_range(*radius_min_px..=*radius_max_px),
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// Paints onto `canvas`, whose pixel `(0, 0)` sits at world `offset`.
    fn paint(&self, canvas: &mut Canvas, offset: Point2) {
        match self {
            Background::Uniform { intensity } => canvas.pixels.fill(*intensity as f32),
            Background::Checkerboard { cell_px, i1, i2 } => {
                let w = canvas.width;
                for (idx, p) in canvas.pixels.iter_mut().enumerate() {
                    let wx = (idx % w) as f64 + 0.5 + offset.x;
                    let wy = (idx / w) as f64 + 0.5 + offset.y;
                    let parity = ((wx / cell_px).floor() as i64 + (wy / cell_px).floor() as i64).rem_euclid(2);
                    *p = if parity == 0 { *i1 as f32 } else { *i2 as f32 };
                }
            }
            Background::Patch { region, intensity } => {
                canvas.fill_rect(
                    region.x0 - offset.x,
                    region.y0 - offset.y,
                    region.x1 - offset.x,
                    region.y1 - offset.y,
                    *intensity as f32,
                );
            }
            Background::TextLike { ink: color, .. } | Background::BlobClutter { intensity: color, .. } => {
                let (w, h) = (canvas.width as f64, canvas.height as f64);
                for shape in self.shapes() {
                    match shape {
                        Shape::Rect { x0, y0, x1, y1 } => {
                            let (x0, x1, y0, y1) = (x0 - offset.x, x1 - offset.x, y0 - offset.y, y1 - offset.y);
                            if x1 > 0.0 && y1 > 0.0 && x0 < w && y0 < h {
                                canvas.fill_rect(x0, y0, x1, y1, *color as f32);
                            }
                        }
                        Shape::Disk { center, radius } => {
                            let c = center - offset;
                            if c.x + radius > 0.0 && c.y + radius > 0.0 && c.x - radius < w && c.y - radius < h {
                                canvas.fill_disk(c, radius, *color as f32);
                            }
                        }
                    }
                }
            }
            Background::Layered { layers } => {
                for layer in layers {
                    layer.paint(canvas, offset);
                }
            }
        }
    }
}

/// Glyphs are a vertical stem with two horizontal bars (E/F/Z-like letters),
/// so each glyph is one connected stroke set larger than a marker disk, plus
/// an occasional small dot.
fn text_shapes(seed: u64, density: f64, region: &Region) -> Vec<Shape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (region.width() / GLYPH_CELL.0).floor().max(0.0) as usize;
    let rows = (region.height() / GLYPH_CELL.1).floor().max(0.0) as usize;
    let mut shapes = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            if rng.random::<f64>() >= density {
                continue;
            }
            let cx = region.x0 + col as f64 * GLYPH_CELL.0;
            let cy = region.y0 + row as f64 * GLYPH_CELL.1;
            let thick = rng.random_range(7.0..10.0);
            let stem = rng.random_range(24.0..30.0);
            let (x, y) = (cx + rng.random_range(1.0..4.0), cy + rng.random_range(1.0..4.0));
            shapes.push(Shape::Rect {
                x0: x,
                y0: y,
                x1: x + thick,
                y1: y + stem,
            });
            // Two distinct bar slots out of top, middle, bottom.
            let skip = rng.random_range(0..3usize);
            for slot in (0..3usize).filter(|s| *s != skip) {
                let bar = rng.random_range(18.0..24.0);
                let by = y + slot as f64 * (stem - thick) / 2.0;
                shapes.push(Shape::Rect {
                    x0: x,
                    y0: by,
                    x1: x + bar,
                    y1: by + thick,
                });
            }
            if rng.random::<f64>() < 0.3 {
                shapes.push(Shape::Disk {
                    center: Point2::new(x + 28.0, y + stem - 3.0),
                    radius: rng.random_range(2.0..3.0),
                });
            }
        }
    }
    shapes
}

/// Displacement pattern applied to the markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deformation {
    None,
    UniformShear {
        shift: Point2,
    },
    /// Radial push away from `center`, largest (`peak_px`) at distance
    /// `falloff_px` and vanishing at the centre and far away.
    RadialIndent {
        center: Point2,
        peak_px: f64,
        falloff_px: f64,
    },
    /// Explicit per-frame, per-marker displacements; ignores the envelope.
    Scripted {
        frames: Vec<Vec<Point2>>,
    },
}

impl Deformation {
    fn displacement(&self, frame_index: usize, marker: usize, x0: Point2, amplitude: f64) -> Point2 {
        match self {
            Deformation::None => Point2::ZERO,
            Deformation::UniformShear { shift } => *shift * amplitude,
            Deformation::RadialIndent {
                center,
                peak_px,
                falloff_px,
            } => {
                let d = x0 - *center;
                let r = d.norm();
                if r == 0.0 {
                    return Point2::ZERO;
                }
                let q = r / falloff_px;
                let magnitude = peak_px * q * (0.5 * (1.0 - q * q)).exp();
                d * (amplitude * magnitude / r)
            }
            Deformation::Scripted { frames } => frames[frame_index][marker],
        }
    }
}

/// Time profile scaling the deformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Constant,
    /// Zero until `start`, linear rise over `rise` frames, flat for `hold`,
    /// linear fall over `fall`, then zero.
    Trapezoid {
        start: usize,
        rise: usize,
        hold: usize,
        fall: usize,
    },
}

impl Envelope {
    pub fn amplitude(&self, frame_index: usize) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Trapezoid {
                start,
                rise,
                hold,
                fall,
            } => {
                let t = frame_index as f64;
                let (s, r, h, f) = (start as f64, rise as f64, hold as f64, fall as f64);
                if t < s {
                    0.0
                } else if t < s + r {
                    (t - s) / r
                } else if t < s + r + h {
                    1.0
                } else if t < s + r + h + f {
                    1.0 - (t - s - r - h) / f
                } else {
                    0.0
                }
            }
        }
    }
}

/// Complete, seeded description of a synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_frames: usize,
    pub seed: u64,
    pub fps: f64,
    /// Additive Gaussian noise std in intensity units.
    pub noise_std: f64,
    /// Gaussian blur sigma in pixels; 0 disables.
    pub blur_sigma_px: f64,
    /// World offset of the background added per frame.
    pub background_drift_px: Point2,
    /// Largest marker displacement the scenario may produce.
    pub displacement_bound_px: f64,
    pub envelope: Envelope,
    pub layout: MarkerLayout,
    pub background: Background,
    pub deformation: Deformation,
}

impl Scenario {
    /// Static markers on white, no blur or noise.
    pub fn new(layout: MarkerLayout, n_frames: usize) -> Self {
        let bound = DEFAULT_GATE_FRACTION * layout.spacing_px();
        Self {
            n_frames,
            seed: 0,
            fps: 120.0,
            noise_std: 0.0,
            blur_sigma_px: 0.0,
            background_drift_px: Point2::ZERO,
            displacement_bound_px: bound,
            envelope: Envelope::Constant,
            layout,
            background: Background::Uniform { intensity: 1.0 },
            deformation: Deformation::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::ScenarioInvalid("n_frames must be at least 1".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::ScenarioInvalid(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if !(self.noise_std >= 0.0 && self.blur_sigma_px >= 0.0) {
            return Err(Error::ScenarioInvalid("noise and blur must be non-negative".into()));
        }
        if !self.background_drift_px.is_finite() {
            return Err(Error::ScenarioInvalid("background drift must be finite".into()));
        }
        self.background.validate()?;
        if let Deformation::Scripted { frames } = &self.deformation {
            if frames.len() != self.n_frames {
                return Err(Error::ScenarioInvalid(format!(
                    "scripted deformation has {} frames, scenario has {}",
                    frames.len(),
                    self.n_frames
                )));
            }
            if let Some(i) = frames.iter().position(|f| f.len() != self.layout.n_markers()) {
                return Err(Error::ScenarioInvalid(format!(
                    "scripted frame {i} does not list {} markers",
                    self.layout.n_markers()
                )));
            }
        }
        for t in 0..self.n_frames {
            self.deviation_field(t)?;
        }
        Ok(())
    }

    /// Ground-truth displacements for one frame.
    pub fn deviation_field(&self, frame_index: usize) -> Result<DeviationField> {
        if frame_index >= self.n_frames {
            return Err(Error::ScenarioInvalid(format!(
                "frame {frame_index} out of range for {} frames",
                self.n_frames
            )));
        }
        let amplitude = self.envelope.amplitude(frame_index);
        let field: Vec<Point2> = self
            .layout
            .initial_positions()
            .iter()
            .enumerate()
            .map(|(i, &x0)| self.deformation.displacement(frame_index, i, x0, amplitude))
            .collect();
        let field = DeviationField::new(field, Provenance::Simulated)?;
        let max = field.max_magnitude();
        if max >= self.displacement_bound_px {
            return Err(Error::ScenarioInvalid(format!(
                "frame {frame_index}: displacement {max:.3} px reaches the bound {:.3} px",
                self.displacement_bound_px
            )));
        }
        Ok(field)
    }

    pub fn timestamp(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.fps
    }

    fn background_offset(&self, frame_index: usize) -> Point2 {
        self.background_drift_px * frame_index as f64
    }

    /// Background only, without markers, blur or noise.
    pub fn render_background(&self, frame_index: usize) -> Canvas {
        let (w, h) = self.layout.frame_size();
        let mut canvas = Canvas::filled(w, h, 1.0);
        self.background.paint(&mut canvas, self.background_offset(frame_index));
        canvas
    }

    /// Markers whose inner disk overlaps background darker than `tau`.
    pub fn dark_marker_sites(&self, frame_index: usize, tau: f32) -> Result<usize> {
        let field = self.deviation_field(frame_index)?;
        let bg = self.render_background(frame_index);
        let reach = self.layout.r_in_px() + 1.0;
        let count = self
            .layout
            .initial_positions()
            .iter()
            .zip(field.displacements())
            .filter(|(&x0, &d)| {
                let c = x0 + d;
                let x_lo = (c.x - reach).floor().max(0.0) as usize;
                let y_lo = (c.y - reach).floor().max(0.0) as usize;
                let x_hi = ((c.x + reach).ceil() as usize).min(bg.width);
                let y_hi = ((c.y + reach).ceil() as usize).min(bg.height);
                (y_lo..y_hi).any(|y| {
                    (x_lo..x_hi).any(|x| {
                        Point2::new(x as f64 + 0.5, y as f64 + 0.5).distance(c) <= reach
                            && bg.pixels[y * bg.width + x] < tau
                    })
                })
            })
            .count();
        Ok(count)
    }

    /// Blobs the pipeline finds in the bare background (distractor count).
    pub fn background_blob_count(&self, frame_index: usize, pipeline: &PipelineConfig) -> Result<usize> {
        let bg = self.render_background(frame_index);
        let frame = GrayFrame::new(bg.width, bg.height, bg.pixels, self.timestamp(frame_index))?;
        Ok(acquire_measurements(&frame, pipeline)?.len())
    }
}

/// Background conditions of one frame, measured without markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConditions {
    /// Blobs the pipeline finds in the bare background.
    pub clutter_blobs: usize,
    /// Markers whose inner disk overlaps background darker than `tau`.
    pub dark_marker_sites: usize,
}

impl FrameConditions {
    pub fn is_clutter(&self) -> bool {
        self.clutter_blobs > 0
    }

    pub fn is_dark(&self) -> bool {
        self.dark_marker_sites > 0
    }
}

impl Scenario {
    /// Conditions for every frame, in frame order.
    pub fn frame_conditions(&self, pipeline: &PipelineConfig) -> Result<Vec<FrameConditions>> {
        (0..self.n_frames)
            .into_par_iter()
            .map(|t| {
                Ok(FrameConditions {
                    clutter_blobs: self.background_blob_count(t, pipeline)?,
                    dark_marker_sites: self.dark_marker_sites(t, pipeline.tau)?,
                })
            })
            .collect()
    }
}

/// Renders one frame and returns it with the displacements actually used.
pub fn render_frame(scenario: &Scenario, frame_index: usize) -> Result<(GrayFrame, DeviationField)> {
    let field = scenario.deviation_field(frame_index)?;
    let layout = &scenario.layout;
    let mut canvas = scenario.render_background(frame_index);

    let geom = layout.geometry();
    let (r_in, r_out) = (layout.r_in_px(), layout.r_out_px());
    for (&x0, &d) in layout.initial_positions().iter().zip(field.displacements()) {
        let c = x0 + d;
        if geom.style == MarkerStyle::Keyline {
            canvas.fill_disk(c, r_out, geom.outer_color as f32);
        }
        canvas.fill_disk(c, r_in, geom.inner_color as f32);
    }

    canvas.gaussian_blur(scenario.blur_sigma_px);

    if scenario.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(frame_index as u64);
        let normal = Normal::new(0.0f32, scenario.noise_std as f32)
            .map_err(|e| Error::ScenarioInvalid(format!("noise distribution: {e}")))?;
        for p in &mut canvas.pixels {
            *p += normal.sample(&mut rng);
        }
    }

    let pixels = canvas
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect::<Vec<_>>();
    let frame = GrayFrame::from_u8(canvas.width, canvas.height, &pixels, scenario.timestamp(frame_index))?;
    Ok((frame, field))
}

/// Renders every frame, in parallel, in frame order.
pub fn render_sequence(scenario: &Scenario) -> Result<Vec<(GrayFrame, DeviationField)>> {
    scenario.validate()?;
    (0..scenario.n_frames)
        .into_par_iter()
        .map(|i| render_frame(scenario, i))
        .collect()
}

/// Writes numbered PNG frames, `truth.csv` and `manifest.toml` into
/// `out_dir`, creating it if needed.
pub fn write_sequence(scenario: &Scenario, out_dir: &Path) -> Result<SequenceManifest> {
    scenario.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = SequenceManifest::for_scenario(scenario);
    let truth: Vec<(usize, DeviationField)> = (0..scenario.n_frames)
        .into_par_iter()
        .map(|i| {
            let (frame, field) = render_frame(scenario, i)?;
            write_image(&out_dir.join(manifest.frame_name(i)), &frame)?;
            Ok((i, field))
        })
        .collect::<Result<_>>()?;

    let truth_path = out_dir.join(&manifest.truth_file);
    let file = File::create(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
    write_truth(BufWriter::new(file), &truth).map_err(|e| Error::io(&truth_path, e))?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Number of frames in the canned clutter benchmark.
pub const FIG4_FRAMES: usize = 200;

/// Canned clutter benchmark: glyph text, a dark label band and blob
/// distractors drift across the sensor while a radial indentation is pressed
/// in and released mid-sequence.
///
/// The background moves 8 px per frame. Text covers world x in [420, 1000),
/// the black band [620, 760), distractors [1000, 1900). The markers occupy
/// frame x in roughly [67, 333).
pub fn scenario_fig4(style: MarkerStyle) -> Scenario {
    let layout = MarkerLayout::default_grid(style);
    let (w, h) = layout.frame_size();
    let r_in = layout.r_in_px();
    let mut scenario = Scenario::new(layout, FIG4_FRAMES);
    scenario.seed = 4;
    scenario.noise_std = 0.02;
    scenario.blur_sigma_px = 0.8;
    scenario.background_drift_px = Point2::new(8.0, 0.0);
    scenario.background = Background::Layered {
        layers: vec![
            Background::Uniform { intensity: 0.9 },
            Background::TextLike {
                seed: 11,
                density: 0.6,
                ink: 0.05,
                region: Region::new(420.0, 16.0, 1000.0, h as f64 - 16.0),
            },
            Background::Patch {
                region: Region::new(620.0, 110.0, 760.0, 300.0),
                intensity: 0.03,
            },
            Background::BlobClutter {
                seed: 23,
                count: 160,
                radius_min_px: 0.5 * r_in,
                radius_max_px: 2.0 * r_in,
                intensity: 0.08,
                region: Region::new(1000.0, 0.0, 1900.0, h as f64),
            },
        ],
    };
    scenario.deformation = Deformation::RadialIndent {
        center: Point2::new(w as f64 / 2.0, h as f64 / 2.0),
        peak_px: 6.0,
        falloff_px: 60.0,
    };
    scenario.envelope = Envelope::Trapezoid {
        start: 60,
        rise: 20,
        hold: 60,
        fall: 20,
    };
    scenario
}

//! Measurement acquisition: grayscale conversion, dark thresholding and
//! connected-component blob extraction.
//!
//! Intensities are `f32` in `[0, 1]`. A pixel is "dark" when it is strictly
//! below the threshold `tau`. Components are 8-connected and reported in the
//! raster order of their first pixel. Centroids use pixel centres, so pixel
//! `(x, y)` contributes the point `(x + 0.5, y + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::layout::MarkerLayout;

/// Default dark threshold.
pub const DEFAULT_TAU: f32 = 0.35;
/// Area window bounds as multiples of the inner-disk area.
pub const AREA_MIN_FACTOR: f64 = 0.4;
pub const AREA_MAX_FACTOR: f64 = 2.5;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Lookup table from 8-bit code to intensity.
pub(crate) fn u8_to_unit(code: u8) -> f32 {
    code as f32 / 255.0
}

/// Single-channel frame with a capture timestamp in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    timestamp: f64,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, timestamp: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch {
                expected: "positive frame size".into(),
                got: format!("{width}x{height}"),
            });
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels ({width}x{height})", width * height),
                got: format!("{} pixels", pixels.len()),
            });
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format(format!(
                "pixel {i} has intensity {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp,
        })
    }

    /// Constant-intensity frame.
    pub fn filled(width: usize, height: usize, value: f32, timestamp: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            timestamp,
        }
    }

    /// 8-bit codes map linearly: `code / 255`.
    pub fn from_u8(width: usize, height: usize, codes: &[u8], timestamp: f64) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes ({width}x{height})", width * height),
                got: format!("{} bytes", codes.len()),
            });
        }
        let lut: Vec<f32> = (0..=255u8).map(u8_to_unit).collect();
        let pixels = codes.iter().map(|&c| lut[c as usize]).collect();
        Self::new(width, height, pixels, timestamp)
    }

    /// Nearest 8-bit code per pixel.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

/// Three-channel frame stored as separate R, G, B planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub r: Vec<f32>,
    pub g: Vec<f32>,
    pub b: Vec<f32>,
    pub timestamp: f64,
}

impl RgbFrame {
    /// Splits interleaved 8-bit RGB bytes into planes.
    pub fn from_interleaved_u8(width: usize, height: usize, bytes: &[u8], timestamp: f64) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes ({width}x{height}x3)", width * height * 3),
                got: format!("{} bytes", bytes.len()),
            });
        }
        let n = width * height;
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for px in bytes.chunks_exact(3) {
            r.push(u8_to_unit(px[0]));
            g.push(u8_to_unit(px[1]));
            b.push(u8_to_unit(px[2]));
        }
        Ok(Self {
            width,
            height,
            r,
            g,
            b,
            timestamp,
        })
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`.
pub fn to_gray(frame: &RgbFrame) -> Result<GrayFrame> {
    let n = frame.width * frame.height;
    for (name, plane) in [("r", &frame.r), ("g", &frame.g), ("b", &frame.b)] {
        if plane.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} samples per channel"),
                got: format!("{} samples in channel {name}", plane.len()),
            });
        }
    }
    let pixels = frame
        .r
        .iter()
        .zip(&frame.g)
        .zip(&frame.b)
        .map(|((&r, &g), &b)| {
            let y = LUMA_R * r as f64 + LUMA_G * g as f64 + LUMA_B * b as f64;
            y.clamp(0.0, 1.0) as f32
        })
        .collect();
    GrayFrame::new(frame.width, frame.height, pixels, frame.timestamp)
}

/// Row-major dark mask; `true` where the source pixel was below `tau`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bits", width * height),
                got: format!("{} bits", bits.len()),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_dark(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

pub fn threshold(frame: &GrayFrame, tau: f32) -> BinaryMask {
    BinaryMask {
        width: frame.width,
        height: frame.height,
        bits: frame.pixels.iter().map(|&v| v < tau).collect(),
    }
}

/// Inclusive pixel-index bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BBox {
    /// True if `p` lies inside the continuous extent `[min, max + 1]`.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x as f64
            && p.x <= (self.max_x + 1) as f64
            && p.y >= self.min_y as f64
            && p.y <= (self.max_y + 1) as f64
    }
}

/// One connected dark region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub centroid: Point2,
    /// Pixel count.
    pub area: usize,
    pub bbox: BBox,
}

/// Candidate detections for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlobSet {
    pub blobs: Vec<Blob>,
    pub frame_timestamp: f64,
}

impl BlobSet {
    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Blob> {
        self.blobs.iter()
    }
}

/// Threshold and area window for measurement acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tau: f32,
    pub area_min: f64,
    pub area_max: f64,
}

impl PipelineConfig {
    pub fn new(tau: f32, area_min: f64, area_max: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            area_min,
            area_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default threshold with an area window scaled to the marker inner disk.
    pub fn for_layout(layout: &MarkerLayout) -> Self {
        let disk = std::f64::consts::PI * layout.r_in_px().powi(2);
        Self {
            tau: DEFAULT_TAU,
            area_min: AREA_MIN_FACTOR * disk,
            area_max: AREA_MAX_FACTOR * disk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.area_min > 0.0 && self.area_min <= self.area_max) {
            return Err(Error::InvalidConfig(format!(
                "area window must satisfy 0 < min <= max, got [{}, {}]",
                self.area_min, self.area_max
            )));
        }
        Ok(())
    }

    fn accepts(&self, area: usize) -> bool {
        let a = area as f64;
        a >= self.area_min && a <= self.area_max
    }
}

/// Every 8-connected dark component, unfiltered, in discovery order.
pub fn label_components(mask: &BinaryMask) -> Vec<Blob> {
    let (w, h) = (mask.width, mask.height);
    let mut visited = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    let mut blobs = Vec::new();

    for start in 0..w * h {
        if !mask.bits[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);

        let (mut sum_x, mut sum_y, mut count) = (0u64, 0u64, 0usize);
        let mut bbox = BBox {
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };

        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            sum_x += x as u64;
            sum_y += y as u64;
            count += 1;
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);

            let y_lo = y.saturating_sub(1);
            let y_hi = (y + 1).min(h - 1);
            let x_lo = x.saturating_sub(1);
            let x_hi = (x + 1).min(w - 1);
            for ny in y_lo..=y_hi {
                let row = ny * w;
                for nx in x_lo..=x_hi {
                    let n = row + nx;
                    if mask.bits[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }

        let inv = 1.0 / count as f64;
        blobs.push(Blob {
            centroid: Point2::new(sum_x as f64 * inv + 0.5, sum_y as f64 * inv + 0.5),
            area: count,
            bbox,
        });
    }
    blobs
}

/// Components whose area lies in the configured window.
pub fn detect_blobs(mask: &BinaryMask, config: &PipelineConfig) -> BlobSet {
    let blobs = label_components(mask)
        .into_iter()
        .filter(|b| config.accepts(b.area))
        .collect();
    BlobSet {
        blobs,
        frame_timestamp: 0.0,
    }
}

/// `detect_blobs(threshold(frame))`, stamped with the frame time.
pub fn acquire_measurements(frame: &GrayFrame, config: &PipelineConfig) -> Result<BlobSet> {
    config.validate()?;
    let mask = threshold(frame, config.tau);
    let mut set = detect_blobs(&mask, config);
    set.frame_timestamp = frame.timestamp;
    Ok(set)
}

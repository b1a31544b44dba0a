//! Per-marker Kalman tracking with nearest-neighbour association.
//!
//! Each marker follows a random walk, `x_t = x_{t-1} + w_t`, and is observed
//! directly, `z_t = x_t + v_t`, with isotropic Gaussian noises of standard
//! deviation `sigma_w` and `sigma_v` (pixels). Every frame each track is
//! predicted, matched to its nearest blob if that blob lies inside the gate,
//! and updated. Unmatched tracks keep the prediction, so their covariance
//! keeps growing until the marker is seen again.
//!
//! Association is per marker, as the nearest-detection rule states; two
//! tracks may pick the same blob. Such shared picks are counted in
//! [`TrackerState::shared_associations`] rather than resolved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::layout::{validate_layout, MarkerLayout};
use crate::pipeline::{acquire_measurements, BlobSet, GrayFrame, PipelineConfig};

/// Default gate as a fraction of the marker pitch.
pub const DEFAULT_GATE_FRACTION: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma_w: f64,
    pub sigma_v: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_w: 0.1,
            sigma_v: 0.025,
        }
    }
}

impl NoiseParams {
    pub fn new(sigma_w: f64, sigma_v: f64) -> Result<Self> {
        let n = Self { sigma_w, sigma_v };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.sigma_w) || !ok(self.sigma_v) {
            return Err(Error::InvalidConfig(format!(
                "noise standard deviations must be positive, got sigma_w={} sigma_v={}",
                self.sigma_w, self.sigma_v
            )));
        }
        Ok(())
    }
}

/// Symmetric 2x2 covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const ZERO: Cov2 = Cov2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn isotropic(v: f64) -> Self {
        Self { xx: v, xy: 0.0, yy: v }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn is_isotropic(&self) -> bool {
        self.xy == 0.0 && self.xx == self.yy
    }

    /// Both eigenvalues, ascending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = (half_diff * half_diff + self.xy * self.xy).sqrt();
        (mean - r, mean + r)
    }

    pub fn is_psd(&self) -> bool {
        self.eigenvalues().0 >= -1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    /// A blob inside the gate updated the track.
    Associated,
    /// Blobs existed but the nearest lay outside the gate.
    Gated,
    /// The frame produced no blobs at all.
    NoCandidates,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Associated => "associated",
            TrackStatus::Gated => "gated",
            TrackStatus::NoCandidates => "no_candidates",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TrackStatus::Associated => 0,
            TrackStatus::Gated => 1,
            TrackStatus::NoCandidates => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TrackStatus::Associated),
            1 => Some(TrackStatus::Gated),
            2 => Some(TrackStatus::NoCandidates),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "associated" => Some(TrackStatus::Associated),
            "gated" => Some(TrackStatus::Gated),
            "no_candidates" => Some(TrackStatus::NoCandidates),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerTrack {
    pub id: usize,
    /// Fabrication position.
    pub x0: Point2,
    pub mean: Point2,
    pub cov: Cov2,
    pub last_status: TrackStatus,
}

impl MarkerTrack {
    pub fn new(id: usize, x0: Point2, p0: f64) -> Self {
        Self {
            id,
            x0,
            mean: x0,
            cov: Cov2::isotropic(p0),
            last_status: TrackStatus::NoCandidates,
        }
    }

    pub fn deviation(&self) -> Point2 {
        self.mean - self.x0
    }
}

/// Random-walk prediction: mean unchanged, `P + sigma_w^2 I`.
pub fn predict(track: &MarkerTrack, noise: &NoiseParams) -> MarkerTrack {
    let q = noise.sigma_w * noise.sigma_w;
    MarkerTrack {
        cov: Cov2 {
            xx: track.cov.xx + q,
            xy: track.cov.xy,
            yy: track.cov.yy + q,
        },
        ..*track
    }
}

/// Scalar gain `p / (p + sigma_v^2)` for an isotropic prior `p I`.
pub fn scalar_gain(p: f64, sigma_v: f64) -> f64 {
    p / (p + sigma_v * sigma_v)
}

/// Kalman update with `H = I`, `R = sigma_v^2 I`.
pub fn update(track: &MarkerTrack, z: Point2, noise: &NoiseParams) -> Result<MarkerTrack> {
    let r = noise.sigma_v * noise.sigma_v;
    let innovation = z - track.mean;
    let p = track.cov;

    if p.is_isotropic() {
        let s = p.xx + r;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::SingularInnovation);
        }
        let k = p.xx / s;
        return Ok(MarkerTrack {
            mean: track.mean + innovation * k,
            cov: Cov2::isotropic((1.0 - k) * p.xx),
            ..*track
        });
    }

    let s = Cov2 {
        xx: p.xx + r,
        xy: p.xy,
        yy: p.yy + r,
    };
    let det = s.det();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::SingularInnovation);
    }
    let inv = 1.0 / det;
    let (si_xx, si_xy, si_yy) = (s.yy * inv, -s.xy * inv, s.xx * inv);
    // K = P S^-1
    let k_xx = p.xx * si_xx + p.xy * si_xy;
    let k_xy = p.xx * si_xy + p.xy * si_yy;
    let k_yx = p.xy * si_xx + p.yy * si_xy;
    let k_yy = p.xy * si_xy + p.yy * si_yy;

    let mean = Point2::new(
        track.mean.x + k_xx * innovation.x + k_xy * innovation.y,
        track.mean.y + k_yx * innovation.x + k_yy * innovation.y,
    );
    // (I - K) P, symmetrised.
    let c_xx = (1.0 - k_xx) * p.xx - k_xy * p.xy;
    let c_xy = (1.0 - k_xx) * p.xy - k_xy * p.yy;
    let c_yx = -k_yx * p.xx + (1.0 - k_yy) * p.xy;
    let c_yy = -k_yx * p.xy + (1.0 - k_yy) * p.yy;
    Ok(MarkerTrack {
        mean,
        cov: Cov2 {
            xx: c_xx,
            xy: 0.5 * (c_xy + c_yx),
            yy: c_yy,
        },
        ..*track
    })
}

/// Result of matching one track against the frame's candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Association {
    Measured {
        blob_index: usize,
        z: Point2,
        distance: f64,
    },
    Gated {
        nearest_distance: f64,
    },
    NoCandidates,
}

impl Association {
    pub fn status(&self) -> TrackStatus {
        match self {
            Association::Measured { .. } => TrackStatus::Associated,
            Association::Gated { .. } => TrackStatus::Gated,
            Association::NoCandidates => TrackStatus::NoCandidates,
        }
    }

    pub fn measurement(&self) -> Option<Point2> {
        match self {
            Association::Measured { z, .. } => Some(*z),
            _ => None,
        }
    }
}

/// Nearest candidate to the track mean, rejected beyond `gate_radius_px`.
/// Ties go to the lowest blob index.
pub fn associate(track: &MarkerTrack, candidates: &BlobSet, gate_radius_px: f64) -> Association {
    let mut best: Option<(usize, f64)> = None;
    for (i, blob) in candidates.blobs.iter().enumerate() {
        let d2 = blob.centroid.distance_sq(track.mean);
        if best.map_or(true, |(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    match best {
        None => Association::NoCandidates,
        Some((i, d2)) if d2 <= gate_radius_px * gate_radius_px => Association::Measured {
            blob_index: i,
            z: candidates.blobs[i].centroid,
            distance: d2.sqrt(),
        },
        Some((_, d2)) => Association::Gated {
            nearest_distance: d2.sqrt(),
        },
    }
}

/// Per-frame, per-marker tracker output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    pub marker_id: u32,
    /// `mean - x0`.
    pub deviation: Point2,
    pub mean: Point2,
    pub cov_trace: f64,
    pub status: TrackStatus,
}

impl DeviationRecord {
    pub fn from_track(track: &MarkerTrack, frame_index: u64, timestamp: f64) -> Self {
        Self {
            frame_index,
            timestamp,
            marker_id: track.id as u32,
            deviation: track.deviation(),
            mean: track.mean,
            cov_trace: track.cov.trace(),
            status: track.last_status,
        }
    }
}

/// Tracker parameters not carried by the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub noise: NoiseParams,
    pub gate_radius_px: f64,
    /// Initial isotropic variance, px^2.
    pub p0: f64,
}

impl TrackerConfig {
    /// Default noise, a gate of 0.45 pitch and `p0 = sigma_v^2`.
    pub fn for_layout(layout: &MarkerLayout) -> Self {
        let noise = NoiseParams::default();
        Self {
            noise,
            gate_radius_px: DEFAULT_GATE_FRACTION * layout.spacing_px(),
            p0: noise.sigma_v * noise.sigma_v,
        }
    }
}

/// One filter per marker plus frame bookkeeping. Frames must be applied in
/// order by a single owner.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    tracks: Vec<MarkerTrack>,
    noise: NoiseParams,
    gate_radius_px: f64,
    frame_index: u64,
    frame_size: (usize, usize),
    shared_associations: usize,
    total_shared_associations: u64,
}

pub fn init_tracker(layout: &MarkerLayout, noise: NoiseParams, gate_radius_px: f64, p0: f64) -> Result<TrackerState> {
    noise.validate()?;
    if !(p0 >= 0.0 && p0.is_finite()) {
        return Err(Error::InvalidConfig(format!("initial variance must be >= 0, got {p0}")));
    }
    let report = validate_layout(layout, layout.frame_size(), gate_radius_px);
    if !report.passed() {
        return Err(Error::LayoutInvalid(report.to_string()));
    }
    let tracks = layout
        .initial_positions()
        .iter()
        .enumerate()
        .map(|(id, &x0)| MarkerTrack::new(id, x0, p0))
        .collect();
    Ok(TrackerState {
        tracks,
        noise,
        gate_radius_px,
        frame_index: 0,
        frame_size: layout.frame_size(),
        shared_associations: 0,
        total_shared_associations: 0,
    })
}

impl TrackerState {
    pub fn from_config(layout: &MarkerLayout, config: &TrackerConfig) -> Result<Self> {
        init_tracker(layout, config.noise, config.gate_radius_px, config.p0)
    }

    pub fn tracks(&self) -> &[MarkerTrack] {
        &self.tracks
    }

    pub fn noise(&self) -> NoiseParams {
        self.noise
    }

    pub fn gate_radius_px(&self) -> f64 {
        self.gate_radius_px
    }

    /// Number of frames applied so far.
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn frame_size(&self) -> (usize, usize) {
        self.frame_size
    }

    /// Blobs claimed by more than one track in the last frame.
    pub fn shared_associations(&self) -> usize {
        self.shared_associations
    }

    pub fn total_shared_associations(&self) -> u64 {
        self.total_shared_associations
    }

    /// Current records without advancing the filter.
    pub fn snapshot(&self, timestamp: f64) -> Vec<DeviationRecord> {
        self.tracks
            .iter()
            .map(|t| DeviationRecord::from_track(t, self.frame_index, timestamp))
            .collect()
    }

    /// Predict, associate and update every track against `candidates`.
    pub fn step(&mut self, candidates: &BlobSet, timestamp: f64) -> Result<Vec<DeviationRecord>> {
        let mut claims = vec![0u16; candidates.len()];
        let mut records = Vec::with_capacity(self.tracks.len());
        for track in &mut self.tracks {
            let mut next = predict(track, &self.noise);
            let assoc = associate(&next, candidates, self.gate_radius_px);
            if let Association::Measured { blob_index, z, .. } = assoc {
                claims[blob_index] += 1;
                next = update(&next, z, &self.noise)?;
            }
            next.last_status = assoc.status();
            *track = next;
            records.push(DeviationRecord::from_track(track, self.frame_index, timestamp));
        }
        self.shared_associations = claims.iter().filter(|&&c| c > 1).count();
        if self.shared_associations > 0 {
            log::debug!(
                "frame {}: {} blobs claimed by more than one marker",
                self.frame_index,
                self.shared_associations
            );
        }
        self.total_shared_associations += self.shared_associations as u64;
        self.frame_index += 1;
        Ok(records)
    }

    /// Acquire measurements from `frame` and advance one step.
    pub fn track_frame(&mut self, frame: &GrayFrame, pipeline: &PipelineConfig) -> Result<Vec<DeviationRecord>> {
        if frame.size() != self.frame_size {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} frame", self.frame_size.0, self.frame_size.1),
                got: format!("{}x{} frame", frame.width(), frame.height()),
            });
        }
        let candidates = acquire_measurements(frame, pipeline)?;
        self.step(&candidates, frame.timestamp())
    }
}

/// Free-function form of [`TrackerState::track_frame`].
pub fn track_frame(
    state: &mut TrackerState,
    frame: &GrayFrame,
    pipeline: &PipelineConfig,
) -> Result<Vec<DeviationRecord>> {
    state.track_frame(frame, pipeline)
}

/// Size of the unfiltered candidate set `|Z_t|`.
pub fn raw_detection_count(frame: &GrayFrame, pipeline: &PipelineConfig) -> Result<usize> {
    Ok(acquire_measurements(frame, pipeline)?.len())
}

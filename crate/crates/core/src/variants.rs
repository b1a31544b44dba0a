//! The three compared tracking approaches behind one [`Engine`] interface.
//!
//! * `KeylineFiltered` runs the Kalman tracker.
//! * `KeylineUnfiltered` and `Solid` match every detected blob to the nearest
//!   fabrication position, frame by frame, with no state and no gate. Their
//!   marker count is the number of matched blobs, so clutter can push it past
//!   the true marker count and missed markers pull it below.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::layout::{MarkerLayout, MarkerStyle};
use crate::pipeline::{acquire_measurements, BlobSet, GrayFrame, PipelineConfig};
use crate::tracker::{DeviationRecord, TrackStatus, TrackerConfig, TrackerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingMode {
    Solid,
    KeylineUnfiltered,
    KeylineFiltered,
}

impl TrackingMode {
    pub const ALL: [TrackingMode; 3] = [
        TrackingMode::Solid,
        TrackingMode::KeylineUnfiltered,
        TrackingMode::KeylineFiltered,
    ];

    pub fn marker_style(self) -> MarkerStyle {
        match self {
            TrackingMode::Solid => MarkerStyle::Solid,
            _ => MarkerStyle::Keyline,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrackingMode::Solid => "solid",
            TrackingMode::KeylineUnfiltered => "keyline-unfiltered",
            TrackingMode::KeylineFiltered => "keyline-filtered",
        }
    }
}

impl fmt::Display for TrackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrackingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown tracking mode {s:?}")))
    }
}

/// Output of one processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub records: Vec<DeviationRecord>,
    /// `|Z_t|`, blobs passing the area window.
    pub detections: usize,
    /// Markers reported by the approach: tracked markers for the filtered
    /// mode, matched blobs otherwise.
    pub marker_count: usize,
    /// Records with status `Associated`.
    pub associated: usize,
}

/// Stateless nearest-fabrication-position matching.
///
/// Every blob is assigned to the marker whose initial position is nearest
/// (lowest id on ties). Each marker reports the closest of its blobs.
pub fn match_to_initial(initial: &[Point2], blobs: &BlobSet) -> Vec<Option<usize>> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; initial.len()];
    for (bi, blob) in blobs.blobs.iter().enumerate() {
        let mut owner = 0usize;
        let mut owner_d2 = f64::INFINITY;
        for (mi, &x0) in initial.iter().enumerate() {
            let d2 = blob.centroid.distance_sq(x0);
            if d2 < owner_d2 {
                owner = mi;
                owner_d2 = d2;
            }
        }
        if initial.is_empty() {
            continue;
        }
        match best[owner] {
            Some((_, d)) if d <= owner_d2 => {}
            _ => best[owner] = Some((bi, owner_d2)),
        }
    }
    best.into_iter().map(|b| b.map(|(i, _)| i)).collect()
}

#[derive(Debug, Clone)]
enum Inner {
    Filtered(TrackerState),
    Unfiltered {
        initial: Vec<Point2>,
        frame_index: u64,
        frame_size: (usize, usize),
    },
}

/// A configured tracking approach that consumes frames in order.
#[derive(Debug, Clone)]
pub struct Engine {
    mode: TrackingMode,
    pipeline: PipelineConfig,
    inner: Inner,
}

impl Engine {
    pub fn new(
        mode: TrackingMode,
        layout: &MarkerLayout,
        pipeline: PipelineConfig,
        tracker: &TrackerConfig,
    ) -> Result<Self> {
        pipeline.validate()?;
        let inner = match mode {
            TrackingMode::KeylineFiltered => Inner::Filtered(TrackerState::from_config(layout, tracker)?),
            TrackingMode::KeylineUnfiltered | TrackingMode::Solid => Inner::Unfiltered {
                initial: layout.initial_positions().to_vec(),
                frame_index: 0,
                frame_size: layout.frame_size(),
            },
        };
        Ok(Self { mode, pipeline, inner })
    }

    /// Engine with default pipeline and tracker parameters for `layout`.
    pub fn with_defaults(mode: TrackingMode, layout: &MarkerLayout) -> Result<Self> {
        Self::new(
            mode,
            layout,
            PipelineConfig::for_layout(layout),
            &TrackerConfig::for_layout(layout),
        )
    }

    pub fn mode(&self) -> TrackingMode {
        self.mode
    }

    pub fn pipeline(&self) -> &PipelineConfig {
        &self.pipeline
    }

    pub fn tracker(&self) -> Option<&TrackerState> {
        match &self.inner {
            Inner::Filtered(s) => Some(s),
            Inner::Unfiltered { .. } => None,
        }
    }

    pub fn frame_size(&self) -> (usize, usize) {
        match &self.inner {
            Inner::Filtered(s) => s.frame_size(),
            Inner::Unfiltered { frame_size, .. } => *frame_size,
        }
    }

    pub fn process(&mut self, frame: &GrayFrame) -> Result<FrameOutput> {
        let expected = self.frame_size();
        if frame.size() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} frame", expected.0, expected.1),
                got: format!("{}x{} frame", frame.width(), frame.height()),
            });
        }
        let blobs = acquire_measurements(frame, &self.pipeline)?;
        let detections = blobs.len();
        let (records, marker_count) = match &mut self.inner {
            Inner::Filtered(state) => {
                let records = state.step(&blobs, frame.timestamp())?;
                let n = records.len();
                (records, n)
            }
            Inner::Unfiltered {
                initial, frame_index, ..
            } => {
                let matches = match_to_initial(initial, &blobs);
                let records = initial
                    .iter()
                    .zip(&matches)
                    .enumerate()
                    .map(|(id, (&x0, m))| {
                        let (mean, status) = match m {
                            Some(bi) => (blobs.blobs[*bi].centroid, TrackStatus::Associated),
                            None => (x0, TrackStatus::NoCandidates),
                        };
                        DeviationRecord {
                            frame_index: *frame_index,
                            timestamp: frame.timestamp(),
                            marker_id: id as u32,
                            deviation: mean - x0,
                            mean,
                            cov_trace: 0.0,
                            status,
                        }
                    })
                    .collect();
                *frame_index += 1;
                // Every blob is matched to some marker.
                (records, if initial.is_empty() { 0 } else { detections })
            }
        };
        let associated = records.iter().filter(|r| r.status == TrackStatus::Associated).count();
        Ok(FrameOutput {
            records,
            detections,
            marker_count,
            associated,
        })
    }
}

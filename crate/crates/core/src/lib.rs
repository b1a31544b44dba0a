//! Keyline marker detection, per-marker Kalman tracking and a synthetic
//! sensor simulator for see-through-skin tactile sensors.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod simulator;
pub mod tracker;
pub mod variants;

pub use error::{Error, Result};
pub use geom::Point2;
pub use layout::{
    canonical_layout, validate_layout, DeviationField, LayoutReport, MarkerGeometry, MarkerLayout, MarkerStyle,
};
pub use pipeline::{acquire_measurements, detect_blobs, threshold, to_gray, Blob, BlobSet, GrayFrame, PipelineConfig};
pub use report::{bench_latency, BenchReport};
pub use simulator::{render_frame, scenario_fig4, write_sequence, Background, Deformation, Scenario};
pub use tracker::{
    associate, init_tracker, predict, raw_detection_count, track_frame, update, DeviationRecord, MarkerTrack,
    NoiseParams, TrackStatus, TrackerConfig, TrackerState,
};
pub use variants::{Engine, FrameOutput, TrackingMode};

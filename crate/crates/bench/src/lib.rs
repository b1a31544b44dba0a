//! Shared fixtures for the benchmarks.

use keytrack_core::layout::MarkerStyle;
use keytrack_core::pipeline::GrayFrame;
use keytrack_core::simulator::{render_frame, scenario_fig4, Scenario};

/// Clutter benchmark scenario with keyline markers.
pub fn fig4_scenario() -> Scenario {
    scenario_fig4(MarkerStyle::Keyline)
}

/// Frames `indices` of the clutter benchmark.
pub fn fig4_frames(indices: impl IntoIterator<Item = usize>) -> Vec<GrayFrame> {
    let scenario = fig4_scenario();
    indices
        .into_iter()
        .map(|i| render_frame(&scenario, i).expect("fixture renders").0)
        .collect()
}

/// A clean frame (no background clutter) and a text-cluttered one.
pub fn clean_and_cluttered() -> (GrayFrame, GrayFrame) {
    let mut frames = fig4_frames([0, 90]);
    let cluttered = frames.pop().unwrap();
    (frames.pop().unwrap(), cluttered)
}

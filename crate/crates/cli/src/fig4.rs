//! The `fig4` command: all three approaches on the clutter benchmark.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use keytrack_core::pipeline::PipelineConfig;
use keytrack_core::report::{plot_counts, BenchRecorder, BenchReport};
use keytrack_core::simulator::{render_sequence, scenario_fig4, FrameConditions};
use keytrack_core::variants::{Engine, TrackingMode};

struct Row {
    report: BenchReport,
    conditions: Vec<FrameConditions>,
}

pub fn run(frames: Option<usize>, seed: Option<u64>, out_dir: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for mode in TrackingMode::ALL {
        let mut scenario = scenario_fig4(mode.marker_style());
        if let Some(n) = frames {
            scenario.n_frames = n;
        }
        if let Some(s) = seed {
            scenario.seed = s;
        }
        let conditions = if scenario.n_frames == 0 {
            Vec::new()
        } else {
            scenario.frame_conditions(&PipelineConfig::for_layout(&scenario.layout))?
        };
        let rendered = if scenario.n_frames == 0 {
            Vec::new()
        } else {
            render_sequence(&scenario)?
        };
        let mut engine = Engine::with_defaults(mode, &scenario.layout)?;
        let mut rec = BenchRecorder::new(&engine, scenario.layout.n_markers(), 0);
        for (i, (frame, _)) in rendered.iter().enumerate() {
            let t = Instant::now();
            let out = engine.process(frame)?;
            rec.record(i as u64, &out, t.elapsed());
        }
        rows.push(Row {
            report: rec.finish(),
            conditions,
        });
    }

    println!(
        "{:<20} {:>6} {:>6} {:>6} {:>6} {:>14} {:>12} {:>8}",
        "mode", "frames", "=N", ">N", "<N", ">N on clutter", "<N on dark", "p95 ms"
    );
    for row in &rows {
        let r = &row.report;
        let n = r.n_markers;
        let on = |pick: fn(&FrameConditions) -> bool, hit: &dyn Fn(usize) -> bool| {
            let pool: Vec<usize> = row
                .conditions
                .iter()
                .zip(&r.frames)
                .filter(|(c, _)| pick(c))
                .map(|(_, f)| f.marker_count)
                .collect();
            format!("{}/{}", pool.iter().filter(|&&c| hit(c)).count(), pool.len())
        };
        println!(
            "{:<20} {:>6} {:>6} {:>6} {:>6} {:>14} {:>12} {:>8}",
            r.mode.as_str(),
            r.frames.len(),
            r.frames_with_count(|c| c == n),
            r.frames_with_count(|c| c > n),
            r.frames_with_count(|c| c < n),
            on(FrameConditions::is_clutter, &|c| c > n),
            on(FrameConditions::is_dark, &|c| c < n),
            r.latency.map_or("n/a".into(), |l| format!("{:.3}", l.p95_ms)),
        );
    }
    println!(
        "N = {} markers, {:.1} s",
        rows[0].report.n_markers,
        start.elapsed().as_secs_f64()
    );

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for row in &rows {
            row.report
                .save_json(&dir.join(format!("report_{}.json", row.report.mode)))?;
        }
        let counts: Vec<(&str, Vec<usize>)> = rows
            .iter()
            .map(|r| (r.report.mode.as_str(), r.report.counts()))
            .collect();
        let series: Vec<(&str, &[usize])> = counts.iter().map(|(m, c)| (*m, c.as_slice())).collect();
        plot_counts(&dir.join("counts.png"), &series, rows[0].report.n_markers)?;
    }
    Ok(())
}

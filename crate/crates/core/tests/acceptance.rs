//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::panic;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use keytrack_core::geom::Point2;
use keytrack_core::io::{encode_deviations, StreamFormat};
use keytrack_core::layout::{MarkerLayout, MarkerStyle};
use keytrack_core::pipeline::{label_components, GrayFrame, PipelineConfig};
use keytrack_core::report::{bench_latency, BUDGET_MS};
use keytrack_core::simulator::{render_sequence, scenario_fig4, write_sequence, Deformation, Scenario};
use keytrack_core::tracker::MarkerTrack;
use keytrack_core::variants::{Engine, TrackingMode};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn fig4_counts() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for style in [MarkerStyle::Keyline, MarkerStyle::Solid] {
        let scenario = scenario_fig4(style);
        let pipeline = PipelineConfig::for_layout(&scenario.layout);
        let conditions = scenario.frame_conditions(&pipeline).map_err(err)?;
        let frames = render_sequence(&scenario).map_err(err)?;
        let n = scenario.layout.n_markers();
        for mode in TrackingMode::ALL.into_iter().filter(|m| m.marker_style() == style) {
            let mut engine = Engine::with_defaults(mode, &scenario.layout).map_err(err)?;
            let mut counts = Vec::with_capacity(frames.len());
            for (frame, _) in &frames {
                counts.push(engine.process(frame).map_err(err)?.marker_count);
            }
            let (hits, pool, what) = match mode {
                TrackingMode::KeylineFiltered => (counts.iter().filter(|&&c| c == n).count(), counts.len(), "=="),
                TrackingMode::KeylineUnfiltered => {
                    let pool: Vec<_> = conditions.iter().zip(&counts).filter(|(c, _)| c.is_clutter()).collect();
                    (pool.iter().filter(|(_, &c)| c > n).count(), pool.len(), ">")
                }
                TrackingMode::Solid => {
                    let pool: Vec<_> = conditions.iter().zip(&counts).filter(|(c, _)| c.is_dark()).collect();
                    (pool.iter().filter(|(_, &c)| c < n).count(), pool.len(), "<")
                }
            };
            let frac = hits as f64 / pool.max(1) as f64;
            let pass = match mode {
                TrackingMode::KeylineFiltered => hits == pool && pool == 200,
                _ => pool > 0 && frac >= 0.10,
            };
            ok &= pass;
            lines.push(format!(
                "{mode}: count {what} {n} on {hits}/{pool} ({:.0}%)",
                100.0 * frac
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 60.0;
    lines.push(format!("{secs:.1} s"));
    ensure(ok, lines.join("; "))
}

fn kalman_oracle() -> Outcome {
    let mut rng = rng(0x6163_6365);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        worst = worst.max(kalman_case_error(&random_kalman_case(&mut rng))?);
    }
    ensure(worst <= 1e-9, format!("1000 cases, max componentwise gap {worst:.2e}"))
}

fn centroid_oracle() -> Outcome {
    let mut rng = rng(0x626c_6f62);
    let mut blobs = 0;
    for i in 0..200 {
        let mask = random_mask(&mut rng);
        let reference = brute_force_components(&mask);
        compare_components(&label_components(&mask), &reference, 1e-9).map_err(|e| format!("mask {i}: {e}"))?;
        blobs += reference.len();
    }
    Ok(format!(
        "200 masks, {blobs} components, areas exact, centroids within 1e-9"
    ))
}

fn indent_accuracy() -> Outcome {
    let layout = MarkerLayout::default_grid(MarkerStyle::Keyline);
    let mut scenario = Scenario::new(layout.clone(), 60);
    scenario.noise_std = 0.02;
    scenario.blur_sigma_px = 0.8;
    scenario.seed = 17;
    scenario.deformation = Deformation::RadialIndent {
        center: Point2::new(200.0, 200.0),
        peak_px: 8.0,
        falloff_px: 60.0,
    };
    let frames = render_sequence(&scenario).map_err(err)?;
    let max_true = frames.iter().map(|(_, f)| f.max_magnitude()).fold(0.0, f64::max);
    let mut engine = Engine::with_defaults(TrackingMode::KeylineFiltered, &layout).map_err(err)?;
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (frame, field) in &frames {
        records.push(engine.process(frame).map_err(err)?.records);
        truth.push(field.displacements().to_vec());
    }
    let rmse = worst_marker_rmse(&records, &truth, 5);
    ensure(
        rmse <= 1.0 && max_true <= 8.0 + 1e-9,
        format!("max |true| {max_true:.2} px, worst per-marker RMSE {rmse:.3} px (bound 1.0)"),
    )
}

fn latency() -> Outcome {
    let scenario = scenario_fig4(MarkerStyle::Keyline);
    let frames: Vec<GrayFrame> = render_sequence(&scenario)
        .map_err(err)?
        .into_iter()
        .map(|(f, _)| f)
        .collect();
    let mut engine = Engine::with_defaults(TrackingMode::KeylineFiltered, &scenario.layout).map_err(err)?;
    let report = bench_latency(&mut engine, scenario.layout.n_markers(), &frames, 20).map_err(err)?;
    let l = report.latency.ok_or("no frames measured")?;
    ensure(
        l.p95_ms <= BUDGET_MS && l.throughput_fps >= 120.0,
        format!(
            "{} frames 400x400: mean {:.3} ms, p50 {:.3} ms, p95 {:.3} ms (budget {BUDGET_MS:.2}, reference 6.08), {:.0} frames/s",
            report.frames.len(),
            l.mean_ms,
            l.p50_ms,
            l.p95_ms,
            l.throughput_fps
        ),
    )
}

fn determinism() -> Outcome {
    let mut files = 0;
    let mut streams = 0;
    for style in [MarkerStyle::Keyline, MarkerStyle::Solid] {
        let scenario = scenario_fig4(style);
        let dirs = [tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?];
        for d in &dirs {
            write_sequence(&scenario, d.path()).map_err(err)?;
        }
        for entry in std::fs::read_dir(dirs[0].path()).map_err(err)? {
            let name = entry.map_err(err)?.file_name();
            let a = std::fs::read(dirs[0].path().join(&name)).map_err(err)?;
            let b = std::fs::read(dirs[1].path().join(&name)).map_err(err)?;
            if a != b {
                return Err(format!("{name:?} differs between runs"));
            }
            files += 1;
        }
        for mode in TrackingMode::ALL.into_iter().filter(|m| m.marker_style() == style) {
            let run = || -> Result<(Vec<u8>, Vec<u8>), String> {
                let mut engine = Engine::with_defaults(mode, &scenario.layout).map_err(err)?;
                let mut records = Vec::new();
                for (frame, _) in render_sequence(&scenario).map_err(err)? {
                    records.extend(engine.process(&frame).map_err(err)?.records);
                }
                Ok((
                    encode_deviations(&records, StreamFormat::Text),
                    encode_deviations(&records, StreamFormat::Binary),
                ))
            };
            if run()? != run()? {
                return Err(format!("{mode}: deviation streams differ between runs"));
            }
            streams += 2;
        }
    }
    Ok(format!(
        "{files} files and {streams} deviation streams byte-identical across two runs"
    ))
}

fn invariants() -> Outcome {
    let mut rng = rng(0x696e_7661);
    let layout = MarkerLayout::default_grid(MarkerStyle::Keyline);

    let mut scenario = Scenario::new(layout.clone(), 8);
    scenario.noise_std = 0.03;
    scenario.deformation = Deformation::UniformShear {
        shift: Point2::new(3.5, -2.25),
    };
    let mut engine = Engine::with_defaults(TrackingMode::KeylineFiltered, &layout).map_err(err)?;
    for (frame, _) in render_sequence(&scenario).map_err(err)? {
        let out = engine.process(&frame).map_err(err)?;
        if out.records.len() != 64 {
            return Err(format!("{} records", out.records.len()));
        }
        check_deviation_identity(&out.records, &layout).map_err(|e| format!("deviation identity: {e}"))?;
    }

    use rand::Rng;
    for _ in 0..64 {
        let k = rng.random_range(0..50);
        check_covariance_growth(k, rng.random_range(0.001..3.0), rng.random_range(0.0..2.0))
            .map_err(|e| format!("covariance growth: {e}"))?;
        check_gain_bounds(rng.random_range(1e-6..1e3), rng.random_range(1e-3..10.0))
            .map_err(|e| format!("gain bounds: {e}"))?;
        let frame = random_frame(&mut rng, 17, 11);
        let (a, b): (f32, f32) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        check_threshold_monotone(&frame, a.min(b), a.max(b)).map_err(|e| format!("threshold: {e}"))?;
        let mask = random_mask(&mut rng);
        check_partition(&mask).map_err(|e| format!("partition: {e}"))?;
        check_translation(&mask, rng.random_range(0..20), rng.random_range(0..20))
            .map_err(|e| format!("translation: {e}"))?;
        let n_blobs = rng.random_range(0..12);
        let blobs = random_blobs(&mut rng, n_blobs, 60.0);
        check_argmin(
            &MarkerTrack::new(0, Point2::new(30.0, 30.0), 0.0),
            &blobs,
            rng.random_range(0.5..30.0),
        )
        .map_err(|e| format!("argmin: {e}"))?;
    }
    Ok(
        "deviation identity, covariance growth, gain bounds, threshold monotonicity, partition, translation, argmin"
            .into(),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("fig4 count reproduction", fig4_counts),
        ("kalman oracle", kalman_oracle),
        ("centroid oracle", centroid_oracle),
        ("radial indent accuracy", indent_accuracy),
        ("latency", latency),
        ("determinism", determinism),
        ("invariant suite", invariants),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<26} {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

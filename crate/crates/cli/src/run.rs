//! The `track` command: decode on a helper thread, track on this one.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use keytrack_core::io::{DeviationWriter, FrameSource, StreamFormat};
use keytrack_core::layout::MarkerLayout;
use keytrack_core::pipeline::PipelineConfig;
use keytrack_core::report::{plot_counts, BenchRecorder, BenchReport};
use keytrack_core::tracker::{NoiseParams, TrackerConfig};
use keytrack_core::variants::{Engine, TrackingMode};

/// Frames decoded ahead of the tracker.
const PREFETCH: usize = 8;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: TrackingMode,
    pub input: PathBuf,
    pub layout: Option<PathBuf>,
    pub tau: Option<f32>,
    pub area_min: Option<f64>,
    pub area_max: Option<f64>,
    pub sigma_w: Option<f64>,
    pub sigma_v: Option<f64>,
    pub gate: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: StreamFormat,
    pub bench: bool,
    pub frames: Option<usize>,
    pub warmup: usize,
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

impl RunConfig {
    fn pipeline(&self, layout: &MarkerLayout) -> Result<PipelineConfig> {
        let d = PipelineConfig::for_layout(layout);
        PipelineConfig::new(
            self.tau.unwrap_or(d.tau),
            self.area_min.unwrap_or(d.area_min),
            self.area_max.unwrap_or(d.area_max),
        )
        .context("invalid pipeline parameters")
    }

    fn tracker(&self, layout: &MarkerLayout) -> Result<TrackerConfig> {
        let d = TrackerConfig::for_layout(layout);
        let noise = NoiseParams::new(
            self.sigma_w.unwrap_or(d.noise.sigma_w),
            self.sigma_v.unwrap_or(d.noise.sigma_v),
        )
        .context("invalid noise parameters")?;
        if self.mode != TrackingMode::KeylineFiltered
            && (self.sigma_w.is_some() || self.sigma_v.is_some() || self.gate.is_some())
        {
            log::warn!("{} mode ignores --sigma-w, --sigma-v and --gate", self.mode);
        }
        Ok(TrackerConfig {
            noise,
            gate_radius_px: self.gate.unwrap_or(d.gate_radius_px),
            p0: noise.sigma_v * noise.sigma_v,
        })
    }
}

fn resolve_layout(config: &RunConfig, source: &FrameSource) -> Result<MarkerLayout> {
    let layout = match (&config.layout, source.manifest()) {
        (Some(path), _) => MarkerLayout::load(path).with_context(|| format!("loading layout {}", path.display()))?,
        (None, Some(m)) => m.layout().clone(),
        (None, None) => MarkerLayout::default_grid(config.mode.marker_style()),
    };
    if layout.geometry().style != config.mode.marker_style() {
        log::warn!(
            "{} mode on a layout with {} markers",
            config.mode,
            layout.geometry().style
        );
    }
    Ok(layout)
}

/// Runs the tracker over the input. Returns the bench report in bench mode.
pub fn run(config: &RunConfig) -> Result<Option<BenchReport>> {
    if !config.input.exists() {
        bail!("input {} does not exist", config.input.display());
    }
    let source = FrameSource::open(&config.input).with_context(|| format!("opening {}", config.input.display()))?;
    let layout = resolve_layout(config, &source)?;
    let mut engine = Engine::new(
        config.mode,
        &layout,
        config.pipeline(&layout)?,
        &config.tracker(&layout)?,
    )?;

    let out: Box<dyn Write> = match &config.output {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut writer = DeviationWriter::new(BufWriter::new(out), config.format).context("writing stream header")?;

    let limit = config.frames.unwrap_or(usize::MAX);
    let total = source.len().min(limit);
    let (tx, rx) = mpsc::sync_channel(PREFETCH);
    let decoder = thread::spawn(move || {
        for frame in source.take(limit) {
            if tx.send(frame).is_err() {
                break;
            }
        }
    });

    let mut recorder = config
        .bench
        .then(|| BenchRecorder::new(&engine, layout.n_markers(), config.warmup));
    let mut processed = 0usize;
    for (i, frame) in rx.iter().enumerate() {
        let frame = frame.with_context(|| format!("decoding frame {i}"))?;
        let start = Instant::now();
        let out = engine.process(&frame).with_context(|| format!("frame {i}"))?;
        let elapsed = start.elapsed();
        if let Some(r) = recorder.as_mut() {
            r.record(i as u64, &out, elapsed);
        }
        writer.write_records(&out.records).context("writing deviations")?;
        processed += 1;
    }
    decoder.join().map_err(|_| anyhow::anyhow!("decoder thread panicked"))?;
    writer.finish().context("flushing deviations")?;
    if processed != total {
        bail!("processed {processed} of {total} frames");
    }
    log::info!("tracked {processed} frames in {} mode", config.mode);

    let Some(recorder) = recorder else {
        return Ok(None);
    };
    let report = recorder.finish();
    if let Some(p) = &config.report {
        report
            .save_json(p)
            .with_context(|| format!("writing report {}", p.display()))?;
    }
    if let Some(p) = &config.plot {
        plot_counts(p, &[(config.mode.as_str(), &report.counts())], report.n_markers)
            .with_context(|| format!("writing plot {}", p.display()))?;
    }
    Ok(Some(report))
}

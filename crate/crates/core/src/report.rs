//! Per-frame benchmark statistics, latency summaries and count plots.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::GrayFrame;
use crate::variants::{Engine, FrameOutput, TrackingMode};

/// Per-frame budget at 120 Hz.
pub const BUDGET_MS: f64 = 1000.0 / 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStat {
    pub frame_index: u64,
    pub detections: usize,
    pub marker_count: usize,
    pub associated: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub throughput_fps: f64,
}

impl LatencySummary {
    /// Nearest-rank percentiles. `None` for an empty sample.
    pub fn from_samples(latencies_ms: &[f64]) -> Option<Self> {
        if latencies_ms.is_empty() {
            return None;
        }
        let mut sorted = latencies_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total: f64 = sorted.iter().sum();
        let mean = total / sorted.len() as f64;
        Some(Self {
            mean_ms: mean,
            p50_ms: percentile(&sorted, 0.50),
            p95_ms: percentile(&sorted, 0.95),
            max_ms: *sorted.last().unwrap(),
            throughput_fps: if total > 0.0 {
                1000.0 * sorted.len() as f64 / total
            } else {
                f64::INFINITY
            },
        })
    }
}

/// Nearest-rank percentile of an ascending, non-empty slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: TrackingMode,
    pub n_markers: usize,
    pub frame_size: (usize, usize),
    /// Frames processed but left out of `frames` and `latency`.
    pub warmup: usize,
    pub frames: Vec<FrameStat>,
    pub latency: Option<LatencySummary>,
    pub budget_ms: f64,
    pub within_budget: Option<bool>,
    /// Reported marker count -> number of frames.
    pub count_histogram: BTreeMap<usize, usize>,
}

impl BenchReport {
    pub fn counts(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.marker_count).collect()
    }

    pub fn frames_with_count(&self, pred: impl Fn(usize) -> bool) -> usize {
        self.frames.iter().filter(|f| pred(f.marker_count)).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("bench report: {e}")))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn save_plot(&self, path: &Path) -> Result<()> {
        plot_counts(path, &[(self.mode.as_str(), &self.counts())], self.n_markers)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode            {}", self.mode)?;
        writeln!(f, "frame size      {}x{}", self.frame_size.0, self.frame_size.1)?;
        writeln!(f, "frames          {} (+{} warmup)", self.frames.len(), self.warmup)?;
        match &self.latency {
            None => writeln!(f, "latency         n/a")?,
            Some(l) => {
                writeln!(f, "latency mean    {:.3} ms", l.mean_ms)?;
                writeln!(f, "latency p50     {:.3} ms", l.p50_ms)?;
                writeln!(f, "latency p95     {:.3} ms", l.p95_ms)?;
                writeln!(f, "latency max     {:.3} ms", l.max_ms)?;
                writeln!(f, "throughput      {:.1} frames/s", l.throughput_fps)?;
                writeln!(
                    f,
                    "120 Hz budget   {:.2} ms, p95 {}",
                    self.budget_ms,
                    if l.p95_ms <= self.budget_ms { "within" } else { "OVER" }
                )?;
            }
        }
        let n = self.n_markers;
        writeln!(
            f,
            "marker count    ={n}: {}  <{n}: {}  >{n}: {}",
            self.frames_with_count(|c| c == n),
            self.frames_with_count(|c| c < n),
            self.frames_with_count(|c| c > n)
        )?;
        writeln!(f, "count histogram")?;
        for (count, frames) in &self.count_histogram {
            writeln!(f, "  {count:>5}  {frames}")?;
        }
        Ok(())
    }
}

/// Accumulates per-frame statistics, discarding the first `warmup` frames.
#[derive(Debug, Clone)]
pub struct BenchRecorder {
    mode: TrackingMode,
    n_markers: usize,
    frame_size: (usize, usize),
    warmup: usize,
    seen: usize,
    frames: Vec<FrameStat>,
}

impl BenchRecorder {
    pub fn new(engine: &Engine, n_markers: usize, warmup: usize) -> Self {
        Self {
            mode: engine.mode(),
            n_markers,
            frame_size: engine.frame_size(),
            warmup,
            seen: 0,
            frames: Vec::new(),
        }
    }

    pub fn record(&mut self, frame_index: u64, out: &FrameOutput, elapsed: Duration) {
        self.seen += 1;
        if self.seen <= self.warmup {
            return;
        }
        self.frames.push(FrameStat {
            frame_index,
            detections: out.detections,
            marker_count: out.marker_count,
            associated: out.associated,
            latency_ms: elapsed.as_secs_f64() * 1000.0,
        });
    }

    pub fn finish(self) -> BenchReport {
        let latencies: Vec<f64> = self.frames.iter().map(|f| f.latency_ms).collect();
        let latency = LatencySummary::from_samples(&latencies);
        let mut count_histogram = BTreeMap::new();
        for f in &self.frames {
            *count_histogram.entry(f.marker_count).or_insert(0) += 1;
        }
        BenchReport {
            mode: self.mode,
            n_markers: self.n_markers,
            frame_size: self.frame_size,
            warmup: self.warmup.min(self.seen),
            frames: self.frames,
            latency,
            budget_ms: BUDGET_MS,
            within_budget: latency.map(|l| l.p95_ms <= BUDGET_MS),
            count_histogram,
        }
    }
}

/// Times `engine.process` on already decoded frames.
pub fn bench_latency(
    engine: &mut Engine,
    n_markers: usize,
    frames: &[GrayFrame],
    warmup: usize,
) -> Result<BenchReport> {
    let mut rec = BenchRecorder::new(engine, n_markers, warmup);
    for (i, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let out = engine.process(frame)?;
        rec.record(i as u64, &out, start.elapsed());
    }
    Ok(rec.finish())
}

const PLOT_COLORS: [[u8; 3]; 4] = [[214, 39, 40], [255, 127, 14], [31, 119, 180], [44, 160, 44]];

/// Line plot of per-frame marker counts with a dashed reference at
/// `n_markers`. Legend order follows series order by colour only.
pub fn plot_counts(path: &Path, series: &[(&str, &[usize])], n_markers: usize) -> Result<()> {
    const W: u32 = 800;
    const H: u32 = 300;
    const M: u32 = 20;
    let n = series.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let y_max = series
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .chain([n_markers])
        .max()
        .unwrap_or(1)
        .max(1) as f64
        * 1.15;

    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let sx = |i: usize| M as f64 + (W - 2 * M) as f64 * i as f64 / (n.max(2) - 1) as f64;
    let sy = |c: usize| (H - M) as f64 - (H - 2 * M) as f64 * c as f64 / y_max;

    draw_line(
        &mut img,
        (M as f64, (H - M) as f64),
        ((W - M) as f64, (H - M) as f64),
        Rgb([0, 0, 0]),
    );
    draw_line(
        &mut img,
        (M as f64, M as f64),
        (M as f64, (H - M) as f64),
        Rgb([0, 0, 0]),
    );
    let yr = sy(n_markers);
    let mut x = M as f64;
    while x < (W - M) as f64 {
        draw_line(
            &mut img,
            (x, yr),
            ((x + 6.0).min((W - M) as f64), yr),
            Rgb([120, 120, 120]),
        );
        x += 12.0;
    }

    for (k, (_, counts)) in series.iter().enumerate() {
        let color = Rgb(PLOT_COLORS[k % PLOT_COLORS.len()]);
        for i in 1..counts.len() {
            draw_line(&mut img, (sx(i - 1), sy(counts[i - 1])), (sx(i), sy(counts[i])), color);
        }
        if counts.len() == 1 {
            draw_line(&mut img, (sx(0), sy(counts[0])), (sx(0) + 1.0, sy(counts[0])), color);
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.0 + (b.0 - a.0) * t).round();
        let y = (a.1 + (b.1 - a.1) * t).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

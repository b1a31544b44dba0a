mod fig4;
mod presets;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use keytrack_core::io::StreamFormat;
use keytrack_core::layout::{canonical_layout, MarkerGeometry, MarkerLayout, MarkerStyle};
use keytrack_core::simulator::write_sequence;
use keytrack_core::variants::TrackingMode;
use keytrack_core::Point2;

use crate::presets::Preset;
use crate::run::RunConfig;

#[derive(Parser)]
#[command(
    name = "keytrack",
    version,
    about = "Keyline marker tracking for see-through-skin tactile sensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track markers through a frame sequence and write deviations.
    Track(TrackArgs),
    /// Render a synthetic sequence with ground truth.
    Simulate(SimulateArgs),
    /// Write a canonical grid layout file.
    Layout(LayoutArgs),
    /// Run all three approaches on the clutter benchmark and compare counts.
    Fig4(Fig4Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Solid,
    KeylineUnfiltered,
    KeylineFiltered,
}

impl From<ModeArg> for TrackingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Solid => TrackingMode::Solid,
            ModeArg::KeylineUnfiltered => TrackingMode::KeylineUnfiltered,
            ModeArg::KeylineFiltered => TrackingMode::KeylineFiltered,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Keyline,
    Solid,
}

impl From<StyleArg> for MarkerStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Keyline => MarkerStyle::Keyline,
            StyleArg::Solid => MarkerStyle::Solid,
        }
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long, value_enum, default_value = "keyline-filtered")]
    mode: ModeArg,
    /// Image directory or raw stream (with `.hdr` sidecar).
    #[arg(long)]
    input: PathBuf,
    /// Layout file; defaults to the input manifest's layout, then the
    /// default grid.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Dark threshold in (0, 1).
    #[arg(long)]
    tau: Option<f32>,
    /// Smallest accepted blob area, px^2.
    #[arg(long)]
    area_min: Option<f64>,
    /// Largest accepted blob area, px^2.
    #[arg(long)]
    area_max: Option<f64>,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    sigma_v: Option<f64>,
    /// Association gate radius, px.
    #[arg(long)]
    gate: Option<f64>,
    /// Deviation stream destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Collect per-frame timing and counts.
    #[arg(long)]
    bench: bool,
    /// Process at most this many frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Frames excluded from the bench report.
    #[arg(long, default_value_t = 0)]
    warmup: usize,
    /// Bench report destination (JSON).
    #[arg(long, requires = "bench")]
    report: Option<PathBuf>,
    /// Counts plot destination (PNG).
    #[arg(long, requires = "bench")]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Idle,
    Shear,
    Indent,
    Fig4,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "fig4")]
    scenario: ScenarioArg,
    #[arg(long, value_enum, default_value = "keyline")]
    style: StyleArg,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Additive noise std, intensity units.
    #[arg(long)]
    noise: Option<f64>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long, value_enum, default_value = "keyline")]
    style: StyleArg,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    #[arg(long, default_value_t = 3.5)]
    spacing_mm: f64,
    #[arg(long, default_value_t = 10.0)]
    px_per_mm: f64,
    /// Sensor side length, mm.
    #[arg(long, default_value_t = 40.0)]
    sensor_mm: f64,
    /// Layout file destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Fig4Args {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for per-mode JSON reports and the counts plot.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("KEYTRACK_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("KEYTRACK_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "KEYTRACK_THREADS must be a positive integer, got 0");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn layout_cmd(args: LayoutArgs) -> Result<()> {
    let style: MarkerStyle = args.style.into();
    let s = args.spacing_mm * args.px_per_mm;
    let extent = args.sensor_mm * args.px_per_mm;
    // Centre the grid on the sensor.
    let origin = Point2::new(
        0.5 * (extent - s * (args.cols.max(1) - 1) as f64),
        0.5 * (extent - s * (args.rows.max(1) - 1) as f64),
    );
    let layout: MarkerLayout = canonical_layout(
        args.rows,
        args.cols,
        args.spacing_mm,
        args.px_per_mm,
        origin,
        [args.sensor_mm, args.sensor_mm],
        MarkerGeometry::for_style(style),
    )?;
    match args.output {
        Some(path) => layout.save(&path)?,
        None => print!("{}", layout.to_toml()?),
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let preset = match args.scenario {
        ScenarioArg::Idle => Preset::Idle,
        ScenarioArg::Shear => Preset::Shear,
        ScenarioArg::Indent => Preset::Indent,
        ScenarioArg::Fig4 => Preset::Fig4,
    };
    let mut scenario = preset.build(args.style.into());
    if let Some(n) = args.frames {
        scenario.n_frames = n;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(noise) = args.noise {
        scenario.noise_std = noise;
    }
    let manifest = write_sequence(&scenario, &args.output)
        .with_context(|| format!("writing sequence to {}", args.output.display()))?;
    log::info!("wrote {} frames to {}", manifest.n_frames, args.output.display());
    Ok(())
}

fn track_cmd(args: TrackArgs) -> Result<()> {
    let config = RunConfig {
        mode: args.mode.into(),
        input: args.input,
        layout: args.layout,
        tau: args.tau,
        area_min: args.area_min,
        area_max: args.area_max,
        sigma_w: args.sigma_w,
        sigma_v: args.sigma_v,
        gate: args.gate,
        output: args.output,
        format: match args.format {
            FormatArg::Text => StreamFormat::Text,
            FormatArg::Binary => StreamFormat::Binary,
        },
        bench: args.bench,
        frames: args.frames,
        warmup: args.warmup,
        report: args.report,
        plot: args.plot,
    };
    if let Some(report) = run::run(&config)? {
        eprint!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Track(a) => track_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Layout(a) => layout_cmd(a),
        Command::Fig4(a) => fig4::run(a.frames, a.seed, a.output.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

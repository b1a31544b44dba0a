//! File formats: frame inputs, deviation streams, ground-truth files and
//! sequence manifests. Byte layouts are documented in `docs/formats.md`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::layout::{check_version, DeviationField, MarkerLayout, LAYOUT_FORMAT_VERSION};
use crate::pipeline::{to_gray, GrayFrame, RgbFrame};
use crate::simulator::Scenario;
use crate::tracker::{DeviationRecord, TrackStatus};

/// Frame rate assumed when an input does not declare one.
pub const DEFAULT_FPS: f64 = 120.0;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRUTH_FILE: &str = "truth.csv";

const TEXT_MAGIC: &str = "# keytrack deviations format_version=1";
const TEXT_COLUMNS: &str = "frame_index,timestamp,marker_id,dx,dy,cov_trace,status";
const TRUTH_COLUMNS: &str = "frame_index,marker_id,dx_true,dy_true";

pub const BINARY_MAGIC: [u8; 4] = *b"KTDV";
pub const BINARY_VERSION: u16 = 1;
pub const BINARY_RECORD_LEN: usize = 48;

/// Deviation stream encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamFormat {
    Text,
    Binary,
}

/// One row of a deviation stream; the on-disk subset of a
/// [`DeviationRecord`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub frame_index: u64,
    pub timestamp: f64,
    pub marker_id: u32,
    pub dx: f64,
    pub dy: f64,
    pub cov_trace: f64,
    pub status: TrackStatus,
}

impl From<&DeviationRecord> for DeviationRow {
    fn from(r: &DeviationRecord) -> Self {
        Self {
            frame_index: r.frame_index,
            timestamp: r.timestamp,
            marker_id: r.marker_id,
            dx: r.deviation.x,
            dy: r.deviation.y,
            cov_trace: r.cov_trace,
            status: r.status,
        }
    }
}

impl DeviationRow {
    fn to_bytes(self) -> [u8; BINARY_RECORD_LEN] {
        let mut b = [0u8; BINARY_RECORD_LEN];
        b[0..8].copy_from_slice(&self.frame_index.to_le_bytes());
        b[8..16].copy_from_slice(&self.timestamp.to_le_bytes());
        b[16..20].copy_from_slice(&self.marker_id.to_le_bytes());
        b[20] = self.status.code();
        // 21..24 reserved, zero
        b[24..32].copy_from_slice(&self.dx.to_le_bytes());
        b[32..40].copy_from_slice(&self.dy.to_le_bytes());
        b[40..48].copy_from_slice(&self.cov_trace.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8; BINARY_RECORD_LEN]) -> Result<Self> {
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let status =
            TrackStatus::from_code(b[20]).ok_or_else(|| Error::Format(format!("unknown status code {}", b[20])))?;
        Ok(Self {
            frame_index: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            timestamp: f64_at(8),
            marker_id: u32::from_le_bytes(b[16..20].try_into().unwrap()),
            status,
            dx: f64_at(24),
            dy: f64_at(32),
            cov_trace: f64_at(40),
        })
    }

    fn to_line(self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.frame_index,
            self.timestamp,
            self.marker_id,
            self.dx,
            self.dy,
            self.cov_trace,
            self.status.as_str()
        )
    }

    fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("deviation line {lineno}: bad {what}: {line:?}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad("field count"));
        }
        Ok(Self {
            frame_index: fields[0].parse().map_err(|_| bad("frame_index"))?,
            timestamp: fields[1].parse().map_err(|_| bad("timestamp"))?,
            marker_id: fields[2].parse().map_err(|_| bad("marker_id"))?,
            dx: fields[3].parse().map_err(|_| bad("dx"))?,
            dy: fields[4].parse().map_err(|_| bad("dy"))?,
            cov_trace: fields[5].parse().map_err(|_| bad("cov_trace"))?,
            status: TrackStatus::parse(fields[6]).ok_or_else(|| bad("status"))?,
        })
    }
}

/// Streaming writer for deviation records.
pub struct DeviationWriter<W: Write> {
    out: W,
    format: StreamFormat,
}

impl<W: Write> DeviationWriter<W> {
    pub fn new(mut out: W, format: StreamFormat) -> std::io::Result<Self> {
        match format {
            StreamFormat::Text => {
                writeln!(out, "{TEXT_MAGIC}")?;
                writeln!(out, "{TEXT_COLUMNS}")?;
            }
            StreamFormat::Binary => {
                out.write_all(&BINARY_MAGIC)?;
                out.write_all(&BINARY_VERSION.to_le_bytes())?;
                out.write_all(&(BINARY_RECORD_LEN as u16).to_le_bytes())?;
            }
        }
        Ok(Self { out, format })
    }

    pub fn write_records(&mut self, records: &[DeviationRecord]) -> std::io::Result<()> {
        for r in records {
            let row = DeviationRow::from(r);
            match self.format {
                StreamFormat::Text => writeln!(self.out, "{}", row.to_line())?,
                StreamFormat::Binary => self.out.write_all(&row.to_bytes())?,
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Encodes a full record list in memory.
pub fn encode_deviations(records: &[DeviationRecord], format: StreamFormat) -> Vec<u8> {
    let mut w = DeviationWriter::new(Vec::new(), format).expect("in-memory write");
    w.write_records(records).expect("in-memory write");
    w.finish().expect("in-memory write")
}

/// Decodes either stream format, detected from the leading bytes.
pub fn decode_deviations(bytes: &[u8]) -> Result<Vec<DeviationRow>> {
    if bytes.starts_with(&BINARY_MAGIC) {
        if bytes.len() < 8 {
            return Err(Error::Format("truncated binary header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BINARY_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version as u32,
                expected: BINARY_VERSION as u32,
            });
        }
        let rec_len = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if rec_len != BINARY_RECORD_LEN {
            return Err(Error::Format(format!(
                "record length {rec_len}, expected {BINARY_RECORD_LEN}"
            )));
        }
        let body = &bytes[8..];
        if body.len() % BINARY_RECORD_LEN != 0 {
            return Err(Error::Format("binary stream ends mid-record".into()));
        }
        return body
            .chunks_exact(BINARY_RECORD_LEN)
            .map(|c| DeviationRow::from_bytes(c.try_into().unwrap()))
            .collect();
    }

    let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("deviation stream is not UTF-8".into()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == TEXT_MAGIC => {}
        _ => return Err(Error::Format("missing deviation stream header".into())),
    }
    match lines.next() {
        Some((_, l)) if l == TEXT_COLUMNS => {}
        _ => return Err(Error::Format("missing deviation column header".into())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| DeviationRow::parse_line(l, i + 1))
        .collect()
}

pub fn write_truth<W: Write>(mut out: W, fields: &[(usize, DeviationField)]) -> std::io::Result<()> {
    writeln!(out, "{TRUTH_COLUMNS}")?;
    for (frame, field) in fields {
        for (id, d) in field.displacements().iter().enumerate() {
            // `+ 0.0` folds negative zero so untouched markers print as 0.
            writeln!(out, "{frame},{id},{},{}", d.x + 0.0, d.y + 0.0)?;
        }
    }
    out.flush()
}

/// Reads a truth file into per-frame displacement lists.
pub fn read_truth(path: &Path) -> Result<Vec<Vec<Point2>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames: Vec<Vec<Point2>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line != TRUTH_COLUMNS {
                return Err(Error::Format(format!("{}: missing truth header", path.display())));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("{} line {}: {line:?}", path.display(), i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let frame: usize = f[0].parse().map_err(|_| bad())?;
        let id: usize = f[1].parse().map_err(|_| bad())?;
        let d = Point2::new(f[2].parse().map_err(|_| bad())?, f[3].parse().map_err(|_| bad())?);
        if frame == frames.len() {
            frames.push(Vec::new());
        }
        if frame + 1 != frames.len() || id != frames[frame].len() {
            return Err(bad());
        }
        frames[frame].push(d);
    }
    Ok(frames)
}

/// Describes a directory written by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub format_version: u32,
    pub n_frames: usize,
    pub fps: f64,
    pub frame_prefix: String,
    pub frame_digits: usize,
    pub frame_extension: String,
    pub truth_file: String,
    pub scenario: Scenario,
}

impl SequenceManifest {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            format_version: LAYOUT_FORMAT_VERSION,
            n_frames: scenario.n_frames,
            fps: scenario.fps,
            frame_prefix: "frame_".into(),
            frame_digits: 6,
            frame_extension: "png".into(),
            truth_file: TRUTH_FILE.into(),
            scenario: scenario.clone(),
        }
    }

    pub fn frame_name(&self, index: usize) -> String {
        format!(
            "{}{:0width$}.{}",
            self.frame_prefix,
            index,
            self.frame_extension,
            width = self.frame_digits
        )
    }

    pub fn layout(&self) -> &MarkerLayout {
        &self.scenario.layout
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        check_version(&table)?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Sidecar header for a raw concatenated 8-bit frame stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (interleaved RGB).
    pub channels: usize,
    pub fps: f64,
}

impl RawHeader {
    pub fn frame_bytes(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// Sidecar path: the stream path with `.hdr` appended.
    pub fn sidecar_path(stream: &Path) -> PathBuf {
        let mut s = stream.as_os_str().to_owned();
        s.push(".hdr");
        PathBuf::from(s)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != LAYOUT_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                expected: LAYOUT_FORMAT_VERSION,
            });
        }
        if self.width == 0 || self.height == 0 || !matches!(self.channels, 1 | 3) || !(self.fps > 0.0) {
            return Err(Error::Format(format!("invalid raw header {self:?}")));
        }
        Ok(())
    }
}

/// Writes gray frames as a raw stream plus its `.hdr` sidecar.
pub fn write_raw_stream(path: &Path, frames: &[GrayFrame], fps: f64) -> Result<RawHeader> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Format("cannot write an empty raw stream".into()))?;
    let header = RawHeader {
        format_version: LAYOUT_FORMAT_VERSION,
        width: first.width(),
        height: first.height(),
        channels: 1,
        fps,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for f in frames {
        if f.size() != first.size() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", first.width(), first.height()),
                got: format!("{}x{}", f.width(), f.height()),
            });
        }
        out.write_all(&f.to_u8()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = RawHeader::sidecar_path(path);
    let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(header)
}

/// Decodes one image file into a gray frame.
pub fn read_image(path: &Path, timestamp: f64) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => GrayFrame::from_u8(w, h, buf.as_raw(), timestamp),
        other => {
            let rgb = other.to_rgb8();
            to_gray(&RgbFrame::from_interleaved_u8(w, h, rgb.as_raw(), timestamp)?)
        }
    }
}

/// Encodes a gray frame as an 8-bit PNG (or PGM for a `.pgm` path).
pub fn write_image(path: &Path, frame: &GrayFrame) -> Result<()> {
    let buf = image::GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.to_u8())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Numeric key of a file name: the last run of digits in its stem.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

enum SourceKind {
    Directory {
        files: Vec<PathBuf>,
    },
    Raw {
        reader: BufReader<File>,
        header: RawHeader,
        path: PathBuf,
    },
}

/// Ordered frames from an image directory or a raw stream.
pub struct FrameSource {
    kind: SourceKind,
    fps: f64,
    len: usize,
    next: usize,
    manifest: Option<SequenceManifest>,
}

impl FrameSource {
    /// Opens a directory of numbered images (optionally with a
    /// `manifest.toml`) or a raw stream with a `.hdr` sidecar.
    pub fn open(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::open_dir(path)
        } else {
            Self::open_raw(path)
        }
    }

    fn open_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            Some(SequenceManifest::load(&manifest_path)?)
        } else {
            None
        };
        let mut files: Vec<(u64, PathBuf)> = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_file() && is_image(&p) {
                if let Some(n) = frame_number(&p) {
                    files.push((n, p));
                }
            }
        }
        files.sort();
        if files.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Format(format!("{}: duplicate frame numbers", dir.display())));
        }
        let fps = manifest.as_ref().map_or(DEFAULT_FPS, |m| m.fps);
        let files: Vec<PathBuf> = files.into_iter().map(|(_, p)| p).collect();
        Ok(Self {
            len: files.len(),
            kind: SourceKind::Directory { files },
            fps,
            next: 0,
            manifest,
        })
    }

    fn open_raw(path: &Path) -> Result<Self> {
        let sidecar = RawHeader::sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let header: RawHeader =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", sidecar.display())))?;
        header.validate()?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let size = file.metadata().map_err(|e| Error::io(path, e))?.len() as usize;
        if size % header.frame_bytes() != 0 {
            return Err(Error::Format(format!(
                "{}: {size} bytes is not a whole number of {}-byte frames",
                path.display(),
                header.frame_bytes()
            )));
        }
        Ok(Self {
            len: size / header.frame_bytes(),
            fps: header.fps,
            kind: SourceKind::Raw {
                reader: BufReader::new(file),
                header,
                path: path.to_path_buf(),
            },
            next: 0,
            manifest: None,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn manifest(&self) -> Option<&SequenceManifest> {
        self.manifest.as_ref()
    }

    fn read_next(&mut self) -> Result<GrayFrame> {
        let index = self.next;
        let timestamp = index as f64 / self.fps;
        match &mut self.kind {
            SourceKind::Directory { files } => read_image(&files[index], timestamp),
            SourceKind::Raw { reader, header, path } => {
                let mut buf = vec![0u8; header.frame_bytes()];
                reader.read_exact(&mut buf).map_err(|e| Error::io(path.as_path(), e))?;
                match header.channels {
                    1 => GrayFrame::from_u8(header.width, header.height, &buf, timestamp),
                    _ => to_gray(&RgbFrame::from_interleaved_u8(
                        header.width,
                        header.height,
                        &buf,
                        timestamp,
                    )?),
                }
            }
        }
    }
}

impl Iterator for FrameSource {
    type Item = Result<GrayFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.len {
            return None;
        }
        let frame = self.read_next();
        self.next += 1;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.len - self.next;
        (left, Some(left))
    }
}

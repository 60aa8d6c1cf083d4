//! Event, flow-record, ground-truth and prediction file formats.
//!
//! Events are stored either as CSV lines `t_us,x,y,polarity` or in a packed
//! little-endian binary form: a 16 byte header (`b"EVT1"`, `u16` width,
//! `u16` height, `u64` record count) followed by 13 byte records
//! (`u64` t, `u16` x, `u16` y, `u8` polarity).

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

use crate::event::{Event, Micros, Polarity, SensorGeometry};
use crate::flow::FlowVector;
use crate::pipeline::FlowRecord;
use crate::predict::PredictedEvent;
use crate::scalar::Scalar;
use crate::synth::LabeledEvent;

pub const BINARY_MAGIC: &[u8; 4] = b"EVT1";
pub const BINARY_HEADER_LEN: u64 = 16;
pub const BINARY_RECORD_LEN: u64 = 13;

pub const FLOW_HEADER: &str = "t,x,y,p,vx,vy,valid,chosen_radius";
pub const TRUTH_HEADER: &str = "t,x,y,p,vx_true,vy_true,object_id";
pub const PREDICTION_HEADER: &str = "t,x,y,p,horizon";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Line(usize),
    Offset(u64),
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Line(l) => write!(f, "line {l}"),
            Position::Offset(o) => write!(f, "byte offset {o}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("parse error at {at}: {message}")]
    Parse { at: Position, message: String },
    #[error("timestamp {t} at {at} precedes {last}")]
    NonMonotonicTimestamp { at: Position, t: Micros, last: Micros },
    #[error("event ({x}, {y}) at {at} is outside the {width}x{height} sensor")]
    Bounds {
        at: Position,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
}

impl IoError {
    fn parse(at: Position, message: impl Into<String>) -> Self {
        IoError::Parse {
            at,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// `.bin`, `.evt` and `.evt1` are binary; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("bin" | "evt" | "evt1") => EventFormat::Binary,
            _ => EventFormat::Csv,
        }
    }
}

enum Source<R> {
    Csv { reader: R, line: usize, buf: String },
    Binary { reader: R, remaining: u64, offset: u64 },
}

/// Streaming event decoder that validates ordering and, when the geometry is
/// known, bounds. Iteration stops after the first error.
pub struct EventReader<R> {
    source: Source<R>,
    geometry: Option<SensorGeometry>,
    last_t: Option<Micros>,
    failed: bool,
}

impl<R: BufRead> EventReader<R> {
    pub fn csv(reader: R, geometry: Option<SensorGeometry>) -> Self {
        Self {
            source: Source::Csv {
                reader,
                line: 0,
                buf: String::new(),
            },
            geometry,
            last_t: None,
            failed: false,
        }
    }

    /// Reads the header; `geometry` overrides the one stored in the file.
    pub fn binary(mut reader: R, geometry: Option<SensorGeometry>) -> Result<Self, IoError> {
        let mut header = [0u8; BINARY_HEADER_LEN as usize];
        reader
            .read_exact(&mut header)
            .map_err(|_| IoError::parse(Position::Offset(0), "truncated header"))?;
        if &header[0..4] != BINARY_MAGIC {
            return Err(IoError::parse(Position::Offset(0), "bad magic, expected EVT1"));
        }
        let width = u16::from_le_bytes([header[4], header[5]]);
        let height = u16::from_le_bytes([header[6], header[7]]);
        let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
        let stored = SensorGeometry::new(width, height)
            .map_err(|e| IoError::parse(Position::Offset(4), e.to_string()))?;
        Ok(Self {
            source: Source::Binary {
                reader,
                remaining: count,
                offset: BINARY_HEADER_LEN,
            },
            geometry: Some(geometry.unwrap_or(stored)),
            last_t: None,
            failed: false,
        })
    }

    pub fn geometry(&self) -> Option<SensorGeometry> {
        self.geometry
    }

    fn decode_next(&mut self) -> Option<Result<(Event, Position), IoError>> {
        match &mut self.source {
            Source::Csv { reader, line, buf } => loop {
                buf.clear();
                match reader.read_line(buf) {
                    Ok(0) => return None,
                    Ok(_) => {}
                    Err(e) => return Some(Err(e.into())),
                }
                *line += 1;
                let text = buf.trim();
                if text.is_empty() || text.starts_with('#') {
                    continue;
                }
                if *line == 1 && text.starts_with(|c: char| c.is_ascii_alphabetic()) {
                    continue;
                }
                let at = Position::Line(*line);
                return Some(parse_csv_event(text).map(|e| (e, at)).map_err(|m| IoError::parse(at, m)));
            },
            Source::Binary {
                reader,
                remaining,
                offset,
            } => {
                if *remaining == 0 {
                    return None;
                }
                let at = Position::Offset(*offset);
                let mut rec = [0u8; BINARY_RECORD_LEN as usize];
                if reader.read_exact(&mut rec).is_err() {
                    *remaining = 0;
                    return Some(Err(IoError::parse(at, "truncated record")));
                }
                *remaining -= 1;
                *offset += BINARY_RECORD_LEN;
                let t = u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
                let x = u16::from_le_bytes([rec[8], rec[9]]);
                let y = u16::from_le_bytes([rec[10], rec[11]]);
                if rec[12] > 1 {
                    return Some(Err(IoError::parse(at, format!("polarity byte {} is not 0 or 1", rec[12]))));
                }
                Some(Ok((Event::new(t, x, y, Polarity::from_u8(rec[12])), at)))
            }
        }
    }
}

fn parse_csv_event(text: &str) -> Result<Event, String> {
    let mut fields = text.split(',').map(str::trim);
    let mut next = |name: &str| fields.next().ok_or_else(|| format!("missing field `{name}`"));
    let t = next("t")?;
    let x = next("x")?;
    let y = next("y")?;
    let p = next("polarity")?;
    if fields.next().is_some() {
        return Err("expected 4 fields".into());
    }
    let t: Micros = t.parse().map_err(|_| format!("bad timestamp `{t}`"))?;
    let x: u16 = x.parse().map_err(|_| format!("bad x `{x}`"))?;
    let y: u16 = y.parse().map_err(|_| format!("bad y `{y}`"))?;
    let p = match p {
        "0" | "-1" => Polarity::Off,
        "1" => Polarity::On,
        other => return Err(format!("bad polarity `{other}`")),
    };
    Ok(Event::new(t, x, y, p))
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = match self.decode_next()? {
            Ok((e, at)) => self.validate(e, at),
            Err(err) => Err(err),
        };
        self.failed = item.is_err();
        Some(item)
    }
}

impl<R> EventReader<R> {
    fn validate(&mut self, e: Event, at: Position) -> Result<Event, IoError> {
        if let Some(g) = self.geometry {
            if !g.contains(e.x, e.y) {
                return Err(IoError::Bounds {
                    at,
                    x: e.x,
                    y: e.y,
                    width: g.width,
                    height: g.height,
                });
            }
        }
        if let Some(last) = self.last_t {
            if e.t < last {
                return Err(IoError::NonMonotonicTimestamp { at, t: e.t, last });
            }
        }
        self.last_t = Some(e.t);
        Ok(e)
    }
}

pub fn open_events(
    path: &Path,
    format: EventFormat,
    geometry: Option<SensorGeometry>,
) -> Result<EventReader<BufReader<File>>, IoError> {
    let reader = BufReader::with_capacity(1 << 16, File::open(path)?);
    match format {
        EventFormat::Csv => Ok(EventReader::csv(reader, geometry)),
        EventFormat::Binary => EventReader::binary(reader, geometry),
    }
}

/// Reads a whole event file; returns the geometry if the file or caller knew it.
pub fn read_events(
    path: &Path,
    format: EventFormat,
    geometry: Option<SensorGeometry>,
) -> Result<(Option<SensorGeometry>, Vec<Event>), IoError> {
    let reader = open_events(path, format, geometry)?;
    let g = reader.geometry();
    let events = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((g, events))
}

pub fn write_events_csv<W: Write>(mut w: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_u8())?;
    }
    w.flush()
}

fn binary_header(geometry: SensorGeometry, count: u64) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[0..4].copy_from_slice(BINARY_MAGIC);
    h[4..6].copy_from_slice(&geometry.width.to_le_bytes());
    h[6..8].copy_from_slice(&geometry.height.to_le_bytes());
    h[8..16].copy_from_slice(&count.to_le_bytes());
    h
}

fn binary_record(e: &Event) -> [u8; 13] {
    let mut r = [0u8; 13];
    r[0..8].copy_from_slice(&e.t.to_le_bytes());
    r[8..10].copy_from_slice(&e.x.to_le_bytes());
    r[10..12].copy_from_slice(&e.y.to_le_bytes());
    r[12] = e.polarity.as_u8();
    r
}

pub fn write_events_binary<W: Write>(mut w: W, geometry: SensorGeometry, events: &[Event]) -> io::Result<()> {
    w.write_all(&binary_header(geometry, events.len() as u64))?;
    for e in events {
        w.write_all(&binary_record(e))?;
    }
    w.flush()
}

/// Binary writer for streams of unknown length; the record count is patched
/// into the header by [`finish`](Self::finish).
pub struct BinaryEventWriter<W: Write + Seek> {
    inner: W,
    geometry: SensorGeometry,
    count: u64,
}

impl<W: Write + Seek> BinaryEventWriter<W> {
    pub fn new(mut inner: W, geometry: SensorGeometry) -> io::Result<Self> {
        inner.write_all(&binary_header(geometry, 0))?;
        Ok(Self {
            inner,
            geometry,
            count: 0,
        })
    }

    pub fn write(&mut self, e: &Event) -> io::Result<()> {
        self.count += 1;
        self.inner.write_all(&binary_record(e))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.seek(SeekFrom::Start(0))?;
        self.inner.write_all(&binary_header(self.geometry, self.count))?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_events(path: &Path, format: EventFormat, geometry: SensorGeometry, events: &[Event]) -> io::Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        EventFormat::Csv => write_events_csv(w, events),
        EventFormat::Binary => write_events_binary(w, geometry, events),
    }
}

/// Flow record CSV writer; the header is written on construction.
pub struct FlowRecordWriter<W: Write> {
    inner: W,
}

impl<W: Write> FlowRecordWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        writeln!(inner, "{FLOW_HEADER}")?;
        Ok(Self { inner })
    }

    pub fn write<T: Scalar>(&mut self, r: &FlowRecord<T>) -> io::Result<()> {
        let e = &r.event;
        writeln!(
            self.inner,
            "{},{},{},{},{},{},{},{}",
            e.t,
            e.x,
            e.y,
            e.polarity.as_u8(),
            r.flow.vx,
            r.flow.vy,
            u8::from(r.valid),
            r.chosen_radius.map_or(-1, |c| c as i64)
        )
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// One parsed flow record row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRow {
    pub event: Event,
    pub flow: FlowVector<f64>,
    pub valid: bool,
    pub chosen_radius: Option<u32>,
}

fn csv_rows<R: BufRead>(reader: R, header: &str) -> impl Iterator<Item = Result<(usize, Vec<String>), IoError>> {
    let header = header.to_string();
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || (i == 0 && text == header) {
            return None;
        }
        Some(Ok((i + 1, text.split(',').map(|s| s.trim().to_string()).collect())))
    })
}

fn field<T: std::str::FromStr>(cols: &[String], k: usize, line: usize, name: &str) -> Result<T, IoError> {
    cols.get(k)
        .ok_or_else(|| IoError::parse(Position::Line(line), format!("missing field `{name}`")))?
        .parse()
        .map_err(|_| IoError::parse(Position::Line(line), format!("bad `{name}` value `{}`", cols[k])))
}

fn row_event(cols: &[String], line: usize) -> Result<Event, IoError> {
    let p: u8 = field(cols, 3, line, "p")?;
    Ok(Event::new(
        field(cols, 0, line, "t")?,
        field(cols, 1, line, "x")?,
        field(cols, 2, line, "y")?,
        Polarity::from_u8(p),
    ))
}

pub fn read_flow_records<R: BufRead>(reader: R) -> Result<Vec<FlowRow>, IoError> {
    csv_rows(reader, FLOW_HEADER)
        .map(|row| {
            let (line, cols) = row?;
            if cols.len() != 8 {
                return Err(IoError::parse(Position::Line(line), "expected 8 fields"));
            }
            let radius: i64 = field(&cols, 7, line, "chosen_radius")?;
            let valid: u8 = field(&cols, 6, line, "valid")?;
            Ok(FlowRow {
                event: row_event(&cols, line)?,
                flow: FlowVector::new(field(&cols, 4, line, "vx")?, field(&cols, 5, line, "vy")?),
                valid: valid != 0,
                chosen_radius: u32::try_from(radius).ok(),
            })
        })
        .collect()
}

pub fn write_truth_csv<W: Write>(mut w: W, events: &[LabeledEvent]) -> io::Result<()> {
    writeln!(w, "{TRUTH_HEADER}")?;
    for l in events {
        let e = &l.event;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.t,
            e.x,
            e.y,
            e.polarity.as_u8(),
            l.true_flow.vx,
            l.true_flow.vy,
            l.object_id.map_or(-1, |id| id as i64)
        )?;
    }
    w.flush()
}

pub fn read_truth_csv<R: BufRead>(reader: R) -> Result<Vec<LabeledEvent>, IoError> {
    csv_rows(reader, TRUTH_HEADER)
        .map(|row| {
            let (line, cols) = row?;
            if cols.len() != 7 {
                return Err(IoError::parse(Position::Line(line), "expected 7 fields"));
            }
            let id: i64 = field(&cols, 6, line, "object_id")?;
            Ok(LabeledEvent {
                event: row_event(&cols, line)?,
                true_flow: FlowVector::new(field(&cols, 4, line, "vx_true")?, field(&cols, 5, line, "vy_true")?),
                object_id: u32::try_from(id).ok(),
            })
        })
        .collect()
}

/// Predicted events as `t,x,y,p,horizon` with `t` the predicted time and
/// continuous coordinates. The header is written on construction.
pub struct PredictionWriter<W: Write> {
    inner: W,
}

impl<W: Write> PredictionWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        writeln!(inner, "{PREDICTION_HEADER}")?;
        Ok(Self { inner })
    }

    pub fn write<T: Scalar>(&mut self, p: &PredictedEvent<T>) -> io::Result<()> {
        writeln!(
            self.inner,
            "{},{},{},{},{}",
            p.predicted_t(),
            p.px,
            p.py,
            p.source.polarity.as_u8(),
            p.horizon
        )
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_predictions<W: Write, T: Scalar>(w: W, preds: &[PredictedEvent<T>]) -> io::Result<()> {
    let mut pw = PredictionWriter::new(w)?;
    for p in preds {
        pw.write(p)?;
    }
    pw.finish().map(drop)
}

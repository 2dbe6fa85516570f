//! JSON-lines session files.
//!
//! The first line is a header object; each following line is one frame with
//! short field names. Timestamps must strictly increase.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use mugeetion_core::FacialFrame;
use serde::{Deserialize, Serialize};

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub format_version: u32,
    pub created: String,
    pub source: String,
}

impl SessionHeader {
    pub fn now(source: &str) -> Self {
        SessionHeader {
            format_version: SESSION_FORMAT_VERSION,
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t_ms: u64,
    found: u8,
    mw: f64,
    mh: f64,
    ebl: f64,
    ebr: f64,
    eyl: f64,
    eyr: f64,
    jaw: f64,
    no: f64,
}

impl From<&FacialFrame> for Record {
    fn from(f: &FacialFrame) -> Self {
        Record {
            t_ms: f.timestamp_ms,
            found: f.face_found as u8,
            mw: f.mouth_width,
            mh: f.mouth_height,
            ebl: f.eyebrow_left,
            ebr: f.eyebrow_right,
            eyl: f.eye_left,
            eyr: f.eye_right,
            jaw: f.jaw,
            no: f.nostrils,
        }
    }
}

impl Record {
    fn frame(&self) -> FacialFrame {
        FacialFrame::from_features(
            self.t_ms,
            self.found != 0,
            [
                self.mw, self.mh, self.ebl, self.ebr, self.eyl, self.eyr, self.jaw, self.no,
            ],
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("line 1: bad session header: {0}")]
    BadHeader(String),
    #[error("line {line}: timestamp {t_ms} does not increase")]
    NonMonotonicTime { line: usize, t_ms: u64 },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streams frames to a session file.
pub struct SessionWriter<W: Write> {
    out: W,
    last_t: Option<u64>,
    written: usize,
}

impl SessionWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &SessionHeader) -> Result<Self, SessionError> {
        SessionWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: &SessionHeader) -> Result<Self, SessionError> {
        serde_json::to_writer(&mut out, header).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(SessionWriter {
            out,
            last_t: None,
            written: 0,
        })
    }

    pub fn append(&mut self, frame: &FacialFrame) -> Result<(), SessionError> {
        if self.last_t.is_some_and(|t| frame.timestamp_ms <= t) {
            return Err(SessionError::NonMonotonicTime {
                line: self.written + 2,
                t_ms: frame.timestamp_ms,
            });
        }
        serde_json::to_writer(&mut self.out, &Record::from(frame)).map_err(io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_t = Some(frame.timestamp_ms);
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<W, SessionError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a whole session to `path`.
pub fn write_session(
    path: &Path,
    header: &SessionHeader,
    frames: &[FacialFrame],
) -> Result<(), SessionError> {
    let mut w = SessionWriter::create(path, header)?;
    for f in frames {
        w.append(f)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads and validates a whole session before anything is replayed.
pub fn read_session<R: BufRead>(input: R) -> Result<(SessionHeader, Vec<FacialFrame>), SessionError> {
    let mut lines = input.lines();
    let first = lines
        .next()
        .transpose()?
        .ok_or_else(|| SessionError::BadHeader("file is empty".into()))?;
    let header: SessionHeader =
        serde_json::from_str(&first).map_err(|e| SessionError::BadHeader(e.to_string()))?;
    if header.format_version != SESSION_FORMAT_VERSION {
        return Err(SessionError::BadHeader(format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }
    let mut frames: Vec<FacialFrame> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| SessionError::BadRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.found > 1 {
            return Err(SessionError::BadRecord {
                line: line_no,
                message: format!("found must be 0 or 1, got {}", rec.found),
            });
        }
        if frames.last().is_some_and(|p| rec.t_ms <= p.timestamp_ms) {
            return Err(SessionError::NonMonotonicTime {
                line: line_no,
                t_ms: rec.t_ms,
            });
        }
        frames.push(rec.frame());
    }
    Ok((header, frames))
}

pub fn load_session(path: &Path) -> Result<(SessionHeader, Vec<FacialFrame>), SessionError> {
    read_session(BufReader::new(File::open(path)?))
}

/// Replay rate relative to the recorded timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    Max,
    Factor(f64),
}

impl Default for Speed {
    fn default() -> Self {
        Speed::Factor(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("speed must be \"max\" or a positive number, got {0:?}")]
pub struct BadSpeed(pub String);

impl std::str::FromStr for Speed {
    type Err = BadSpeed;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Speed::Max);
        }
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(Speed::Factor(x)),
            _ => Err(BadSpeed(s.into())),
        }
    }
}

impl std::fmt::Display for Speed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Speed::Max => f.write_str("max"),
            Speed::Factor(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Speed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Speed::Max => s.serialize_str("max"),
            Speed::Factor(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => x.to_string().parse(),
            Repr::Word(w) => w.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Sleeps so frames come out at their recorded offsets divided by the speed.
///
/// Deadlines are measured from the first frame, so per-frame sleep error
/// does not accumulate.
#[derive(Debug)]
pub struct Pacer {
    speed: Speed,
    origin: Option<(Instant, u64)>,
}

impl Pacer {
    pub fn new(speed: Speed) -> Self {
        Pacer { speed, origin: None }
    }

    pub fn wait_for(&mut self, timestamp_ms: u64) {
        let Speed::Factor(k) = self.speed else {
            return;
        };
        let (start, t0) = *self.origin.get_or_insert((Instant::now(), timestamp_ms));
        let offset = timestamp_ms.saturating_sub(t0) as f64 / k;
        let deadline = start + Duration::from_secs_f64(offset / 1000.0);
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
    }
}

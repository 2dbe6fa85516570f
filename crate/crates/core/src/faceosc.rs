//! FaceOSC gesture schema and burst-to-frame assembly.
//!
//! FaceOSC sends one burst of `/gesture/...` messages per video frame with no
//! delimiter. [`FrameAssembler`] opens a buffer at the first gesture message
//! and flushes it when all eight features are present, when an address
//! repeats (the repeat starts the next burst) or when 50 ms have passed.
//! Features missing from a flushed burst are held from the previous frame; a
//! partial burst with no previous frame is dropped.

use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use crate::osc::{OscArg, OscMessage};

/// Gap after which an open burst is flushed.
pub const BURST_TIMEOUT_MS: u64 = 50;

/// Multiple of the calibrated span a value may sit from the span midpoint
/// before the decoder treats it as a tracking glitch.
pub const SANITY_SPAN_MULTIPLE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Feature {
    MouthWidth,
    MouthHeight,
    EyebrowLeft,
    EyebrowRight,
    EyeLeft,
    EyeRight,
    Jaw,
    Nostrils,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn span(self) -> f64 {
        self.max - self.min
    }

    pub fn midpoint(self) -> f64 {
        (self.min + self.max) / 2.0
    }

    /// Reflects `x` about the range midpoint: `max + min - x`.
    pub fn invert(self, x: f64) -> f64 {
        self.max + self.min - x
    }
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::MouthWidth,
        Feature::MouthHeight,
        Feature::EyebrowLeft,
        Feature::EyebrowRight,
        Feature::EyeLeft,
        Feature::EyeRight,
        Feature::Jaw,
        Feature::Nostrils,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::MouthWidth => "mouth_width",
            Feature::MouthHeight => "mouth_height",
            Feature::EyebrowLeft => "eyebrow_left",
            Feature::EyebrowRight => "eyebrow_right",
            Feature::EyeLeft => "eye_left",
            Feature::EyeRight => "eye_right",
            Feature::Jaw => "jaw",
            Feature::Nostrils => "nostrils",
        }
    }

    pub fn address(self) -> &'static str {
        match self {
            Feature::MouthWidth => "/gesture/mouth/width",
            Feature::MouthHeight => "/gesture/mouth/height",
            Feature::EyebrowLeft => "/gesture/eyebrow/left",
            Feature::EyebrowRight => "/gesture/eyebrow/right",
            Feature::EyeLeft => "/gesture/eye/left",
            Feature::EyeRight => "/gesture/eye/right",
            Feature::Jaw => "/gesture/jaw",
            Feature::Nostrils => "/gesture/nostrils",
        }
    }

    pub fn from_address(addr: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.address() == addr)
    }

    /// Observed FaceOSC range of the feature over the calibration set.
    pub fn calibrated_range(self) -> FeatureRange {
        let (min, max) = match self {
            Feature::MouthWidth => (6.0244, 19.2747),
            Feature::MouthHeight => (0.8893, 3.0010),
            Feature::EyebrowLeft => (6.7666, 8.0714),
            Feature::EyebrowRight => (6.6787, 7.9785),
            Feature::EyeLeft => (2.4329, 3.4357),
            Feature::EyeRight => (2.3950, 3.3144),
            Feature::Jaw => (18.9888, 22.9718),
            Feature::Nostrils => (5.6477, 8.8061),
        };
        FeatureRange { min, max }
    }

    /// True when `x` is finite and within the sanity bound around the
    /// calibrated range.
    pub fn is_plausible(self, x: f64) -> bool {
        let r = self.calibrated_range();
        x.is_finite() && libm::fabs(x - r.midpoint()) <= SANITY_SPAN_MULTIPLE * r.span()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature name")]
pub struct UnknownFeature;

impl FromStr for Feature {
    type Err = UnknownFeature;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or(UnknownFeature)
    }
}

/// One time-stamped snapshot of the eight FaceOSC gesture features.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FacialFrame {
    /// Milliseconds since session start.
    pub timestamp_ms: u64,
    pub face_found: bool,
    pub mouth_width: f64,
    pub mouth_height: f64,
    pub eyebrow_left: f64,
    pub eyebrow_right: f64,
    pub eye_left: f64,
    pub eye_right: f64,
    pub jaw: f64,
    pub nostrils: f64,
}

impl FacialFrame {
    pub fn from_features(timestamp_ms: u64, face_found: bool, values: [f64; 8]) -> Self {
        let [mouth_width, mouth_height, eyebrow_left, eyebrow_right, eye_left, eye_right, jaw, nostrils] =
            values;
        FacialFrame {
            timestamp_ms,
            face_found,
            mouth_width,
            mouth_height,
            eyebrow_left,
            eyebrow_right,
            eye_left,
            eye_right,
            jaw,
            nostrils,
        }
    }

    pub fn features(&self) -> [f64; 8] {
        [
            self.mouth_width,
            self.mouth_height,
            self.eyebrow_left,
            self.eyebrow_right,
            self.eye_left,
            self.eye_right,
            self.jaw,
            self.nostrils,
        ]
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.features()[feature.index()]
    }

    pub fn set(&mut self, feature: Feature, value: f64) {
        let mut v = self.features();
        v[feature.index()] = value;
        *self = FacialFrame::from_features(self.timestamp_ms, self.face_found, v);
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaceOscError {
    #[error("unknown address {0}")]
    UnknownAddress(alloc::string::String),
    #[error("wrong arguments for {0}")]
    WrongArity(alloc::string::String),
    #[error("{feature} value {value} outside sanity bound")]
    Implausible { feature: Feature, value: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblerStats {
    pub frames: u64,
    pub dropped_partial: u64,
    pub rejected: u64,
}

/// Stateful FaceOSC burst assembler.
///
/// Feed messages with their arrival time via [`push`](Self::push) and call
/// [`poll`](Self::poll) periodically so a stalled burst is flushed on time.
#[derive(Debug, Clone, Default)]
pub struct FrameAssembler {
    pending: [Option<f64>; 8],
    opened_at: Option<u64>,
    previous: Option<[f64; 8]>,
    last_timestamp: Option<u64>,
    stats: AssemblerStats,
}

impl FrameAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> AssemblerStats {
        self.stats
    }

    /// Processes one message received at `now_ms`, appending any completed
    /// frames to `out`. Errors describe a skipped message and are never
    /// fatal; frames flushed before the error are still appended.
    pub fn push(
        &mut self,
        msg: &OscMessage,
        now_ms: u64,
        out: &mut Vec<FacialFrame>,
    ) -> Result<(), FaceOscError> {
        self.poll(now_ms, out);

        if msg.address == "/found" {
            let found = match msg.args.as_slice() {
                [OscArg::Int(v)] => *v != 0,
                _ => {
                    self.stats.rejected += 1;
                    return Err(FaceOscError::WrongArity(msg.address.clone()));
                }
            };
            if !found {
                self.flush(out);
                let held = self.previous.unwrap_or([0.0; 8]);
                let ts = self.next_timestamp(now_ms);
                self.emit(FacialFrame::from_features(ts, false, held), out);
            }
            return Ok(());
        }

        let Some(feature) = Feature::from_address(&msg.address) else {
            self.stats.rejected += 1;
            return Err(FaceOscError::UnknownAddress(msg.address.clone()));
        };
        let value = match msg.args.as_slice() {
            [OscArg::Float(v)] => widen(*v),
            _ => {
                self.stats.rejected += 1;
                return Err(FaceOscError::WrongArity(msg.address.clone()));
            }
        };
        if !feature.is_plausible(value) {
            self.stats.rejected += 1;
            return Err(FaceOscError::Implausible { feature, value });
        }

        if self.pending[feature.index()].is_some() {
            self.flush(out);
        }
        if self.opened_at.is_none() {
            self.opened_at = Some(now_ms);
        }
        self.pending[feature.index()] = Some(value);
        if self.pending.iter().all(Option::is_some) {
            self.flush(out);
        }
        Ok(())
    }

    /// Flushes the open burst if it has been waiting for the timeout.
    pub fn poll(&mut self, now_ms: u64, out: &mut Vec<FacialFrame>) {
        if let Some(opened) = self.opened_at {
            if now_ms.saturating_sub(opened) >= BURST_TIMEOUT_MS {
                self.flush(out);
            }
        }
    }

    /// Flushes whatever is buffered, as at end of stream.
    pub fn finish(&mut self, out: &mut Vec<FacialFrame>) {
        self.flush(out);
    }

    fn flush(&mut self, out: &mut Vec<FacialFrame>) {
        let Some(opened) = self.opened_at.take() else {
            return;
        };
        let pending = core::mem::take(&mut self.pending);
        let values = match (pending.iter().all(Option::is_some), self.previous) {
            (true, _) => pending.map(|v| v.unwrap_or_default()),
            (false, Some(prev)) => {
                let mut v = prev;
                for (slot, p) in v.iter_mut().zip(pending) {
                    if let Some(p) = p {
                        *slot = p;
                    }
                }
                v
            }
            (false, None) => {
                self.stats.dropped_partial += 1;
                return;
            }
        };
        self.previous = Some(values);
        let ts = self.next_timestamp(opened);
        self.emit(FacialFrame::from_features(ts, true, values), out);
    }

    fn next_timestamp(&mut self, candidate: u64) -> u64 {
        let ts = match self.last_timestamp {
            Some(last) if candidate <= last => last + 1,
            _ => candidate,
        };
        self.last_timestamp = Some(ts);
        ts
    }

    fn emit(&mut self, frame: FacialFrame, out: &mut Vec<FacialFrame>) {
        self.stats.frames += 1;
        out.push(frame);
    }
}

/// Decodes a time-stamped message stream into frames, skipping bad messages.
pub fn decode_faceosc<'a, I>(msgs: I) -> Vec<FacialFrame>
where
    I: IntoIterator<Item = (&'a OscMessage, u64)>,
{
    let mut asm = FrameAssembler::new();
    let mut out = Vec::new();
    for (msg, t) in msgs {
        let _ = asm.push(msg, t, &mut out);
    }
    asm.finish(&mut out);
    out
}

/// Widens an f32 to the f64 nearest its shortest decimal form, so a wire
/// value of `6.0244f32` becomes exactly `6.0244`.
pub fn widen(x: f32) -> f64 {
    if !x.is_finite() {
        return x as f64;
    }
    let mut buf = StackStr::<48>::new();
    if write!(buf, "{x}").is_err() {
        return x as f64;
    }
    buf.as_str().parse().unwrap_or(x as f64)
}

struct StackStr<const N: usize> {
    buf: [u8; N],
    len: usize,
}

impl<const N: usize> StackStr<N> {
    fn new() -> Self {
        StackStr { buf: [0; N], len: 0 }
    }

    fn as_str(&self) -> &str {
        core::str::from_utf8(&self.buf[..self.len]).unwrap_or("")
    }
}

impl<const N: usize> fmt::Write for StackStr<N> {
    fn write_str(&mut self, s: &str) -> fmt::Result {
        let end = self.len + s.len();
        if end > N {
            return Err(fmt::Error);
        }
        self.buf[self.len..end].copy_from_slice(s.as_bytes());
        self.len = end;
        Ok(())
    }
}

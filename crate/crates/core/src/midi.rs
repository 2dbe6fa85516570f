//! MIDI 1.0 channel voice messages and format-0 Standard MIDI Files.

use alloc::vec::Vec;
use core::fmt;

/// SMF division: ticks per quarter note.
pub const TICKS_PER_QUARTER: u16 = 480;

/// Largest value a variable-length quantity can hold (28 bits).
pub const VLQ_MAX: u32 = 0x0FFF_FFFF;

/// 7-bit MIDI data value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u8", into = "u8"))]
pub struct U7(u8);

impl U7 {
    pub const MAX: U7 = U7(127);

    pub fn new(v: u8) -> Option<U7> {
        (v < 0x80).then_some(U7(v))
    }

    pub fn clamped(v: i64) -> U7 {
        U7(v.clamp(0, 127) as u8)
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for U7 {
    type Error = OutOfRange;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        U7::new(v).ok_or(OutOfRange)
    }
}

impl From<U7> for u8 {
    fn from(v: U7) -> u8 {
        v.0
    }
}

/// MIDI channel, 0 to 15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u8", into = "u8"))]
pub struct Channel(u8);

impl Channel {
    pub fn new(v: u8) -> Option<Channel> {
        (v < 16).then_some(Channel(v))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Channel {
    type Error = OutOfRange;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Channel::new(v).ok_or(OutOfRange)
    }
}

impl From<Channel> for u8 {
    fn from(v: Channel) -> u8 {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("value out of range")]
pub struct OutOfRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MidiKind {
    NoteOff,
    NoteOn,
    ControlChange,
}

impl MidiKind {
    fn status(self) -> u8 {
        match self {
            MidiKind::NoteOff => 0x80,
            MidiKind::NoteOn => 0x90,
            MidiKind::ControlChange => 0xB0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MidiEvent {
    pub kind: MidiKind,
    pub channel: Channel,
    pub data1: U7,
    pub data2: U7,
    pub timestamp_ms: u64,
}

impl MidiEvent {
    pub fn note_on(channel: Channel, note: U7, velocity: U7, timestamp_ms: u64) -> Self {
        MidiEvent {
            kind: MidiKind::NoteOn,
            channel,
            data1: note,
            data2: velocity,
            timestamp_ms,
        }
    }

    pub fn note_off(channel: Channel, note: U7, timestamp_ms: u64) -> Self {
        MidiEvent {
            kind: MidiKind::NoteOff,
            channel,
            data1: note,
            data2: U7(0),
            timestamp_ms,
        }
    }

    pub fn control_change(channel: Channel, controller: U7, value: U7, timestamp_ms: u64) -> Self {
        MidiEvent {
            kind: MidiKind::ControlChange,
            channel,
            data1: controller,
            data2: value,
            timestamp_ms,
        }
    }
}

impl fmt::Display for MidiEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MidiKind::NoteOff => "note_off",
            MidiKind::NoteOn => "note_on",
            MidiKind::ControlChange => "cc",
        };
        write!(
            f,
            "{}ms {name} ch{} {} {}",
            self.timestamp_ms, self.channel.0, self.data1.0, self.data2.0
        )
    }
}

pub fn encode_midi(e: &MidiEvent) -> [u8; 3] {
    [e.kind.status() | e.channel.0, e.data1.0, e.data2.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VlqError {
    #[error("value {0:#x} exceeds 0x0FFFFFFF")]
    OutOfRange(u64),
    #[error("quantity ends mid-sequence")]
    Truncated,
    #[error("quantity longer than 4 bytes")]
    TooLong,
}

/// An encoded variable-length quantity, 1 to 4 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vlq {
    bytes: [u8; 4],
    len: usize,
}

impl Vlq {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..self.len]
    }
}

pub fn encode_vlq(n: u32) -> Result<Vlq, VlqError> {
    if n > VLQ_MAX {
        return Err(VlqError::OutOfRange(n as u64));
    }
    let mut groups = [0u8; 4];
    let mut len = 0;
    let mut rest = n;
    loop {
        groups[len] = (rest & 0x7F) as u8;
        len += 1;
        rest >>= 7;
        if rest == 0 {
            break;
        }
    }
    let mut bytes = [0u8; 4];
    for i in 0..len {
        let g = groups[len - 1 - i];
        bytes[i] = if i + 1 < len { g | 0x80 } else { g };
    }
    Ok(Vlq { bytes, len })
}

/// Decodes a quantity at the start of `bytes`, returning it and its length.
pub fn decode_vlq(bytes: &[u8]) -> Result<(u32, usize), VlqError> {
    let mut n = 0u32;
    for (i, &b) in bytes.iter().enumerate() {
        if i == 4 {
            return Err(VlqError::TooLong);
        }
        n = n << 7 | (b & 0x7F) as u32;
        if b & 0x80 == 0 {
            return Ok((n, i + 1));
        }
    }
    if bytes.len() >= 4 {
        Err(VlqError::TooLong)
    } else {
        Err(VlqError::Truncated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SmfError {
    #[error("event {index} is earlier than the one before it")]
    UnsortedEvents { index: usize },
    #[error("event {index}: delta time too large for a 28-bit quantity")]
    DeltaOutOfRange { index: usize },
}

/// Milliseconds to ticks at 120 BPM (960 ticks per second), half-up.
pub fn ms_to_ticks(ms: u64) -> u64 {
    (ms as u128 * 96 + 50).div_euclid(100) as u64
}

/// Renders a format-0, single-track SMF at 480 ticks per quarter note and
/// the default 120 BPM tempo. Timestamps must be non-decreasing.
pub fn write_smf(events: &[MidiEvent]) -> Result<Vec<u8>, SmfError> {
    let mut track = Vec::with_capacity(events.len() * 4 + 4);
    let mut last_ms = 0u64;
    let mut last_tick = 0u64;
    for (index, e) in events.iter().enumerate() {
        if e.timestamp_ms < last_ms {
            return Err(SmfError::UnsortedEvents { index });
        }
        last_ms = e.timestamp_ms;
        let tick = ms_to_ticks(e.timestamp_ms);
        let delta = u32::try_from(tick - last_tick)
            .ok()
            .and_then(|d| encode_vlq(d).ok())
            .ok_or(SmfError::DeltaOutOfRange { index })?;
        last_tick = tick;
        track.extend_from_slice(delta.as_bytes());
        track.extend_from_slice(&encode_midi(e));
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

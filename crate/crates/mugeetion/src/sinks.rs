//! Where MIDI events and track commands go.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use mugeetion_core::{encode_midi, write_smf, MidiEvent, OscArg, OscMessage, TrackCommand};
use serde::{Deserialize, Serialize};

use crate::udp::OscSender;

pub const TRACK_ADDRESS: &str = "/mugeetion/track";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MidiSinkSpec {
    /// Raw 3-byte channel messages, back to back.
    File(PathBuf),
    /// One datagram of raw MIDI bytes per event.
    Udp(String),
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSinkSpec {
    /// JSON lines, one command each.
    Log(PathBuf),
    /// `/mugeetion/track` with the track title as a string argument.
    Osc(String),
    #[default]
    None,
}

/// Shared in-process capture of `(tick, event)` pairs.
pub type MidiCapture = Arc<Mutex<Vec<(u64, MidiEvent)>>>;
pub type TrackCapture = Arc<Mutex<Vec<(u64, TrackCommand)>>>;

pub enum MidiSink {
    File(BufWriter<File>),
    Udp(std::net::UdpSocket),
    Memory(MidiCapture),
    None,
}

impl MidiSink {
    pub fn open(spec: &MidiSinkSpec) -> io::Result<Self> {
        Ok(match spec {
            MidiSinkSpec::File(p) => MidiSink::File(BufWriter::new(File::create(p)?)),
            MidiSinkSpec::Udp(addr) => {
                let s = std::net::UdpSocket::bind("0.0.0.0:0")?;
                s.connect(addr)?;
                MidiSink::Udp(s)
            }
            MidiSinkSpec::None => MidiSink::None,
        })
    }

    pub fn write(&mut self, tick: u64, events: &[MidiEvent]) -> io::Result<()> {
        match self {
            MidiSink::File(w) => {
                for e in events {
                    w.write_all(&encode_midi(e))?;
                }
            }
            MidiSink::Udp(s) => {
                for e in events {
                    s.send(&encode_midi(e))?;
                }
            }
            MidiSink::Memory(buf) => buf.lock().unwrap().extend(events.iter().map(|e| (tick, *e))),
            MidiSink::None => {}
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            MidiSink::File(w) => w.flush(),
            _ => Ok(()),
        }
    }
}

pub enum TrackSink {
    Log(BufWriter<File>),
    Osc(OscSender),
    Memory(TrackCapture),
    None,
}

impl TrackSink {
    pub fn open(spec: &TrackSinkSpec) -> io::Result<Self> {
        Ok(match spec {
            TrackSinkSpec::Log(p) => TrackSink::Log(BufWriter::new(File::create(p)?)),
            TrackSinkSpec::Osc(addr) => TrackSink::Osc(OscSender::connect(addr.as_str())?),
            TrackSinkSpec::None => TrackSink::None,
        })
    }

    pub fn write(&mut self, tick: u64, cmd: &TrackCommand) -> io::Result<()> {
        match self {
            TrackSink::Log(w) => {
                serde_json::to_writer(&mut *w, cmd)?;
                w.write_all(b"\n")?;
            }
            TrackSink::Osc(s) => s.send(&track_message(cmd))?,
            TrackSink::Memory(buf) => buf.lock().unwrap().push((tick, cmd.clone())),
            TrackSink::None => {}
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            TrackSink::Log(w) => w.flush(),
            _ => Ok(()),
        }
    }
}

pub fn track_message(cmd: &TrackCommand) -> OscMessage {
    OscMessage::new(TRACK_ADDRESS, vec![OscArg::Str(cmd.track.title.clone())])
}

/// Renders `events` as a Standard MIDI File at `path`.
pub fn save_smf(path: &Path, events: &[MidiEvent]) -> io::Result<()> {
    let bytes = write_smf(events).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    std::fs::write(path, bytes)
}

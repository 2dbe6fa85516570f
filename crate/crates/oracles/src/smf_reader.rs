//! Minimal Standard MIDI File reader: header, tracks, running status,
//! meta and sysex skipping. Returns absolute-tick events.

use crate::midi_ref::read_vlq;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub format: u16,
    pub ntracks: u16,
    pub division: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Channel { tick: u64, bytes: Vec<u8> },
    Meta { tick: u64, kind: u8, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Smf {
    pub header: Header,
    pub tracks: Vec<Vec<Item>>,
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read(bytes: &[u8]) -> Result<Smf, String> {
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" || be32(&bytes[4..8]) != 6 {
        return Err("bad header chunk".into());
    }
    let header = Header {
        format: be16(&bytes[8..10]),
        ntracks: be16(&bytes[10..12]),
        division: be16(&bytes[12..14]),
    };
    let mut pos = 14;
    let mut tracks = Vec::new();
    while pos < bytes.len() {
        if pos + 8 > bytes.len() {
            return Err("truncated chunk header".into());
        }
        let len = be32(&bytes[pos + 4..pos + 8]) as usize;
        let body = bytes.get(pos + 8..pos + 8 + len).ok_or("truncated chunk body")?;
        if &bytes[pos..pos + 4] == b"MTrk" {
            tracks.push(read_track(body)?);
        }
        pos += 8 + len;
    }
    if tracks.len() != header.ntracks as usize {
        return Err(format!(
            "header says {} tracks, found {}",
            header.ntracks,
            tracks.len()
        ));
    }
    Ok(Smf { header, tracks })
}

fn read_track(t: &[u8]) -> Result<Vec<Item>, String> {
    let mut items = Vec::new();
    let mut pos = 0;
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut ended = false;
    while pos < t.len() {
        if ended {
            return Err("data after end-of-track".into());
        }
        let (delta, n) = read_vlq(&t[pos..]).ok_or("bad delta")?;
        pos += n;
        tick += u64::from(delta);
        let first = *t.get(pos).ok_or("missing status")?;
        match first {
            0xFF => {
                let kind = *t.get(pos + 1).ok_or("truncated meta")?;
                let (len, n) = read_vlq(&t[pos + 2..]).ok_or("bad meta length")?;
                let start = pos + 2 + n;
                let data = t
                    .get(start..start + len as usize)
                    .ok_or("truncated meta data")?
                    .to_vec();
                pos = start + len as usize;
                if kind == 0x2F {
                    ended = true;
                }
                items.push(Item::Meta { tick, kind, data });
            }
            0xF0 | 0xF7 => {
                let (len, n) = read_vlq(&t[pos + 1..]).ok_or("bad sysex length")?;
                pos += 1 + n + len as usize;
            }
            _ => {
                let status = if first & 0x80 != 0 {
                    pos += 1;
                    running = Some(first);
                    first
                } else {
                    running.ok_or("data byte without running status")?
                };
                let data_len = match status & 0xF0 {
                    0xC0 | 0xD0 => 1,
                    _ => 2,
                };
                let data = t.get(pos..pos + data_len).ok_or("truncated event")?;
                if data.iter().any(|b| b & 0x80 != 0) {
                    return Err("data byte has high bit set".into());
                }
                let mut bytes = vec![status];
                bytes.extend_from_slice(data);
                pos += data_len;
                items.push(Item::Channel { tick, bytes });
            }
        }
    }
    if !ended {
        return Err("missing end-of-track".into());
    }
    Ok(items)
}

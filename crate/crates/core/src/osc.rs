//! OSC 1.0 binary codec.
//!
//! Only the four core argument types are supported: `i` (int32), `f`
//! (float32), `s` (string) and `b` (blob). Everything is big-endian and every
//! field is padded with NUL bytes to a 4-byte boundary.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Maximum bundle nesting, counting the outermost bundle as depth 1.
pub const MAX_BUNDLE_DEPTH: usize = 8;

const BUNDLE_MAGIC: &[u8; 8] = b"#bundle\0";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OscError {
    #[error("buffer ends inside a field")]
    Truncated,
    #[error("non-NUL padding byte or length not 4-byte aligned")]
    BadPadding,
    #[error("unknown type tag {:?}", char::from(*.0))]
    UnknownTypeTag(u8),
    #[error("packet does not start with '/'")]
    NotAMessage,
    #[error("type tag string must start with ','")]
    MissingTypeTags,
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("bytes left over after the last argument")]
    TrailingBytes,
    #[error("address must start with '/' and contain only printable characters")]
    InvalidAddress,
    #[error("string argument contains NUL")]
    InteriorNul,
    #[error("float argument is NaN or infinite")]
    NonFiniteFloat,
    #[error("bundle does not start with \"#bundle\\0\"")]
    BadMagic,
    #[error("bundles nested deeper than {MAX_BUNDLE_DEPTH}")]
    DepthExceeded,
    #[error("bundle element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<OscError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
    Blob(Vec<u8>),
}

impl OscArg {
    fn tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
            OscArg::Blob(_) => b'b',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        OscMessage {
            address: address.into(),
            args,
        }
    }
}

/// 64-bit NTP-style time tag. The value `1` means "immediately".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OscTimeTag(pub u64);

impl OscTimeTag {
    pub const IMMEDIATE: OscTimeTag = OscTimeTag(1);

    pub fn is_immediate(self) -> bool {
        self == Self::IMMEDIATE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscBundle {
    pub timetag: OscTimeTag,
    pub elements: Vec<OscPacket>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscPacket {
    Message(OscMessage),
    Bundle(OscBundle),
}

impl OscPacket {
    /// Messages in depth-first element order.
    pub fn flatten(self) -> Vec<OscMessage> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }

    fn flatten_into(self, out: &mut Vec<OscMessage>) {
        match self {
            OscPacket::Message(m) => out.push(m),
            OscPacket::Bundle(b) => {
                for e in b.elements {
                    e.flatten_into(out);
                }
            }
        }
    }
}

impl fmt::Display for OscMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.address)?;
        for a in &self.args {
            match a {
                OscArg::Int(v) => write!(f, " {v}")?,
                OscArg::Float(v) => write!(f, " {v}")?,
                OscArg::Str(s) => write!(f, " {s:?}")?,
                OscArg::Blob(b) => write!(f, " <{} bytes>", b.len())?,
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], OscError> {
        if self.remaining() < n {
            return Err(OscError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, OscError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, OscError> {
        let hi = self.u32()? as u64;
        let lo = self.u32()? as u64;
        Ok(hi << 32 | lo)
    }

    fn skip_padding(&mut self, used: usize) -> Result<(), OscError> {
        let pad = padding(used);
        for &b in self.take(pad)? {
            if b != 0 {
                return Err(OscError::BadPadding);
            }
        }
        Ok(())
    }

    /// NUL-terminated, NUL-padded string.
    fn string(&mut self) -> Result<&'a str, OscError> {
        let rest = &self.buf[self.pos..];
        let len = rest.iter().position(|&b| b == 0).ok_or(OscError::Truncated)?;
        let s = core::str::from_utf8(&rest[..len]).map_err(|_| OscError::InvalidUtf8)?;
        self.pos += len + 1;
        self.skip_padding(len + 1)?;
        Ok(s)
    }

    fn blob(&mut self) -> Result<&'a [u8], OscError> {
        let len = self.u32()?;
        let len = usize::try_from(len).map_err(|_| OscError::Truncated)?;
        let data = self.take(len)?;
        self.skip_padding(len)?;
        Ok(data)
    }
}

fn padding(len: usize) -> usize {
    (4 - len % 4) % 4
}

fn check_frame(bytes: &[u8]) -> Result<(), OscError> {
    if bytes.len() < 8 {
        return Err(OscError::Truncated);
    }
    if !bytes.len().is_multiple_of(4) {
        return Err(OscError::BadPadding);
    }
    Ok(())
}

pub fn parse_message(bytes: &[u8]) -> Result<OscMessage, OscError> {
    check_frame(bytes)?;
    if bytes[0] != b'/' {
        return Err(OscError::NotAMessage);
    }
    let mut r = Reader::new(bytes);
    let address = r.string()?.into();
    let tags = r.string()?;
    let tags = tags
        .strip_prefix(',')
        .ok_or(OscError::MissingTypeTags)?
        .as_bytes();
    // validate every tag before decoding any argument
    if let Some(&bad) = tags.iter().find(|t| !matches!(t, b'i' | b'f' | b's' | b'b')) {
        return Err(OscError::UnknownTypeTag(bad));
    }
    let mut args = Vec::with_capacity(tags.len());
    for &tag in tags {
        let arg = match tag {
            b'i' => OscArg::Int(r.u32()? as i32),
            b'f' => OscArg::Float(f32::from_bits(r.u32()?)),
            b's' => OscArg::Str(r.string()?.into()),
            _ => OscArg::Blob(r.blob()?.to_vec()),
        };
        args.push(arg);
    }
    if r.remaining() != 0 {
        return Err(OscError::TrailingBytes);
    }
    Ok(OscMessage { address, args })
}

pub fn parse_bundle(bytes: &[u8]) -> Result<OscBundle, OscError> {
    parse_bundle_at(bytes, 1)
}

fn parse_bundle_at(bytes: &[u8], depth: usize) -> Result<OscBundle, OscError> {
    if depth > MAX_BUNDLE_DEPTH {
        return Err(OscError::DepthExceeded);
    }
    if bytes.len() < 16 || &bytes[..8] != BUNDLE_MAGIC {
        return Err(if bytes.starts_with(BUNDLE_MAGIC) {
            OscError::Truncated
        } else {
            OscError::BadMagic
        });
    }
    if !bytes.len().is_multiple_of(4) {
        return Err(OscError::BadPadding);
    }
    let mut r = Reader::new(&bytes[8..]);
    let timetag = OscTimeTag(r.u64()?);
    let mut elements = Vec::new();
    while r.remaining() > 0 {
        let size = r.u32()? as usize;
        if !size.is_multiple_of(4) {
            return Err(OscError::BadPadding);
        }
        let body = r.take(size)?;
        let index = elements.len();
        let element = parse_packet_at(body, depth + 1).map_err(|e| match e {
            // depth errors are reported once, at the outermost bundle
            OscError::DepthExceeded => OscError::DepthExceeded,
            other => OscError::Element {
                index,
                source: Box::new(other),
            },
        })?;
        elements.push(element);
    }
    Ok(OscBundle { timetag, elements })
}

/// Parses a datagram that may be either a message or a bundle.
pub fn parse_packet(bytes: &[u8]) -> Result<OscPacket, OscError> {
    parse_packet_at(bytes, 1)
}

fn parse_packet_at(bytes: &[u8], depth: usize) -> Result<OscPacket, OscError> {
    match bytes.first() {
        Some(b'#') => parse_bundle_at(bytes, depth).map(OscPacket::Bundle),
        _ => parse_message(bytes).map(OscPacket::Message),
    }
}

fn push_padded_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(s.as_bytes());
    out.push(0);
    out.resize(out.len() + padding(s.len() + 1), 0);
}

fn valid_address(addr: &str) -> bool {
    addr.starts_with('/') && addr.bytes().all(|b| (0x20..0x7f).contains(&b))
}

pub fn serialize_message(msg: &OscMessage) -> Result<Vec<u8>, OscError> {
    let mut out = Vec::new();
    write_message(msg, &mut out)?;
    Ok(out)
}

fn write_message(msg: &OscMessage, out: &mut Vec<u8>) -> Result<(), OscError> {
    if !valid_address(&msg.address) {
        return Err(OscError::InvalidAddress);
    }
    push_padded_str(out, &msg.address);
    let mut tags = String::with_capacity(msg.args.len() + 1);
    tags.push(',');
    tags.extend(msg.args.iter().map(|a| char::from(a.tag())));
    push_padded_str(out, &tags);
    for arg in &msg.args {
        match arg {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => {
                if !v.is_finite() {
                    return Err(OscError::NonFiniteFloat);
                }
                out.extend_from_slice(&v.to_bits().to_be_bytes());
            }
            OscArg::Str(s) => {
                if s.contains('\0') {
                    return Err(OscError::InteriorNul);
                }
                push_padded_str(out, s);
            }
            OscArg::Blob(b) => {
                let len = u32::try_from(b.len()).map_err(|_| OscError::Truncated)?;
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(b);
                out.resize(out.len() + padding(b.len()), 0);
            }
        }
    }
    Ok(())
}

pub fn serialize_bundle(bundle: &OscBundle) -> Result<Vec<u8>, OscError> {
    let mut out = Vec::new();
    write_bundle(bundle, &mut out, 1)?;
    Ok(out)
}

fn write_bundle(bundle: &OscBundle, out: &mut Vec<u8>, depth: usize) -> Result<(), OscError> {
    if depth > MAX_BUNDLE_DEPTH {
        return Err(OscError::DepthExceeded);
    }
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&bundle.timetag.0.to_be_bytes());
    for element in &bundle.elements {
        let size_at = out.len();
        out.extend_from_slice(&[0; 4]);
        match element {
            OscPacket::Message(m) => write_message(m, out)?,
            OscPacket::Bundle(b) => write_bundle(b, out, depth + 1)?,
        }
        let size = (out.len() - size_at - 4) as u32;
        out[size_at..size_at + 4].copy_from_slice(&size.to_be_bytes());
    }
    Ok(())
}

pub fn serialize_packet(packet: &OscPacket) -> Result<Vec<u8>, OscError> {
    match packet {
        OscPacket::Message(m) => serialize_message(m),
        OscPacket::Bundle(b) => serialize_bundle(b),
    }
}

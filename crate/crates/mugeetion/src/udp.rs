//! FaceOSC over UDP.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use mugeetion_core::osc::{parse_packet, serialize_message};
use mugeetion_core::{FacialFrame, FrameAssembler, OscArg, OscError, OscMessage};

pub const DEFAULT_FACEOSC_PORT: u16 = 8338;

/// Largest datagram accepted; FaceOSC bursts are far smaller.
const MAX_DATAGRAM: usize = 65_536;

const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// Messages in one datagram, bundles flattened depth-first.
pub fn decode_datagram(bytes: &[u8]) -> Result<Vec<OscMessage>, OscError> {
    Ok(parse_packet(bytes)?.flatten())
}

#[derive(Debug, Default)]
pub struct ListenerStats {
    pub datagrams: AtomicU64,
    pub parse_errors: AtomicU64,
    pub rejected_messages: AtomicU64,
    pub frames: AtomicU64,
}

/// Receives FaceOSC datagrams and assembles them into frames.
///
/// Frame timestamps are milliseconds since the listener was bound.
pub struct FaceOscListener {
    socket: UdpSocket,
    assembler: FrameAssembler,
    started: Instant,
    stats: Arc<ListenerStats>,
    buf: Vec<u8>,
}

impl FaceOscListener {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(POLL_INTERVAL))?;
        Ok(FaceOscListener {
            socket,
            assembler: FrameAssembler::new(),
            started: Instant::now(),
            stats: Arc::default(),
            buf: vec![0; MAX_DATAGRAM],
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn stats(&self) -> Arc<ListenerStats> {
        self.stats.clone()
    }

    fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    /// Waits up to the poll interval for one datagram and appends any frames
    /// it completes, including bursts that timed out meanwhile.
    pub fn poll(&mut self, out: &mut Vec<FacialFrame>) -> io::Result<()> {
        let before = out.len();
        match self.socket.recv(&mut self.buf) {
            Ok(n) => {
                self.stats.datagrams.fetch_add(1, Ordering::Relaxed);
                let now = self.now_ms();
                match decode_datagram(&self.buf[..n]) {
                    Ok(msgs) => {
                        for m in &msgs {
                            if let Err(e) = self.assembler.push(m, now, out) {
                                self.stats.rejected_messages.fetch_add(1, Ordering::Relaxed);
                                log::debug!("skipped message: {e}");
                            }
                        }
                    }
                    Err(e) => {
                        self.stats.parse_errors.fetch_add(1, Ordering::Relaxed);
                        log::debug!("dropped datagram: {e}");
                    }
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
        let now = self.now_ms();
        self.assembler.poll(now, out);
        self.stats
            .frames
            .fetch_add((out.len() - before) as u64, Ordering::Relaxed);
        Ok(())
    }

    /// Feeds frames to `sink` until `stop` is set or `sink` returns false.
    pub fn run(&mut self, stop: &AtomicBool, mut sink: impl FnMut(FacialFrame) -> bool) -> io::Result<()> {
        let mut frames = Vec::new();
        while !stop.load(Ordering::Relaxed) {
            self.poll(&mut frames)?;
            for f in frames.drain(..) {
                if !sink(f) {
                    return Ok(());
                }
            }
        }
        self.assembler.finish(&mut frames);
        for f in frames {
            sink(f);
        }
        Ok(())
    }
}

/// Messages for one FaceOSC burst, `/found 1` first.
pub fn faceosc_burst(frame: &FacialFrame) -> Vec<OscMessage> {
    let mut out = vec![OscMessage::new(
        "/found",
        vec![OscArg::Int(frame.face_found as i32)],
    )];
    if frame.face_found {
        for f in mugeetion_core::Feature::ALL {
            out.push(OscMessage::new(
                f.address(),
                vec![OscArg::Float(frame.get(f) as f32)],
            ));
        }
    }
    out
}

/// Sends OSC messages to a fixed destination.
pub struct OscSender {
    socket: UdpSocket,
}

impl OscSender {
    pub fn connect(dest: impl ToSocketAddrs) -> io::Result<Self> {
        let dest = dest
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let bind: SocketAddr = if dest.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind)?;
        socket.connect(dest)?;
        Ok(OscSender { socket })
    }

    pub fn send(&self, msg: &OscMessage) -> io::Result<()> {
        let bytes = serialize_message(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.socket.send(&bytes)?;
        Ok(())
    }

    pub fn send_raw(&self, bytes: &[u8]) -> io::Result<()> {
        self.socket.send(bytes).map(|_| ())
    }
}

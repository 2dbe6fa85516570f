//! Straight-line OSC 1.0 encoder.
//!
//! Strings: bytes, then one NUL, then NULs until the length is a multiple
//! of four. Blobs: big-endian int32 size, bytes, NULs to a multiple of four.

pub enum Arg<'a> {
    I(i32),
    F(f32),
    S(&'a str),
    B(&'a [u8]),
}

fn osc_string(s: &str) -> Vec<u8> {
    let mut v = s.as_bytes().to_vec();
    v.push(0);
    while !v.len().is_multiple_of(4) {
        v.push(0);
    }
    v
}

pub fn encode_message(address: &str, args: &[Arg<'_>]) -> Vec<u8> {
    let mut tags = String::from(",");
    let mut payload = Vec::new();
    for a in args {
        match a {
            Arg::I(v) => {
                tags.push('i');
                payload.extend(v.to_be_bytes());
            }
            Arg::F(v) => {
                tags.push('f');
                payload.extend(v.to_be_bytes());
            }
            Arg::S(s) => {
                tags.push('s');
                payload.extend(osc_string(s));
            }
            Arg::B(b) => {
                tags.push('b');
                payload.extend((b.len() as i32).to_be_bytes());
                payload.extend(b.iter());
                while payload.len() % 4 != 0 {
                    payload.push(0);
                }
            }
        }
    }
    [osc_string(address), osc_string(&tags), payload].concat()
}

/// `elements` are already-encoded messages or bundles.
pub fn encode_bundle(timetag: u64, elements: &[Vec<u8>]) -> Vec<u8> {
    let mut v = b"#bundle\0".to_vec();
    v.extend(timetag.to_be_bytes());
    for e in elements {
        v.extend((e.len() as i32).to_be_bytes());
        v.extend(e);
    }
    v
}

//! MIDI 1.0 channel messages and variable-length quantities, from the
//! byte layouts in the MIDI 1.0 specification.

pub fn note_on(channel: u8, note: u8, velocity: u8) -> [u8; 3] {
    [0x90 + channel, note, velocity]
}

pub fn note_off(channel: u8, note: u8, velocity: u8) -> [u8; 3] {
    [0x80 + channel, note, velocity]
}

pub fn control_change(channel: u8, controller: u8, value: u8) -> [u8; 3] {
    [0xB0 + channel, controller, value]
}

/// Big-endian base-128 digits, high bit set on every byte but the last.
pub fn vlq(n: u32) -> Vec<u8> {
    assert!(n <= 0x0FFF_FFFF);
    let mut digits = vec![(n & 0x7F) as u8];
    let mut rest = n >> 7;
    while rest > 0 {
        digits.push((rest & 0x7F) as u8 | 0x80);
        rest >>= 7;
    }
    digits.reverse();
    digits
}

pub fn read_vlq(bytes: &[u8]) -> Option<(u32, usize)> {
    let mut n: u32 = 0;
    for (i, b) in bytes.iter().take(4).enumerate() {
        n = (n << 7) + u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Some((n, i + 1));
        }
    }
    None
}

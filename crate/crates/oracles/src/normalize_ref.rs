//! Exact normalization over decimal inputs using integer arithmetic.

/// Parses a plain decimal into (mantissa, scale) with `value = m / 10^scale`.
fn parse_decimal(s: &str) -> (i128, u32) {
    let (neg, s) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = format!("{int}{frac}");
    let m: i128 = digits.parse().expect("decimal digits");
    (if neg { -m } else { m }, frac.len() as u32)
}

fn to_scale(s: &str, scale: u32) -> i128 {
    let (m, sc) = parse_decimal(s);
    m * 10i128.pow(scale - sc)
}

/// `round_half_up(127 * (x - lo) / (hi - lo))` clamped to 0..=127, computed
/// exactly on the decimal strings.
pub fn normalize(x: &str, lo: &str, hi: &str) -> u8 {
    let scale = [x, lo, hi].iter().map(|s| parse_decimal(s).1).max().unwrap_or(0);
    let (x, lo, hi) = (to_scale(x, scale), to_scale(lo, scale), to_scale(hi, scale));
    assert!(lo < hi);
    let num = 127 * (x - lo);
    let den = hi - lo;
    // floor((num/den) + 1/2) = floor((2 num + den) / (2 den))
    let r = (2 * num + den).div_euclid(2 * den);
    r.clamp(0, 127) as u8
}

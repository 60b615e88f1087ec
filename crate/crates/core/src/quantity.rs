//! Exact quantity arithmetic.
//!
//! Market quantities are quantized to `10^-c` MWh, where `c` is the number of
//! decimal digits allowed by the market. They are stored as scaled integers
//! (`MWh * 10^c`) so that quantization checks and the binary-expansion
//! constraint can be evaluated exactly, without floating-point drift.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A quantity in scaled integer units of `10^-c` MWh.
///
/// The scale `c` is carried by the owning instance configuration, not by the
/// value itself; mixing quantities from instances with different scales is a
/// caller bug.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ScaledQty(pub i64);

impl ScaledQty {
    pub const ZERO: ScaledQty = ScaledQty(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Value in MWh for the given number of decimal digits.
    pub fn mwh(self, digits: u8) -> f64 {
        self.0 as f64 / pow10(digits) as f64
    }

    /// Exact conversion from whole MWh.
    pub fn from_mwh_int(mwh: i64, digits: u8) -> ScaledQty {
        ScaledQty(mwh * pow10(digits))
    }

    pub fn checked_add(self, other: ScaledQty) -> Option<ScaledQty> {
        self.0.checked_add(other.0).map(ScaledQty)
    }
}

/// `10^digits` as an integer. Panics above 18 digits, which no market needs.
pub fn pow10(digits: u8) -> i64 {
    10i64
        .checked_pow(digits as u32)
        .expect("quantity scale too large")
}

/// Error produced when a decimal literal does not fit the quantity grid.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QtyParseError {
    #[error("malformed decimal literal {0:?}")]
    Malformed(String),
    #[error("{0:?} is not a multiple of 10^-{1}")]
    OffGrid(String, u8),
    #[error("{0:?} overflows the scaled integer range")]
    Overflow(String),
}

/// Parses a decimal literal into a scaled quantity, exactly.
///
/// The check is done in integer arithmetic on the decimal digits: a literal
/// with more than `digits` fractional digits is accepted only when the excess
/// digits are zero. Scientific notation is not a quantity format and is
/// rejected.
pub fn parse_scaled(text: &str, digits: u8) -> Result<ScaledQty, QtyParseError> {
    let s = text.trim();
    let malformed = || QtyParseError::Malformed(text.to_string());
    let (negative, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if s.is_empty() {
        return Err(malformed());
    }
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(malformed());
    }
    let d = digits as usize;
    if frac_part.len() > d && frac_part[d..].bytes().any(|b| b != b'0') {
        return Err(QtyParseError::OffGrid(text.to_string(), digits));
    }
    let kept = &frac_part[..frac_part.len().min(d)];
    let mut value: i64 = 0;
    for b in int_part.bytes().chain(kept.bytes()) {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as i64))
            .ok_or_else(|| QtyParseError::Overflow(text.to_string()))?;
    }
    for _ in kept.len()..d {
        value = value
            .checked_mul(10)
            .ok_or_else(|| QtyParseError::Overflow(text.to_string()))?;
    }
    Ok(ScaledQty(if negative { -value } else { value }))
}

/// Formats a scaled quantity with exactly `digits` fractional digits.
pub fn format_scaled(q: ScaledQty, digits: u8) -> String {
    let scale = pow10(digits);
    let sign = if q.0 < 0 { "-" } else { "" };
    let abs = q.0.unsigned_abs();
    let whole = abs / scale as u64;
    let frac = abs % scale as u64;
    if digits == 0 {
        format!("{sign}{whole}")
    } else {
        format!("{sign}{whole}.{frac:0>width$}", width = digits as usize)
    }
}

/// Rounds an arbitrary MWh value to the nearest grid point.
pub fn round_to_grid(mwh: f64, digits: u8) -> ScaledQty {
    ScaledQty((mwh * pow10(digits) as f64).round() as i64)
}

impl fmt::Display for ScaledQty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_on_grid_values() {
        assert_eq!(parse_scaled("1.005", 3).unwrap(), ScaledQty(1005));
        assert_eq!(parse_scaled("10", 3).unwrap(), ScaledQty(10_000));
        assert_eq!(parse_scaled("0.000", 3).unwrap(), ScaledQty(0));
        assert_eq!(parse_scaled("1.0050", 3).unwrap(), ScaledQty(1005));
        assert_eq!(parse_scaled("1.0005", 4).unwrap(), ScaledQty(10_005));
    }

    #[test]
    fn rejects_off_grid_values() {
        assert!(matches!(
            parse_scaled("1.0005", 3),
            Err(QtyParseError::OffGrid(_, 3))
        ));
        assert!(matches!(
            parse_scaled("0.0001", 3),
            Err(QtyParseError::OffGrid(_, 3))
        ));
    }

    #[test]
    fn rejects_malformed_literals() {
        for bad in ["", ".", "1e3", "1.2.3", "abc", "--1"] {
            assert!(parse_scaled(bad, 3).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn format_round_trips() {
        for raw in [0i64, 1, 999, 1000, 1005, 75_000, -2500] {
            let q = ScaledQty(raw);
            let text = format_scaled(q, 3);
            assert_eq!(parse_scaled(&text, 3).unwrap(), q, "{text}");
        }
    }
}

//! Change values between positions.
//!
//! A change value (CV) is the percentage of comparison slots that differ
//! between two positions. Every metric here counts mismatching slots over a
//! fixed resolution, so a CV is always `count * 100 / resolution` and the
//! engine can carry exact integer counts instead of floats.

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::fen::FenRecord;

/// Length of the padded comparison buffer.
pub const BUFFER_LEN: usize = 128;
/// Byte used to pad FEN text up to [`BUFFER_LEN`].
pub const FILL_BYTE: u8 = 0x20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("FEN text is {0} bytes, longer than the {BUFFER_LEN}-byte comparison buffer")]
pub struct FenTooLong(pub usize);

/// FEN text bytes followed by space fill, exactly 128 bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct CanonicalBuffer([u8; BUFFER_LEN]);

impl CanonicalBuffer {
    pub fn bytes(&self) -> &[u8; BUFFER_LEN] {
        &self.0
    }

    pub fn mismatches(&self, other: &CanonicalBuffer) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a != b)
            .count() as u32
    }
}

impl fmt::Debug for CanonicalBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CanonicalBuffer({:?})",
            String::from_utf8_lossy(&self.0).trim_end()
        )
    }
}

pub fn canonical_buffer(fen: &FenRecord) -> Result<CanonicalBuffer, FenTooLong> {
    let text = fen.as_bytes();
    if text.len() > BUFFER_LEN {
        return Err(FenTooLong(text.len()));
    }
    let mut buf = [FILL_BYTE; BUFFER_LEN];
    buf[..text.len()].copy_from_slice(text);
    Ok(CanonicalBuffer(buf))
}

/// A change value in percent, stored as its exact mismatch count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChangeValue {
    count: u32,
    resolution: u32,
}

impl ChangeValue {
    pub fn from_count(count: u32, resolution: u32) -> Self {
        debug_assert!(count <= resolution);
        ChangeValue { count, resolution }
    }

    pub fn zero(resolution: u32) -> Self {
        ChangeValue {
            count: 0,
            resolution,
        }
    }

    pub fn count(self) -> u32 {
        self.count
    }

    pub fn resolution(self) -> u32 {
        self.resolution
    }

    /// Percentage at full precision.
    pub fn value(self) -> f64 {
        self.count as f64 * 100.0 / self.resolution as f64
    }

    /// Three-decimal display form, ties rounded to even (`26.5625` → `26.562`).
    pub fn display(self) -> String {
        format_half_even(self.value(), 3)
    }
}

impl fmt::Display for ChangeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

impl Serialize for ChangeValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

/// Round `x` to `decimals` places with ties going to the even digit.
///
/// Ties are detected on the exact binary value, which is what matters for
/// CVs: every `k * 100 / 128` scaled by 1000 is exactly representable.
pub fn round_half_even(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let up = frac > 0.5 || (frac == 0.5 && floor % 2.0 != 0.0);
    let rounded = if up { floor + 1.0 } else { floor };
    rounded / scale
}

pub fn format_half_even(x: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, round_half_even(x, decimals as i32))
}

/// A way of comparing two positions slot by slot.
pub trait ChangeMetric: Send + Sync {
    fn name(&self) -> &'static str;
    /// Number of comparison slots; CVs are quantized to `100 / resolution`.
    fn resolution(&self) -> u32;
    /// Number of slots that differ between `a` and `b`.
    fn mismatch_count(&self, a: &FenRecord, b: &FenRecord) -> u32;

    fn change_value(&self, a: &FenRecord, b: &FenRecord) -> ChangeValue {
        ChangeValue::from_count(self.mismatch_count(a, b), self.resolution())
    }
}

/// Positional byte comparison of the raw FEN text in a 128-byte
/// space-padded buffer. This is the default metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct PaddedBytes;

impl ChangeMetric for PaddedBytes {
    fn name(&self) -> &'static str {
        "padded-bytes"
    }

    fn resolution(&self) -> u32 {
        BUFFER_LEN as u32
    }

    fn mismatch_count(&self, a: &FenRecord, b: &FenRecord) -> u32 {
        // Same result as comparing canonical buffers, without building them.
        let (a, b) = (a.as_bytes(), b.as_bytes());
        let a = &a[..a.len().min(BUFFER_LEN)];
        let b = &b[..b.len().min(BUFFER_LEN)];
        let common = a.len().min(b.len());
        let mut n = a[..common]
            .iter()
            .zip(&b[..common])
            .filter(|(x, y)| x != y)
            .count();
        let tail = if a.len() > common {
            &a[common..]
        } else {
            &b[common..]
        };
        n += tail.iter().filter(|&&c| c != FILL_BYTE).count();
        n as u32
    }
}

/// Square-by-square comparison of the expanded 64-square board.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoardSquares;

impl ChangeMetric for BoardSquares {
    fn name(&self) -> &'static str {
        "board-squares"
    }

    fn resolution(&self) -> u32 {
        64
    }

    fn mismatch_count(&self, a: &FenRecord, b: &FenRecord) -> u32 {
        a.board()
            .iter()
            .zip(b.board().iter())
            .filter(|(x, y)| x != y)
            .count() as u32
    }
}

pub fn metric_by_name(name: &str) -> Option<&'static dyn ChangeMetric> {
    match name {
        "padded-bytes" => Some(&PaddedBytes),
        "board-squares" => Some(&BoardSquares),
        _ => None,
    }
}

/// CV under the default padded-byte metric.
pub fn change_value(a: &FenRecord, b: &FenRecord) -> ChangeValue {
    PaddedBytes.change_value(a, b)
}

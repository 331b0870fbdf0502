use serde::{Deserialize, Serialize};

use super::{Direction, Trace};
use crate::error::{Error, Result};

/// Byte-size boundaries defining labels `1..=n`. Label 1 covers
/// `[0, b[1]]`, label `k` covers `(b[k-1], b[k]]`, and anything above the
/// last boundary clamps to label `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    boundaries: Vec<u64>,
}

impl Default for QuantizationScheme {
    fn default() -> Self {
        Self {
            boundaries: vec![0, 50, 100, 500, 1000, 5000, 10_000, 50_000, 100_000],
        }
    }
}

impl QuantizationScheme {
    pub fn new(boundaries: Vec<u64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::invalid("quantization needs at least two boundaries"));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("quantization boundaries must be strictly increasing"));
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    /// Number of labels; labels run `1..=levels()`.
    pub fn levels(&self) -> u8 {
        self.boundaries.len() as u8
    }

    pub fn label(&self, bytes: u64) -> u8 {
        // Boundaries are sorted, so the count of interior boundaries strictly
        // below `bytes` is a partition point.
        let above = self.boundaries[1..].partition_point(|&b| b < bytes);
        1 + above as u8
    }
}

/// Summed byte arrivals per TTI for one direction. Length is
/// `ceil(duration / tti)`.
pub fn tti_byte_totals(trace: &Trace, tti_ms: f64, direction: Direction) -> Result<Vec<u64>> {
    if !(tti_ms > 0.0) || !tti_ms.is_finite() {
        return Err(Error::invalid(format!("tti must be > 0 ms, got {tti_ms}")));
    }
    let tti_s = tti_ms / 1000.0;
    let mut len = (trace.duration / tti_s).ceil() as usize;
    if len == 0 && !trace.records.is_empty() {
        len = 1;
    }
    let mut totals = vec![0u64; len];
    for r in trace.records.iter().filter(|r| r.direction == direction) {
        let idx = ((r.timestamp / tti_s).floor() as usize).min(len - 1);
        totals[idx] += r.size as u64;
    }
    Ok(totals)
}

/// One label per TTI of summed arrivals in `direction` (DL for the DRX use).
pub fn quantize_tti_arrivals(
    trace: &Trace,
    tti_ms: f64,
    scheme: &QuantizationScheme,
    direction: Direction,
) -> Result<Vec<u8>> {
    Ok(tti_byte_totals(trace, tti_ms, direction)?
        .into_iter()
        .map(|b| scheme.label(b))
        .collect())
}

//! Positional encoding, the geometric resolution schedule and the spatial
//! hash used by the multi-resolution feature grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primes of the XOR spatial hash. The first axis uses 1 so neighbouring
/// cells along x stay adjacent in the table.
pub const HASH_PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

/// Per-level grid resolutions `floor(r_min * b^l)` for `l = 0..levels`, with
/// `b = exp((ln r_max - ln r_min) / (levels - 1))`.
///
/// The first level equals `r_min` and the last `r_max` exactly; products
/// that land within rounding noise of an integer are snapped to it before
/// flooring.
pub fn resolution_schedule(r_min: usize, r_max: usize, levels: usize) -> Result<Vec<usize>> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "resolution schedule needs at least 2 levels, got {levels}"
        )));
    }
    if r_min < 1 || r_max < r_min {
        return Err(Error::InvalidArgument(format!(
            "resolution bounds must satisfy 1 <= r_min <= r_max, got {r_min}..{r_max}"
        )));
    }
    let growth = ((r_max as f64).ln() - (r_min as f64).ln()) / (levels - 1) as f64;
    let b = growth.exp();
    Ok((0..levels)
        .map(|l| {
            let r = r_min as f64 * b.powi(l as i32);
            let nearest = r.round();
            if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
                nearest as usize
            } else {
                r.floor() as usize
            }
        })
        .collect())
}

/// `(x ⊕ y·π₂ ⊕ z·π₃) mod table_size` with wrapping 64-bit products. Only
/// the low bits survive the modulus for power-of-two tables, so the result
/// equals exact integer arithmetic.
pub fn spatial_hash(cell: [u32; 3], table_size: usize, primes: [u64; 3]) -> usize {
    let h = (cell[0] as u64).wrapping_mul(primes[0])
        ^ (cell[1] as u64).wrapping_mul(primes[1])
        ^ (cell[2] as u64).wrapping_mul(primes[2]);
    (h % table_size as u64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub octaves: usize,
    pub include_identity: bool,
}

impl PositionalEncoding {
    pub fn new(octaves: usize) -> Self {
        Self {
            octaves,
            include_identity: true,
        }
    }

    pub fn dim(&self) -> usize {
        let id = if self.include_identity { 3 } else { 0 };
        id + 3 * 2 * self.octaves
    }

    /// `[x, sin(2^0 π x), cos(2^0 π x), ..., sin(2^(F-1) π x), cos(2^(F-1) π x)]`
    pub fn encode(&self, x: [f64; 3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        if self.include_identity {
            out.extend_from_slice(&x);
        }
        for j in 0..self.octaves {
            let freq = (1u64 << j) as f64 * std::f64::consts::PI;
            out.extend(x.iter().map(|v| (freq * v).sin()));
            out.extend(x.iter().map(|v| (freq * v).cos()));
        }
        out
    }
}

//! Fixed-precision HyperLogLog sketch for approximate distinct counting.
//!
//! With precision `p` the sketch keeps `m = 2^p` one-byte registers and the
//! standard relative error is about `1.04 / sqrt(m)` (roughly 0.8% at the
//! default precision 14). Merging is register-wise max, so merged sketches
//! estimate the cardinality of the union exactly as if one sketch had seen
//! all items.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_PRECISION: u8 = 4;
pub const MAX_PRECISION: u8 = 16;
pub const DEFAULT_PRECISION: u8 = 14;

#[derive(Debug, Error, PartialEq)]
pub enum HllError {
    #[error("precision {0} outside supported range {MIN_PRECISION}..={MAX_PRECISION}")]
    BadPrecision(u8),
    #[error("cannot merge sketches of precision {0} and {1}")]
    PrecisionMismatch(u8, u8),
    #[error("corrupt sketch encoding: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperLogLog {
    precision: u8,
    registers: Vec<u8>,
}

/// Stable 64-bit hash: FNV-1a followed by a murmur-style finalizer. The
/// finalizer spreads entropy into the high bits the register index is taken
/// from; plain FNV leaves them too correlated for short, similar keys. Must
/// hash identically across runs and builds so persisted registers stay
/// mergeable.
fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

impl HyperLogLog {
    pub fn new(precision: u8) -> Result<Self, HllError> {
        if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
            return Err(HllError::BadPrecision(precision));
        }
        Ok(HyperLogLog { precision, registers: vec![0; 1 << precision] })
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn insert(&mut self, item: &[u8]) {
        let hash = stable_hash(item);
        let idx = (hash >> (64 - self.precision)) as usize;
        let rest = hash << self.precision;
        // Rank of the first set bit in the remaining 64 - p bits.
        let rho = if rest == 0 {
            64 - self.precision + 1
        } else {
            rest.leading_zeros() as u8 + 1
        };
        if rho > self.registers[idx] {
            self.registers[idx] = rho;
        }
    }

    pub fn estimate(&self) -> u64 {
        let m = self.registers.len() as f64;
        let alpha = match self.registers.len() {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            n => 0.7213 / (1.0 + 1.079 / n as f64),
        };
        let sum: f64 = self.registers.iter().map(|&r| 2f64.powi(-(r as i32))).sum();
        let raw = alpha * m * m / sum;

        let zeros = self.registers.iter().filter(|&&r| r == 0).count();
        if raw <= 2.5 * m && zeros > 0 {
            // Small-range correction: linear counting.
            (m * (m / zeros as f64).ln()).round() as u64
        } else {
            raw.round() as u64
        }
    }

    pub fn merge(&mut self, other: &HyperLogLog) -> Result<(), HllError> {
        if self.precision != other.precision {
            return Err(HllError::PrecisionMismatch(self.precision, other.precision));
        }
        for (a, &b) in self.registers.iter_mut().zip(&other.registers) {
            if b > *a {
                *a = b;
            }
        }
        Ok(())
    }

    /// Registers as hex, for checkpoint sidecars.
    pub fn to_hex(&self) -> String {
        hex::encode(&self.registers)
    }

    pub fn from_hex(precision: u8, s: &str) -> Result<Self, HllError> {
        let registers =
            hex::decode(s).map_err(|e| HllError::Corrupt(format!("bad hex: {e}")))?;
        if !(MIN_PRECISION..=MAX_PRECISION).contains(&precision) {
            return Err(HllError::BadPrecision(precision));
        }
        if registers.len() != 1 << precision {
            return Err(HllError::Corrupt(format!(
                "expected {} registers for precision {precision}, got {}",
                1usize << precision,
                registers.len()
            )));
        }
        Ok(HyperLogLog { precision, registers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sketch_estimates_zero() {
        assert_eq!(HyperLogLog::new(12).unwrap().estimate(), 0);
    }

    #[test]
    fn small_counts_are_near_exact() {
        let mut h = HyperLogLog::new(DEFAULT_PRECISION).unwrap();
        for i in 0..100u32 {
            h.insert(format!("user-{i}").as_bytes());
            h.insert(format!("user-{i}").as_bytes()); // duplicates ignored
        }
        let est = h.estimate();
        assert!((90..=110).contains(&est), "estimate {est} too far from 100");
    }

    #[test]
    fn estimate_error_within_bound_at_10k() {
        let mut h = HyperLogLog::new(DEFAULT_PRECISION).unwrap();
        let n = 10_000u32;
        for i in 0..n {
            h.insert(format!("item-{i}").as_bytes());
        }
        let est = h.estimate() as f64;
        let rel = (est - n as f64).abs() / n as f64;
        let bound = 3.0 * 1.04 / ((1u64 << DEFAULT_PRECISION) as f64).sqrt();
        assert!(rel < bound, "relative error {rel:.4} exceeds {bound:.4}");
    }

    #[test]
    fn merge_equals_union() {
        let mut a = HyperLogLog::new(10).unwrap();
        let mut b = HyperLogLog::new(10).unwrap();
        let mut all = HyperLogLog::new(10).unwrap();
        for i in 0..500u32 {
            let item = format!("x{i}");
            if i % 2 == 0 {
                a.insert(item.as_bytes());
            } else {
                b.insert(item.as_bytes());
            }
            all.insert(item.as_bytes());
        }
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        assert_eq!(ab, all);
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ba, ab); // commutative on registers
    }

    #[test]
    fn precision_mismatch_rejected() {
        let mut a = HyperLogLog::new(10).unwrap();
        let b = HyperLogLog::new(11).unwrap();
        assert_eq!(a.merge(&b), Err(HllError::PrecisionMismatch(10, 11)));
    }

    #[test]
    fn hex_roundtrip() {
        let mut h = HyperLogLog::new(8).unwrap();
        for i in 0..50u32 {
            h.insert(&i.to_le_bytes());
        }
        let decoded = HyperLogLog::from_hex(8, &h.to_hex()).unwrap();
        assert_eq!(decoded, h);
        assert!(HyperLogLog::from_hex(9, &h.to_hex()).is_err());
        assert!(HyperLogLog::from_hex(8, "zz").is_err());
    }
}

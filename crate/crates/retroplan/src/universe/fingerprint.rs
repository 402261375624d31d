//! Substring fingerprints and Tanimoto similarity.
//!
//! The fingerprint of a molecule hashes every substring of width up to
//! `2 * radius + 1` into a fixed-length bit vector with a salted 64-bit
//! hash. Similar strings share substrings and therefore bits, which is what
//! the clustering step relies on.

use crate::error::{Error, Result};
use crate::universe::molecule::Molecule;

/// Salt folded into the FNV state so indices are not plain FNV values.
const SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn salted_hash(bytes: &[u8]) -> u64 {
    // FNV-1a with a salted offset basis; fully specified, stable everywhere.
    let mut h = 0xCBF2_9CE4_8422_2325u64 ^ SALT;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Fixed-length bit vector fingerprint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    len: usize,
    bits: Vec<u64>,
}

impl Fingerprint {
    /// Hashes all substrings of `m` with width `1..=2*radius+1`.
    ///
    /// `len` must be a power of two and at least 64; `radius` at least 1;
    /// the molecule must be non-empty. A non-empty molecule always sets at
    /// least one bit (its width-1 substrings hash somewhere).
    pub fn compute(m: &Molecule, len: usize, radius: usize) -> Result<Fingerprint> {
        if len < 64 || !len.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "fingerprint length must be a power of two >= 64, got {len}"
            )));
        }
        if radius < 1 {
            return Err(Error::InvalidParameter("fingerprint radius must be >= 1".into()));
        }
        if m.is_empty() {
            return Err(Error::InvalidInput("cannot fingerprint a zero-length molecule".into()));
        }
        let bytes = m.canon().as_bytes();
        let max_width = 2 * radius + 1;
        let mask = (len - 1) as u64;
        let mut bits = vec![0u64; len / 64];
        for start in 0..bytes.len() {
            let widest = max_width.min(bytes.len() - start);
            for width in 1..=widest {
                let idx = (salted_hash(&bytes[start..start + width]) & mask) as usize;
                bits[idx / 64] |= 1u64 << (idx % 64);
            }
        }
        Ok(Fingerprint { len, bits })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of set bits.
    pub fn popcount(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }

    /// Number of bits set in both fingerprints.
    pub fn intersection_count(&self, other: &Fingerprint) -> u32 {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a & b).count_ones()).sum()
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index / 64] >> (index % 64) & 1 == 1
    }

    /// Indices of set bits in ascending order.
    pub fn set_indices(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.popcount() as usize);
        for (w, &word) in self.bits.iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let bit = word.trailing_zeros();
                out.push((w as u32) * 64 + bit);
                word &= word - 1;
            }
        }
        out
    }
}

/// Tanimoto similarity `T = a·b / (|a|^2 + |b|^2 - a·b)` for bit vectors,
/// where the dot product is the intersection count and the squared norms are
/// the popcounts.
///
/// Errors when the fingerprints have different lengths or when both are
/// all-zero (the similarity is undefined in that case).
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "tanimoto requires equal fingerprint lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let inter = a.intersection_count(b) as f64;
    let denom = a.popcount() as f64 + b.popcount() as f64 - inter;
    if denom == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(inter / denom)
}

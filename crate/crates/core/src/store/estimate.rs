//! Closed-form storage cost of the two stores (payload only).
//!
//! | target    | original                 | compressed               |
//! |-----------|--------------------------|--------------------------|
//! | documents | `4(m·L + 1)·p·D`         | `(m·L'·b/8 + 4p)·D`      |
//! | tokens    | `4·L·(V + 2H)·p`         | `L'·(V + 2H)·b/8`        |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceMode {
    Original,
    Compressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StorageTarget {
    Documents,
    Tokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    /// Average terms per document.
    pub m: u64,
    /// Encoder layers kept in the original layout.
    pub layers: u64,
    /// Layers kept in the compressed layout.
    pub layers_kept: u64,
    pub bits: u64,
    pub docs: u64,
    pub unigrams: u64,
    pub pairs: u64,
    pub dim: u64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self { m: 857, layers: 13, layers_kept: 5, bits: 256, docs: 50_000_000, unigrams: 0, pairs: 0, dim: 768 }
    }
}

/// Payload bytes. Bit totals that are not byte-aligned are rounded up.
pub fn storage_estimate(params: &EstimateParams, mode: SpaceMode, target: StorageTarget) -> Result<u128> {
    let p = params;
    let needed: &[(&str, u64)] = match (target, mode) {
        (StorageTarget::Documents, SpaceMode::Original) => &[("m", p.m), ("L", p.layers), ("D", p.docs), ("p", p.dim)],
        (StorageTarget::Documents, SpaceMode::Compressed) => {
            &[("m", p.m), ("L'", p.layers_kept), ("b", p.bits), ("D", p.docs), ("p", p.dim)]
        }
        (StorageTarget::Tokens, SpaceMode::Original) => &[("L", p.layers), ("p", p.dim)],
        (StorageTarget::Tokens, SpaceMode::Compressed) => &[("L'", p.layers_kept), ("b", p.bits)],
    };
    if let Some((name, _)) = needed.iter().find(|(_, v)| *v == 0) {
        return Err(Error::Config(format!("storage estimate needs a positive {name}")));
    }
    let w = |x: u64| x as u128;
    let tokens = w(p.unigrams) + 2 * w(p.pairs);
    Ok(match (target, mode) {
        (StorageTarget::Documents, SpaceMode::Original) => 4 * (w(p.m) * w(p.layers) + 1) * w(p.dim) * w(p.docs),
        (StorageTarget::Documents, SpaceMode::Compressed) => {
            let bits_per_doc = w(p.m) * w(p.layers_kept) * w(p.bits) + 32 * w(p.dim);
            (bits_per_doc * w(p.docs)).div_ceil(8)
        }
        (StorageTarget::Tokens, SpaceMode::Original) => 4 * w(p.layers) * tokens * w(p.dim),
        (StorageTarget::Tokens, SpaceMode::Compressed) => (w(p.layers_kept) * tokens * w(p.bits)).div_ceil(8),
    })
}

/// Decimal (SI) rendering, e.g. `7.0 TB`.
pub fn format_bytes(bytes: u128) -> String {
    const UNITS: [&str; 6] = ["B", "KB", "MB", "GB", "TB", "PB"];
    let mut v = bytes as f64;
    let mut u = 0;
    while v >= 1000.0 && u < UNITS.len() - 1 {
        v /= 1000.0;
        u += 1;
    }
    if u == 0 {
        format!("{bytes} B")
    } else {
        format!("{v:.1} {}", UNITS[u])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_document_compressed_payload() {
        let p = EstimateParams { docs: 1, ..EstimateParams::default() };
        assert_eq!(storage_estimate(&p, SpaceMode::Compressed, StorageTarget::Documents).unwrap(), 140_192);
    }

    #[test]
    fn zero_parameter_rejected() {
        let p = EstimateParams { m: 0, ..EstimateParams::default() };
        assert!(storage_estimate(&p, SpaceMode::Original, StorageTarget::Documents).is_err());
    }

    #[test]
    fn formatting() {
        assert_eq!(format_bytes(512), "512 B");
        assert_eq!(format_bytes(7_009_600_000_000), "7.0 TB");
        assert_eq!(format_bytes(151_760_000_000), "151.8 GB");
    }
}

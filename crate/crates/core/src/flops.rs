//! Closed-form operation counts for re-ranking one document.
//!
//! Conventions: a fused multiply-add is 2 operations, `exp`/`log`/division are
//! 1 each, and a 64-bit XOR+popcount is 1 word operation. Counts are for one
//! query against one document; multiply by the candidate count for a query.
//!
//! | category            | full mode                 | lsh mode                 |
//! |---------------------|---------------------------|--------------------------|
//! | similarity          | `2·n·m·L'·p`              | `2·n·g·m·L'`             |
//! | popcount            | 0                         | `n·g·m·L'·⌈b/64⌉`        |
//! | kernel              | `n·L'·K·(4m + 1)`         | same                     |
//! | linear combination  | `2·n·K·L' + 2·n·g·L'·p + 2p` | `2·n·K·L' + 2p`       |
//!
//! In full mode the composition of `g` group vectors per term is counted as
//! linear combination; in lsh mode the per-group cosine estimates are combined
//! inside the similarity category.

use serde::{Deserialize, Serialize};

use crate::scorer::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopModel {
    /// Query terms.
    pub n: u64,
    /// Document terms.
    pub m: u64,
    /// Embedding dimension.
    pub p: u64,
    /// Kernels.
    pub k: u64,
    /// Stored layers.
    pub layers: u64,
    pub bits: u64,
    /// Token groups composed per query term.
    pub groups_per_term: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounts {
    pub similarity: u128,
    pub popcount: u128,
    pub kernel: u128,
    pub linear_combination: u128,
    pub total: u128,
}

impl FlopModel {
    pub fn count(&self) -> FlopCounts {
        let [n, m, p, k, l, b, g] = [self.n, self.m, self.p, self.k, self.layers, self.bits, self.groups_per_term].map(u128::from);
        let (similarity, popcount, composition) = match self.mode {
            Mode::Full => (2 * n * m * l * p, 0, 2 * n * g * l * p),
            Mode::Lsh => (2 * n * g * m * l, n * g * m * l * b.div_ceil(64), 0),
        };
        let kernel = n * l * k * (4 * m + 1);
        let linear_combination = 2 * n * k * l + composition + 2 * p;
        FlopCounts {
            similarity,
            popcount,
            kernel,
            linear_combination,
            total: similarity + popcount + kernel + linear_combination,
        }
    }
}

/// Average number of token groups containing a query term of an `n`-term
/// query under `window`, rounded up.
pub fn groups_per_term(n: u64, window: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let pairs: u64 = (1..=window.min(n.saturating_sub(1))).map(|s| n - s).sum();
    (n + 2 * pairs).div_ceil(n)
}

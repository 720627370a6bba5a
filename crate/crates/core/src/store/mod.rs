//! Document and token-group embedding stores, the encoder export container
//! they are built from, and the storage-cost calculator.

mod doc;
mod estimate;
mod export;
pub mod kv;
mod record;
mod token;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::{validate_bits, HyperplaneSet};

pub use doc::{build_doc_store, ingest_document, DocStore, DocStoreWriter, Ingestor};
pub use estimate::{format_bytes, storage_estimate, EstimateParams, SpaceMode, StorageTarget};
pub use export::{EncoderExport, ExportDocument, ExportGroup, ExportPiece, ExportReader, ExportWriter};
pub use record::{DenseGrid, DocumentRecord, FootprintGrid};
pub use token::{build_token_store, ingest_group, TokenStore, TokenStoreWriter};

/// Which term representations a store keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    /// LSH footprints only (the compressed layout).
    Lsh,
    /// Full-precision f32 vectors only.
    Full,
    /// Both forms.
    Both,
}

impl Precision {
    pub fn footprints(self) -> bool {
        matches!(self, Precision::Lsh | Precision::Both)
    }

    pub fn dense(self) -> bool {
        matches!(self, Precision::Full | Precision::Both)
    }

    pub(crate) fn flags(self) -> u32 {
        let mut f = 0;
        if self.footprints() {
            f |= kv::FLAG_FOOTPRINTS;
        }
        if self.dense() {
            f |= kv::FLAG_DENSE;
        }
        f
    }

    pub(crate) fn from_flags(flags: u32) -> Result<Self> {
        match flags {
            kv::FLAG_FOOTPRINTS => Ok(Precision::Lsh),
            kv::FLAG_DENSE => Ok(Precision::Full),
            f if f == kv::FLAG_FOOTPRINTS | kv::FLAG_DENSE => Ok(Precision::Both),
            other => Err(Error::format("store header", format!("unknown flags {other:#x}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lsh" => Ok(Precision::Lsh),
            "full" => Ok(Precision::Full),
            "both" => Ok(Precision::Both),
            other => Err(Error::Config(format!("unknown precision `{other}`"))),
        }
    }
}

/// Parameters that decide whether two stores (or a store and the runtime)
/// are compatible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub dim: usize,
    /// Encoder layer ids kept in the store, in storage order.
    pub layer_ids: Vec<u32>,
    /// Footprint width; 0 when the store keeps no footprints.
    pub bits: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl StoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.layer_ids.is_empty() || self.layer_ids.len() > kv::MAX_LAYERS {
            return Err(Error::Config(format!("between 1 and {} layers required", kv::MAX_LAYERS)));
        }
        if self.precision.footprints() {
            validate_bits(self.bits)?;
        } else if self.bits != 0 {
            return Err(Error::Config("bits must be 0 for a store without footprints".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layer_ids.len()
    }

    /// Regenerates the hyperplanes named by `(seed, bits, dim)`.
    pub fn hyperplanes(&self) -> Result<Option<HyperplaneSet>> {
        if self.precision.footprints() {
            Ok(Some(HyperplaneSet::sample(self.seed, self.bits, self.dim)?))
        } else {
            Ok(None)
        }
    }

    fn raw_header(&self, magic: [u8; 8]) -> kv::RawHeader {
        kv::RawHeader {
            magic,
            flags: self.precision.flags(),
            dim: self.dim as u32,
            layer_ids: self.layer_ids.clone(),
            bits: self.bits as u32,
            seed: self.seed,
            record_count: 0,
            index_offset: 0,
            index_slots: 1,
        }
    }

    fn from_raw(raw: &kv::RawHeader) -> Result<Self> {
        let config = Self {
            dim: raw.dim as usize,
            layer_ids: raw.layer_ids.clone(),
            bits: raw.bits as usize,
            seed: raw.seed,
            precision: Precision::from_flags(raw.flags)?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Errors unless `(dim, layers, bits, seed)` agree. Precision may differ
    /// as long as the shared forms line up.
    pub fn check_compatible(&self, other: &StoreConfig) -> Result<()> {
        let mut diffs = Vec::new();
        if self.dim != other.dim {
            diffs.push(format!("dim {} vs {}", self.dim, other.dim));
        }
        if self.layer_ids != other.layer_ids {
            diffs.push(format!("layers {:?} vs {:?}", self.layer_ids, other.layer_ids));
        }
        if self.precision.footprints() && other.precision.footprints() {
            if self.bits != other.bits {
                diffs.push(format!("bits {} vs {}", self.bits, other.bits));
            }
            if self.seed != other.seed {
                diffs.push(format!("lsh seed {} vs {}", self.seed, other.seed));
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::StoreMismatch(diffs.join(", ")))
        }
    }

    /// Errors unless this store keeps what `expected` asks for.
    pub fn check_expected(&self, expected: &StoreConfig) -> Result<()> {
        self.check_compatible(expected)?;
        if expected.precision.footprints() && !self.precision.footprints() {
            return Err(Error::StoreMismatch("store has no LSH footprints".into()));
        }
        if expected.precision.dense() && !self.precision.dense() {
            return Err(Error::StoreMismatch("store has no full-precision vectors".into()));
        }
        if expected.precision.footprints() && (self.bits != expected.bits || self.seed != expected.seed) {
            return Err(Error::StoreMismatch(format!(
                "footprints built with (b={}, seed={}), runtime expects (b={}, seed={})",
                self.bits, self.seed, expected.bits, expected.seed
            )));
        }
        Ok(())
    }
}

impl fmt::Display for StoreConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p={} layers={:?} b={} seed={} precision={:?}",
            self.dim, self.layer_ids, self.bits, self.seed, self.precision
        )
    }
}

/// Which encoder layers are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    /// Embedding layer, encoder layers 1-3 and the last layer; every layer
    /// when the export has five or fewer.
    Default,
    All,
    Ids(Vec<u32>),
}

impl LayerSelection {
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "default" => Ok(Self::Default),
            "all" => Ok(Self::All),
            list => list
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|e| Error::Config(format!("bad layer id `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()
                .map(Self::Ids),
        }
    }

    /// Positions within `available` of the selected layer ids.
    pub fn resolve(&self, available: &[u32]) -> Result<Vec<usize>> {
        match self {
            Self::All => Ok((0..available.len()).collect()),
            Self::Default if available.len() <= 5 => Ok((0..available.len()).collect()),
            Self::Default => Ok(vec![0, 1, 2, 3, available.len() - 1]),
            Self::Ids(ids) => {
                if ids.is_empty() {
                    return Err(Error::Config("empty layer selection".into()));
                }
                ids.iter()
                    .map(|id| {
                        available
                            .iter()
                            .position(|a| a == id)
                            .ok_or_else(|| Error::Config(format!("layer {id} not in export {available:?}")))
                    })
                    .collect()
            }
        }
    }
}

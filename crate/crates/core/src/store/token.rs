use std::path::Path;

use crate::compose::{GroupLookup, LayeredTermEmbedding, TokenGroupEmbedding};
use crate::error::{Error, Result};
use crate::vector::DenseVector;

use super::doc::Ingestor;
use super::kv::{KvFile, KvWriter};
use super::record::{decode_group, encode_group};
use super::{ExportGroup, ExportReader, StoreConfig};

pub(crate) const TOKEN_MAGIC: [u8; 8] = *b"BECRTOK\0";

/// Converts an exported group into its stored form.
pub fn ingest_group(group: &ExportGroup, ingestor: &Ingestor) -> Result<TokenGroupEmbedding> {
    let config = &ingestor.config;
    let dim = config.dim;
    let block = ingestor.export_layers() * dim;
    let mut members = Vec::with_capacity(group.members.len());
    for m in &group.members {
        if m.len() != block {
            return Err(Error::DimensionMismatch { expected: block, actual: m.len() });
        }
        let mut emb = LayeredTermEmbedding::default();
        for &src in ingestor.layer_idx() {
            let v = &m[src * dim..(src + 1) * dim];
            if let Some(planes) = ingestor.planes() {
                emb.footprints.push(planes.footprint(v)?);
            }
            if config.precision.dense() {
                emb.dense.push(DenseVector::new(v.to_vec())?);
            }
        }
        members.push(emb);
    }
    Ok(TokenGroupEmbedding { id: group.id.clone(), members })
}

pub struct TokenStoreWriter {
    kv: KvWriter,
    config: StoreConfig,
}

impl TokenStoreWriter {
    pub fn create(path: impl AsRef<Path>, config: StoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { kv: KvWriter::create(path.as_ref(), config.raw_header(TOKEN_MAGIC))?, config })
    }

    pub fn append(&mut self, group: &TokenGroupEmbedding) -> Result<()> {
        let body = encode_group(group, &self.config)?;
        self.kv.append(&group.id, &body)
    }

    pub fn finish(self) -> Result<()> {
        self.kv.finish()
    }
}

pub fn build_token_store(reader: &ExportReader, ingestor: &Ingestor, out: impl AsRef<Path>) -> Result<()> {
    let mut w = TokenStoreWriter::create(out, ingestor.config.clone())?;
    for g in reader.groups() {
        w.append(&ingest_group(&g?, ingestor)?)?;
    }
    w.finish()
}

/// Read-only token-group store; absent groups are `None`, not errors.
#[derive(Debug)]
pub struct TokenStore {
    kv: KvFile,
    config: StoreConfig,
}

impl TokenStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let kv = KvFile::open(path.as_ref(), &TOKEN_MAGIC)?;
        let config = StoreConfig::from_raw(kv.header())?;
        Ok(Self { kv, config })
    }

    pub fn open_expecting(path: impl AsRef<Path>, expected: &StoreConfig) -> Result<Self> {
        let store = Self::open(path)?;
        store.config.check_expected(expected)?;
        Ok(store)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.kv.header().record_count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fetch_group(&self, id: &str) -> Result<Option<TokenGroupEmbedding>> {
        self.kv
            .get(id)?
            .map(|body| decode_group(id.to_string(), &body, &self.config))
            .transpose()
    }
}

impl GroupLookup for TokenStore {
    fn lookup(&self, id: &str) -> Result<Option<TokenGroupEmbedding>> {
        self.fetch_group(id)
    }
}

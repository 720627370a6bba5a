use std::path::Path;

use crate::error::{Error, Result};
use crate::lexical::{CorpusStats, Field, FieldStats};
use crate::lsh::HyperplaneSet;
use crate::vector::DenseVector;

use super::kv::{KvFile, KvWriter};
use super::record::{DenseGrid, DocumentRecord, FootprintGrid};
use super::{ExportDocument, ExportReader, LayerSelection, Precision, StoreConfig};

pub(crate) const DOC_MAGIC: [u8; 8] = *b"BECRDOC\0";

/// Turns export records into store records under one configuration.
#[derive(Debug, Clone)]
pub struct Ingestor {
    pub config: StoreConfig,
    export_layers: usize,
    layer_idx: Vec<usize>,
    planes: Option<HyperplaneSet>,
}

impl Ingestor {
    pub fn new(
        dim: usize,
        export_layer_ids: &[u32],
        selection: &LayerSelection,
        bits: usize,
        seed: u64,
        precision: Precision,
    ) -> Result<Self> {
        let layer_idx = selection.resolve(export_layer_ids)?;
        let config = StoreConfig {
            dim,
            layer_ids: layer_idx.iter().map(|&i| export_layer_ids[i]).collect(),
            bits: if precision.footprints() { bits } else { 0 },
            seed,
            precision,
        };
        config.validate()?;
        Ok(Self {
            planes: config.hyperplanes()?,
            config,
            export_layers: export_layer_ids.len(),
            layer_idx,
        })
    }

    pub fn for_reader(reader: &ExportReader, selection: &LayerSelection, bits: usize, seed: u64, precision: Precision) -> Result<Self> {
        Self::new(reader.dim(), reader.layer_ids(), selection, bits, seed, precision)
    }

    pub(crate) fn export_layers(&self) -> usize {
        self.export_layers
    }

    pub(crate) fn layer_idx(&self) -> &[usize] {
        &self.layer_idx
    }

    pub(crate) fn planes(&self) -> Option<&HyperplaneSet> {
        self.planes.as_ref()
    }
}

/// Builds the store record for one exported document: pieces are
/// concatenated in order, term vectors are hashed (and/or kept) for the
/// selected layers, and the [CLS] vector is the mean of the piece vectors.
pub fn ingest_document(doc: &ExportDocument, ingestor: &Ingestor) -> Result<DocumentRecord> {
    let config = &ingestor.config;
    let (dim, export_layers) = (config.dim, ingestor.export_layers);
    if doc.pieces.is_empty() {
        return Err(Error::Config(format!("document `{}` has no pieces", doc.doc_id)));
    }
    let mut m = 0;
    for p in &doc.pieces {
        if p.term_count == 0 {
            return Err(Error::Config(format!("document `{}` has an empty piece", doc.doc_id)));
        }
        if p.vectors.len() != p.term_count * export_layers * dim {
            return Err(Error::DimensionMismatch { expected: p.term_count * export_layers * dim, actual: p.vectors.len() });
        }
        if p.cls.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: p.cls.len() });
        }
        m += p.term_count;
    }
    let layers = ingestor.layer_idx.len();

    let footprints = match ingestor.planes() {
        Some(planes) => {
            let words = config.bits / 64;
            let mut data = vec![0u64; layers * m * words];
            for (l, &src) in ingestor.layer_idx.iter().enumerate() {
                let mut row = 0;
                for p in &doc.pieces {
                    for t in 0..p.term_count {
                        let fp = planes.footprint(p.vector(t, src, export_layers, dim))?;
                        let start = (l * m + row) * words;
                        data[start..start + words].copy_from_slice(fp.words());
                        row += 1;
                    }
                }
            }
            Some(FootprintGrid::new(m, layers, config.bits, data)?)
        }
        None => None,
    };
    let dense = if config.precision.dense() {
        let mut data = Vec::with_capacity(layers * m * dim);
        for &src in &ingestor.layer_idx {
            for p in &doc.pieces {
                for t in 0..p.term_count {
                    data.extend_from_slice(p.vector(t, src, export_layers, dim));
                }
            }
        }
        Some(DenseGrid::new(m, layers, dim, data)?)
    } else {
        None
    };

    let mut cls = vec![0f64; dim];
    for p in &doc.pieces {
        for (a, &x) in cls.iter_mut().zip(&p.cls) {
            *a += x as f64;
        }
    }
    let n = doc.pieces.len() as f64;
    let cls = DenseVector::new(cls.into_iter().map(|x| (x / n) as f32).collect())?;

    Ok(DocumentRecord {
        doc_id: doc.doc_id.clone(),
        term_count: m,
        footprints,
        dense,
        cls,
        fields: vec![
            FieldStats::from_text(Field::Title, &doc.title),
            FieldStats::from_text(Field::Body, &doc.body),
        ],
        other_features: doc.other_features.clone(),
    })
}

pub struct DocStoreWriter {
    kv: KvWriter,
    config: StoreConfig,
    stats: CorpusStats,
}

impl DocStoreWriter {
    pub fn create(path: impl AsRef<Path>, config: StoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kv: KvWriter::create(path.as_ref(), config.raw_header(DOC_MAGIC))?,
            config,
            stats: CorpusStats::default(),
        })
    }

    pub fn append(&mut self, record: &DocumentRecord) -> Result<()> {
        let body = record.encode(&self.config)?;
        self.kv.append(&record.doc_id, &body)?;
        self.stats.add_document(&record.fields);
        Ok(())
    }

    /// Finalises the index and returns the corpus statistics of the records.
    pub fn finish(self) -> Result<CorpusStats> {
        self.kv.finish()?;
        Ok(self.stats)
    }
}

/// Builds a document store from every document of an export.
pub fn build_doc_store(reader: &ExportReader, ingestor: &Ingestor, out: impl AsRef<Path>) -> Result<CorpusStats> {
    let mut w = DocStoreWriter::create(out, ingestor.config.clone())?;
    for doc in reader.documents() {
        w.append(&ingest_document(&doc?, ingestor)?)?;
    }
    w.finish()
}

/// Read-only document store handle; safe to share across threads.
#[derive(Debug)]
pub struct DocStore {
    kv: KvFile,
    config: StoreConfig,
}

impl DocStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let kv = KvFile::open(path.as_ref(), &DOC_MAGIC)?;
        let config = StoreConfig::from_raw(kv.header())?;
        Ok(Self { kv, config })
    }

    /// Opens and checks the store against the runtime configuration.
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

    pub fn doc_ids(&self) -> Result<Vec<String>> {
        self.kv.keys()
    }

    pub fn fetch(&self, doc_id: &str) -> Result<DocumentRecord> {
        match self.kv.get(doc_id)? {
            Some(body) => DocumentRecord::decode(doc_id.to_string(), &body, &self.config),
            None => Err(Error::NotFound(format!("document `{doc_id}`"))),
        }
    }
}

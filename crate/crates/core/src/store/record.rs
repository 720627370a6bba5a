//! In-memory record types and their binary bodies.

use std::collections::BTreeMap;

use crate::codec::{ByteReader, ByteWriter};
use crate::compose::{LayeredTermEmbedding, TokenGroupEmbedding};
use crate::error::{Error, Result};
use crate::lexical::{Field, FieldStats};
use crate::lsh::{LshFootprint, WORD_BITS};
use crate::vector::DenseVector;

use super::StoreConfig;

/// Footprints for `rows` terms at `layers` layers, layer-major: the row of
/// term `j` at layer `l` starts at word `(l * rows + j) * words`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintGrid {
    rows: usize,
    layers: usize,
    words: usize,
    data: Vec<u64>,
}

impl FootprintGrid {
    pub fn new(rows: usize, layers: usize, bits: usize, data: Vec<u64>) -> Result<Self> {
        let words = bits / WORD_BITS;
        if data.len() != rows * layers * words {
            return Err(Error::DimensionMismatch {
                expected: rows * layers * words,
                actual: data.len(),
            });
        }
        Ok(Self { rows, layers, words, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn bits(&self) -> usize {
        self.words * WORD_BITS
    }

    pub fn words(&self) -> usize {
        self.words
    }

    /// All rows of one layer, contiguous.
    #[inline]
    pub fn layer(&self, layer: usize) -> &[u64] {
        let n = self.rows * self.words;
        &self.data[layer * n..(layer + 1) * n]
    }

    #[inline]
    pub fn get(&self, row: usize, layer: usize) -> &[u64] {
        let start = (layer * self.rows + row) * self.words;
        &self.data[start..start + self.words]
    }

    pub fn footprint(&self, row: usize, layer: usize) -> LshFootprint {
        LshFootprint::from_words(self.get(row, layer).to_vec())
    }

    pub fn raw(&self) -> &[u64] {
        &self.data
    }
}

/// Dense vectors for `rows` terms at `layers` layers, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    rows: usize,
    layers: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DenseGrid {
    pub fn new(rows: usize, layers: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * layers * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * layers * dim,
                actual: data.len(),
            });
        }
        Ok(Self { rows, layers, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, layer: usize) -> &[f32] {
        let start = (layer * self.rows + row) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

/// Everything the re-ranker needs about one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub term_count: usize,
    pub footprints: Option<FootprintGrid>,
    pub dense: Option<DenseGrid>,
    pub cls: DenseVector,
    pub fields: Vec<FieldStats>,
    pub other_features: BTreeMap<String, f64>,
}

impl DocumentRecord {
    /// Bytes of embedding payload: footprints, dense term vectors and the
    /// full-precision [CLS] vector. Lexical statistics are not counted.
    pub fn embedding_bytes(&self) -> usize {
        let fp = self.footprints.as_ref().map_or(0, |g| g.raw().len() * 8);
        let dense = self.dense.as_ref().map_or(0, |g| g.raw().len() * 4);
        fp + dense + self.cls.dim() * 4
    }

    pub fn field(&self, field: Field) -> Option<&FieldStats> {
        self.fields.iter().find(|f| f.field == field)
    }

    pub(crate) fn validate(&self, config: &StoreConfig) -> Result<()> {
        let layers = config.layer_ids.len();
        if self.term_count == 0 {
            return Err(Error::Config(format!("document `{}` has no terms", self.doc_id)));
        }
        if self.cls.dim() != config.dim {
            return Err(Error::DimensionMismatch { expected: config.dim, actual: self.cls.dim() });
        }
        match (&self.footprints, config.precision.footprints()) {
            (Some(g), true) => {
                if g.rows() != self.term_count || g.layers() != layers || g.bits() != config.bits {
                    return Err(Error::Config(format!(
                        "footprint grid of `{}` is {}x{}x{} bits, expected {}x{}x{}",
                        self.doc_id, g.rows(), g.layers(), g.bits(), self.term_count, layers, config.bits
                    )));
                }
            }
            (None, false) => {}
            _ => return Err(Error::Config(format!("footprint presence of `{}` disagrees with store", self.doc_id))),
        }
        match (&self.dense, config.precision.dense()) {
            (Some(g), true) => {
                if g.rows() != self.term_count || g.layers() != layers || g.dim() != config.dim {
                    return Err(Error::Config(format!("dense grid of `{}` has the wrong shape", self.doc_id)));
                }
            }
            (None, false) => {}
            _ => return Err(Error::Config(format!("dense presence of `{}` disagrees with store", self.doc_id))),
        }
        Ok(())
    }

    pub(crate) fn encode(&self, config: &StoreConfig) -> Result<Vec<u8>> {
        self.validate(config)?;
        let mut w = ByteWriter::new();
        w.u32(self.term_count as u32);
        if let Some(g) = &self.footprints {
            w.u64s(g.raw());
        }
        if let Some(g) = &self.dense {
            w.f32s(g.raw());
        }
        w.f32s(self.cls.as_slice());
        w.u16(self.other_features.len() as u16);
        for (name, v) in &self.other_features {
            w.str16(name)?;
            w.f64(*v);
        }
        w.u8(self.fields.len() as u8);
        for f in &self.fields {
            w.u8(f.field.code());
            w.u32(f.length);
            w.u32(f.positions.len() as u32);
            for (term, pos) in &f.positions {
                w.str16(term)?;
                w.u32(pos.len() as u32);
                for p in pos {
                    w.u32(*p);
                }
            }
        }
        Ok(w.into_inner())
    }

    pub(crate) fn decode(doc_id: String, body: &[u8], config: &StoreConfig) -> Result<Self> {
        let mut r = ByteReader::new(body, "document record");
        let m = r.u32()? as usize;
        let layers = config.layer_ids.len();
        let footprints = if config.precision.footprints() {
            let words = config.bits / WORD_BITS;
            Some(FootprintGrid::new(m, layers, config.bits, r.u64s(m * layers * words)?)?)
        } else {
            None
        };
        let dense = if config.precision.dense() {
            Some(DenseGrid::new(m, layers, config.dim, r.f32s(m * layers * config.dim)?)?)
        } else {
            None
        };
        let cls = DenseVector::new(r.f32s(config.dim)?)?;
        let mut other_features = BTreeMap::new();
        for _ in 0..r.u16()? {
            let name = r.str16()?;
            other_features.insert(name, r.f64()?);
        }
        let mut fields = Vec::new();
        for _ in 0..r.u8()? {
            let field = Field::from_code(r.u8()?)?;
            let length = r.u32()?;
            let mut positions = BTreeMap::new();
            for _ in 0..r.u32()? {
                let term = r.str16()?;
                let n = r.u32()? as usize;
                let pos = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                positions.insert(term, pos);
            }
            let stats = FieldStats { field, length, positions };
            stats.validate()?;
            fields.push(stats);
        }
        r.expect_end()?;
        Ok(Self { doc_id, term_count: m, footprints, dense, cls, fields, other_features })
    }
}

pub(crate) fn encode_group(group: &TokenGroupEmbedding, config: &StoreConfig) -> Result<Vec<u8>> {
    let layers = config.layer_ids.len();
    if !(1..=2).contains(&group.members.len()) {
        return Err(Error::Config(format!("group `{}` must have 1 or 2 members", group.id)));
    }
    let mut w = ByteWriter::new();
    w.u8(group.members.len() as u8);
    for m in &group.members {
        if config.precision.footprints() {
            if m.footprints.len() != layers {
                return Err(Error::DimensionMismatch { expected: layers, actual: m.footprints.len() });
            }
            for fp in &m.footprints {
                if fp.bits() != config.bits {
                    return Err(Error::FootprintMismatch(fp.bits(), config.bits));
                }
                w.u64s(fp.words());
            }
        }
        if config.precision.dense() {
            if m.dense.len() != layers {
                return Err(Error::DimensionMismatch { expected: layers, actual: m.dense.len() });
            }
            for v in &m.dense {
                if v.dim() != config.dim {
                    return Err(Error::DimensionMismatch { expected: config.dim, actual: v.dim() });
                }
                w.f32s(v.as_slice());
            }
        }
    }
    Ok(w.into_inner())
}

pub(crate) fn decode_group(id: String, body: &[u8], config: &StoreConfig) -> Result<TokenGroupEmbedding> {
    let mut r = ByteReader::new(body, "token group record");
    let count = r.u8()?;
    if !(1..=2).contains(&count) {
        return Err(Error::format("token group record", format!("{count} members")));
    }
    let layers = config.layer_ids.len();
    let words = config.bits / WORD_BITS;
    let mut members = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut m = LayeredTermEmbedding::default();
        if config.precision.footprints() {
            for _ in 0..layers {
                m.footprints.push(LshFootprint::from_words(r.u64s(words)?));
            }
        }
        if config.precision.dense() {
            for _ in 0..layers {
                m.dense.push(DenseVector::new(r.f32s(config.dim)?)?);
            }
        }
        members.push(m);
    }
    r.expect_end()?;
    Ok(TokenGroupEmbedding { id, members })
}

//! Encoder export container (`.becrexp`): the hand-off from the external
//! encoder to the store builders.
//!
//! ```text
//! 8 bytes   magic "BECREXP\0"
//! u32       version (1)
//! u64       manifest length in bytes
//! ...       UTF-8 JSON manifest
//! ...       data region: raw little-endian f32 blocks
//! ```
//!
//! The manifest carries `dim`, `layer_ids`, and entries for every document
//! (`doc_id`, `title`, `body`, `other_features`, `pieces`) and token group
//! (`id`, `members`). Each piece and group names the byte `offset` of its
//! block within the data region. A piece block holds `terms x L x p` floats
//! (term-major, then layer, then dimension) followed by the piece's `p`-float
//! [CLS] vector. A group block holds `members x L x p` floats.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{read_preamble, ByteReader, ByteWriter};
use crate::error::{Error, Result};

use super::kv::read_exact_at;

const MAGIC: &[u8; 8] = b"BECREXP\0";
const VERSION: u32 = 1;
const PREAMBLE_LEN: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPiece {
    pub term_count: usize,
    /// `term_count x L x p`, term-major.
    pub vectors: Vec<f32>,
    pub cls: Vec<f32>,
}

impl ExportPiece {
    pub fn vector(&self, term: usize, layer: usize, layers: usize, dim: usize) -> &[f32] {
        let start = (term * layers + layer) * dim;
        &self.vectors[start..start + dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub other_features: BTreeMap<String, f64>,
    pub pieces: Vec<ExportPiece>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportGroup {
    pub id: String,
    /// One `L x p` block per member term.
    pub members: Vec<Vec<f32>>,
}

/// A whole export held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderExport {
    pub dim: usize,
    pub layer_ids: Vec<u32>,
    pub documents: Vec<ExportDocument>,
    pub groups: Vec<ExportGroup>,
}

impl EncoderExport {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = ExportWriter::create(path, self.dim, self.layer_ids.clone())?;
        for d in &self.documents {
            w.add_document(d)?;
        }
        for g in &self.groups {
            w.add_group(g)?;
        }
        w.finish()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let r = ExportReader::open(path)?;
        Ok(Self {
            dim: r.dim(),
            layer_ids: r.layer_ids().to_vec(),
            documents: r.documents().collect::<Result<_>>()?,
            groups: r.groups().collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    dim: usize,
    layer_ids: Vec<u32>,
    documents: Vec<DocEntry>,
    groups: Vec<GroupEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocEntry {
    doc_id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: String,
    #[serde(default)]
    other_features: BTreeMap<String, f64>,
    pieces: Vec<PieceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PieceEntry {
    terms: usize,
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupEntry {
    id: String,
    members: usize,
    offset: u64,
}

/// Streams blocks to a side file and assembles the container on `finish`.
pub struct ExportWriter {
    path: PathBuf,
    part: PathBuf,
    data: BufWriter<File>,
    offset: u64,
    manifest: Manifest,
}

impl ExportWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, layer_ids: Vec<u32>) -> Result<Self> {
        if dim == 0 || layer_ids.is_empty() {
            return Err(Error::Config("export needs a positive dimension and at least one layer".into()));
        }
        let path = path.as_ref().to_path_buf();
        let mut part = path.clone().into_os_string();
        part.push(".part");
        let part = PathBuf::from(part);
        Ok(Self {
            data: BufWriter::new(File::create(&part)?),
            path,
            part,
            offset: 0,
            manifest: Manifest { dim, layer_ids, documents: Vec::new(), groups: Vec::new() },
        })
    }

    fn layers(&self) -> usize {
        self.manifest.layer_ids.len()
    }

    fn write_block(&mut self, values: &[f32]) -> Result<()> {
        let mut w = ByteWriter::new();
        w.f32s(values);
        self.data.write_all(&w.into_inner())?;
        self.offset += values.len() as u64 * 4;
        Ok(())
    }

    pub fn add_document(&mut self, doc: &ExportDocument) -> Result<()> {
        if doc.pieces.is_empty() {
            return Err(Error::Config(format!("document `{}` has no pieces", doc.doc_id)));
        }
        let (dim, layers) = (self.manifest.dim, self.layers());
        let mut pieces = Vec::with_capacity(doc.pieces.len());
        for p in &doc.pieces {
            if p.term_count == 0 {
                return Err(Error::Config(format!("document `{}` has an empty piece", doc.doc_id)));
            }
            if p.vectors.len() != p.term_count * layers * dim {
                return Err(Error::DimensionMismatch { expected: p.term_count * layers * dim, actual: p.vectors.len() });
            }
            if p.cls.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: p.cls.len() });
            }
            pieces.push(PieceEntry { terms: p.term_count, offset: self.offset });
            self.write_block(&p.vectors)?;
            self.write_block(&p.cls)?;
        }
        self.manifest.documents.push(DocEntry {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            body: doc.body.clone(),
            other_features: doc.other_features.clone(),
            pieces,
        });
        Ok(())
    }

    pub fn add_group(&mut self, group: &ExportGroup) -> Result<()> {
        let block = self.layers() * self.manifest.dim;
        if !(1..=2).contains(&group.members.len()) {
            return Err(Error::Config(format!("group `{}` must have 1 or 2 members", group.id)));
        }
        let offset = self.offset;
        for m in &group.members {
            if m.len() != block {
                return Err(Error::DimensionMismatch { expected: block, actual: m.len() });
            }
            self.write_block(m)?;
        }
        self.manifest.groups.push(GroupEntry { id: group.id.clone(), members: group.members.len(), offset });
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.data.flush()?;
        drop(self.data);
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = BufWriter::new(File::create(&self.path)?);
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(manifest.len() as u64);
        out.write_all(&w.into_inner())?;
        out.write_all(&manifest)?;
        io::copy(&mut File::open(&self.part)?, &mut out)?;
        out.flush()?;
        fs::remove_file(&self.part)?;
        Ok(())
    }
}

/// Random-access reader over an export file.
pub struct ExportReader {
    file: File,
    data_start: u64,
    manifest: Manifest,
}

impl ExportReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let mut pre = vec![0u8; PREAMBLE_LEN as usize];
        read_exact_at(&file, &mut pre, 0)?;
        let mut r = ByteReader::new(&pre, "encoder export");
        read_preamble(&mut r, MAGIC, VERSION)?;
        let len = r.u64()?;
        let mut raw = vec![0u8; len as usize];
        read_exact_at(&file, &mut raw, PREAMBLE_LEN)?;
        let manifest: Manifest = serde_json::from_slice(&raw)?;
        if manifest.dim == 0 || manifest.layer_ids.is_empty() {
            return Err(Error::format("encoder export", "manifest has no dimension or layers"));
        }
        Ok(Self { file, data_start: PREAMBLE_LEN + len, manifest })
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn layer_ids(&self) -> &[u32] {
        &self.manifest.layer_ids
    }

    pub fn document_count(&self) -> usize {
        self.manifest.documents.len()
    }

    pub fn group_count(&self) -> usize {
        self.manifest.groups.len()
    }

    fn floats(&self, offset: u64, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; n * 4];
        read_exact_at(&self.file, &mut raw, self.data_start + offset)?;
        ByteReader::new(&raw, "encoder export").f32s(n)
    }

    pub fn document(&self, i: usize) -> Result<ExportDocument> {
        let e = &self.manifest.documents[i];
        let (dim, layers) = (self.dim(), self.layer_ids().len());
        let mut pieces = Vec::with_capacity(e.pieces.len());
        for p in &e.pieces {
            let n = p.terms * layers * dim;
            let mut all = self.floats(p.offset, n + dim)?;
            let cls = all.split_off(n);
            pieces.push(ExportPiece { term_count: p.terms, vectors: all, cls });
        }
        Ok(ExportDocument {
            doc_id: e.doc_id.clone(),
            title: e.title.clone(),
            body: e.body.clone(),
            other_features: e.other_features.clone(),
            pieces,
        })
    }

    pub fn documents(&self) -> impl Iterator<Item = Result<ExportDocument>> + '_ {
        (0..self.document_count()).map(|i| self.document(i))
    }

    pub fn group(&self, i: usize) -> Result<ExportGroup> {
        let e = &self.manifest.groups[i];
        let block = self.layer_ids().len() * self.dim();
        let all = self.floats(e.offset, e.members * block)?;
        Ok(ExportGroup { id: e.id.clone(), members: all.chunks_exact(block).map(<[f32]>::to_vec).collect() })
    }

    pub fn groups(&self) -> impl Iterator<Item = Result<ExportGroup>> + '_ {
        (0..self.group_count()).map(|i| self.group(i))
    }
}

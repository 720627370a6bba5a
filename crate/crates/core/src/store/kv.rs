//! Immutable key-value file: fixed 256-byte header, payload region, trailing
//! open-addressing hash index.
//!
//! ```text
//! offset  size  field
//!      0     8  magic ("BECRDOC\0" or "BECRTOK\0")
//!      8     4  format version (u32)
//!     12     4  flags: bit 0 footprints present, bit 1 dense vectors present
//!     16     4  embedding dimension p
//!     20     4  stored layer count L'
//!     24     4  footprint bits b (0 when footprints are absent)
//!     28     4  reserved, zero
//!     32     8  LSH seed
//!     40     8  record count
//!     48     8  index offset
//!     56     8  index slot count (power of two)
//!     64   192  layer ids, 48 x u32, unused entries zero
//!    256     -  records: key length (u16), key bytes, body
//!  index     -  slots x (key hash u64, record offset u64, record length u64)
//! ```
//!
//! Every integer is little-endian. Empty index slots have offset `u64::MAX`.
//! Keys hash with 64-bit FNV-1a and probe linearly.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use crate::codec::{fnv1a64, read_preamble, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 256;
pub const FORMAT_VERSION: u32 = 1;
pub const MAX_LAYERS: usize = 48;
const SLOT_LEN: usize = 24;
const EMPTY: u64 = u64::MAX;

pub const FLAG_FOOTPRINTS: u32 = 1;
pub const FLAG_DENSE: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawHeader {
    pub magic: [u8; 8],
    pub flags: u32,
    pub dim: u32,
    pub layer_ids: Vec<u32>,
    pub bits: u32,
    pub seed: u64,
    pub record_count: u64,
    pub index_offset: u64,
    pub index_slots: u64,
}

impl RawHeader {
    fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(&self.magic);
        w.u32(FORMAT_VERSION);
        w.u32(self.flags);
        w.u32(self.dim);
        w.u32(self.layer_ids.len() as u32);
        w.u32(self.bits);
        w.u32(0);
        w.u64(self.seed);
        w.u64(self.record_count);
        w.u64(self.index_offset);
        w.u64(self.index_slots);
        for i in 0..MAX_LAYERS {
            w.u32(self.layer_ids.get(i).copied().unwrap_or(0));
        }
        let buf = w.into_inner();
        debug_assert_eq!(buf.len(), HEADER_LEN);
        buf
    }

    fn decode(buf: &[u8], magic: &[u8; 8]) -> Result<Self> {
        let mut r = ByteReader::new(buf, "store header");
        read_preamble(&mut r, magic, FORMAT_VERSION)?;
        let flags = r.u32()?;
        let dim = r.u32()?;
        let layers = r.u32()? as usize;
        let bits = r.u32()?;
        r.u32()?;
        let seed = r.u64()?;
        let record_count = r.u64()?;
        let index_offset = r.u64()?;
        let index_slots = r.u64()?;
        if layers > MAX_LAYERS {
            return Err(Error::format("store header", format!("{layers} layers exceeds {MAX_LAYERS}")));
        }
        let all: Vec<u32> = (0..MAX_LAYERS).map(|_| r.u32()).collect::<Result<_>>()?;
        if !index_slots.is_power_of_two() {
            return Err(Error::format("store header", "index slot count is not a power of two"));
        }
        Ok(Self {
            magic: *magic,
            flags,
            dim,
            layer_ids: all[..layers].to_vec(),
            bits,
            seed,
            record_count,
            index_offset,
            index_slots,
        })
    }
}

/// Single-writer builder. Records are appended in call order.
pub struct KvWriter {
    out: BufWriter<File>,
    header: RawHeader,
    offset: u64,
    entries: Vec<(u64, u64, u64)>,
    keys: HashSet<String>,
}

impl KvWriter {
    pub fn create(path: &Path, header: RawHeader) -> Result<Self> {
        if header.layer_ids.len() > MAX_LAYERS {
            return Err(Error::Config(format!("at most {MAX_LAYERS} layers can be stored")));
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header.encode())?;
        Ok(Self {
            out,
            header,
            offset: HEADER_LEN as u64,
            entries: Vec::new(),
            keys: HashSet::new(),
        })
    }

    pub fn append(&mut self, key: &str, body: &[u8]) -> Result<()> {
        if !self.keys.insert(key.to_string()) {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
        let mut w = ByteWriter::new();
        w.str16(key)?;
        w.bytes(body);
        let rec = w.into_inner();
        self.out.write_all(&rec)?;
        self.entries.push((fnv1a64(key.as_bytes()), self.offset, rec.len() as u64));
        self.offset += rec.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        let slots = (self.entries.len().max(1) * 2).next_power_of_two();
        let mut table = vec![(0u64, EMPTY, 0u64); slots];
        for &(hash, offset, len) in &self.entries {
            let mut s = hash as usize & (slots - 1);
            while table[s].1 != EMPTY {
                s = (s + 1) & (slots - 1);
            }
            table[s] = (hash, offset, len);
        }
        let mut w = ByteWriter::new();
        for (hash, offset, len) in table {
            w.u64(hash);
            w.u64(offset);
            w.u64(len);
        }
        self.out.write_all(&w.into_inner())?;
        self.header.record_count = self.entries.len() as u64;
        self.header.index_offset = self.offset;
        self.header.index_slots = slots as u64;
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&self.header.encode())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Read-only handle. Reads are positional, so one handle serves any number of
/// threads without locking.
#[derive(Debug)]
pub struct KvFile {
    file: File,
    header: RawHeader,
    index: Vec<(u64, u64, u64)>,
}

impl KvFile {
    pub fn open(path: &Path, magic: &[u8; 8]) -> Result<Self> {
        let file = File::open(path)?;
        let mut head = vec![0u8; HEADER_LEN];
        read_exact_at(&file, &mut head, 0)?;
        let header = RawHeader::decode(&head, magic)?;
        let mut raw = vec![0u8; header.index_slots as usize * SLOT_LEN];
        read_exact_at(&file, &mut raw, header.index_offset)?;
        let index: Vec<(u64, u64, u64)> = raw
            .chunks_exact(SLOT_LEN)
            .map(|c| {
                let word = |i: usize| u64::from_le_bytes(c[i * 8..i * 8 + 8].try_into().unwrap());
                (word(0), word(1), word(2))
            })
            .collect();
        let used = index.iter().filter(|s| s.1 != EMPTY).count() as u64;
        if used != header.record_count {
            return Err(Error::format(
                "store index",
                format!("{used} index entries for {} records", header.record_count),
            ));
        }
        Ok(Self { file, header, index })
    }

    pub fn header(&self) -> &RawHeader {
        &self.header
    }

    fn read_record(&self, offset: u64, len: u64) -> Result<(String, Vec<u8>)> {
        let mut buf = vec![0u8; len as usize];
        read_exact_at(&self.file, &mut buf, offset)?;
        let mut r = ByteReader::new(&buf, "store record");
        let key = r.str16()?;
        let start = r.position();
        buf.drain(..start);
        Ok((key, buf))
    }

    /// Body bytes stored under `key`.
    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>> {
        let hash = fnv1a64(key.as_bytes());
        let mask = self.index.len() - 1;
        let mut s = hash as usize & mask;
        for _ in 0..self.index.len() {
            let (h, offset, len) = self.index[s];
            if offset == EMPTY {
                return Ok(None);
            }
            if h == hash {
                let (k, body) = self.read_record(offset, len)?;
                if k == key {
                    return Ok(Some(body));
                }
            }
            s = (s + 1) & mask;
        }
        Ok(None)
    }

    /// Keys in file order.
    pub fn keys(&self) -> Result<Vec<String>> {
        let mut live: Vec<_> = self.index.iter().filter(|s| s.1 != EMPTY).copied().collect();
        live.sort_by_key(|s| s.1);
        live.into_iter()
            .map(|(_, offset, len)| self.read_record(offset, len).map(|(k, _)| k))
            .collect()
    }
}

#[cfg(unix)]
pub(crate) fn read_exact_at(file: &File, buf: &mut [u8], offset: u64) -> Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)?;
    Ok(())
}

#[cfg(windows)]
pub(crate) fn read_exact_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::Error::from(std::io::ErrorKind::UnexpectedEof).into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

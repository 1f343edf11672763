//! `EmbeddingStore` and its binary file format.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 4    | magic `AZEB`                           |
//! | 4      | 4    | version `u32` = 1                      |
//! | 8      | 8    | count `u64`                            |
//! | 16     | 4    | dim `u32`                              |
//! | 20     | 1    | kind `u8` (0 image, 1 text, 2 projected) |
//! | 21     | 7    | reserved, zero                         |
//! | 28     | 4·count·dim | `f32` payload, row-major        |
//! | …      | …    | `count` ids, each `u16` length + UTF-8 |

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FileKind, Result};
use crate::numerics::Matrix;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"AZEB";
const VERSION: u32 = 1;
pub(crate) const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    ImageFeature,
    TextFeature,
    Projected,
}

impl StoreKind {
    fn code(self) -> u8 {
        match self {
            StoreKind::ImageFeature => 0,
            StoreKind::TextFeature => 1,
            StoreKind::Projected => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(StoreKind::ImageFeature),
            1 => Some(StoreKind::TextFeature),
            2 => Some(StoreKind::Projected),
            _ => None,
        }
    }
}

/// ID-indexed matrix of fixed-dimension vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    kind: StoreKind,
    vectors: Matrix,
    lookup: HashMap<String, usize>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.kind == other.kind && self.vectors == other.vectors
    }
}

impl EmbeddingStore {
    pub fn new(ids: Vec<String>, vectors: Matrix, kind: StoreKind) -> Result<Self> {
        if vectors.cols() == 0 {
            return Err(Error::InvalidArgument("embedding dim must be > 0".into()));
        }
        if ids.len() != vectors.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.rows()
            )));
        }
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id {id:?}")));
            }
        }
        Ok(EmbeddingStore {
            ids,
            kind,
            vectors,
            lookup,
        })
    }

    pub fn empty(dim: usize, kind: StoreKind) -> Result<Self> {
        EmbeddingStore::new(Vec::new(), Matrix::zeros(0, dim), kind)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.vectors.row(i))
    }

    /// Rows at `indices`, in that order, as a new store of the same kind.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        EmbeddingStore::new(ids, self.vectors.select_rows(indices), self.kind)
    }

    /// Appends `other` below `self`. Kinds and dims must agree; ids must stay unique.
    pub fn concat(&self, other: &EmbeddingStore) -> Result<Self> {
        if self.kind != other.kind || self.dim() != other.dim() {
            return Err(Error::InvalidArgument(format!(
                "cannot concatenate {:?}/{} with {:?}/{}",
                self.kind,
                self.dim(),
                other.kind,
                other.dim()
            )));
        }
        let mut ids = self.ids.clone();
        ids.extend(other.ids.iter().cloned());
        let mut data = self.vectors.data().to_vec();
        data.extend_from_slice(other.vectors.data());
        EmbeddingStore::new(
            ids,
            Matrix::from_vec(self.len() + other.len(), self.dim(), data)?,
            self.kind,
        )
    }

    /// Serializes to the binary format. Values are narrowed to `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = u32::try_from(self.dim())
            .map_err(|_| Error::InvalidArgument(format!("dim {} exceeds u32", self.dim())))?;
        let mut out =
            Vec::with_capacity(HEADER_LEN + 4 * self.vectors.data().len() + 8 * self.len());
        out.extend_from_slice(&EMBEDDING_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&[0u8; 7]);
        for (pos, &v) in self.vectors.data().iter().enumerate() {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "value {v} at row {} does not fit in f32",
                    pos / self.dim()
                )));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
        for id in &self.ids {
            let len = u16::try_from(id.len()).map_err(|_| {
                Error::InvalidArgument(format!("id longer than 65535 bytes: {id:.32}…"))
            })?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        Ok(out)
    }

    /// Parses a complete embedding file; trailing bytes are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new(bytes, FileKind::Embeddings);
        let store = decode_store_prefix(&mut reader)?;
        if reader.remaining() != 0 {
            return Err(Error::IdCountMismatch {
                kind: FileKind::Embeddings,
                declared: store.len() as u64,
                detail: format!("{} trailing bytes after the last id", reader.remaining()),
            });
        }
        Ok(store)
    }
}

/// Cursor over a byte slice that reports truncation against a file kind.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    kind: FileKind,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], kind: FileKind) -> Self {
        ByteReader {
            bytes,
            offset: 0,
            kind,
        }
    }

    pub(crate) fn kind(&self) -> FileKind {
        self.kind
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.offset
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                kind: self.kind,
                offset: self.offset,
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = &self.bytes[self.offset..(self.offset + 4).min(self.bytes.len())];
        if found != expected {
            return Err(Error::BadMagic {
                kind: self.kind,
                expected,
                found: found.to_vec(),
            });
        }
        self.offset += 4;
        Ok(())
    }
}

/// Decodes one store from the front of `reader`, leaving any footer unread.
pub(crate) fn decode_store_prefix(reader: &mut ByteReader<'_>) -> Result<EmbeddingStore> {
    let file_kind = reader.kind();
    reader.magic(EMBEDDING_MAGIC)?;
    let version = reader.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            kind: file_kind,
            expected: VERSION,
            found: version,
        });
    }
    let count = reader.u64()?;
    let dim = reader.u32()? as usize;
    let kind_code = reader.array::<1>()?[0];
    let reserved = reader.array::<7>()?;
    let kind = StoreKind::from_code(kind_code).ok_or_else(|| Error::Malformed {
        kind: file_kind,
        detail: format!("unknown store kind code {kind_code}"),
    })?;
    if reserved != [0u8; 7] {
        return Err(Error::Malformed {
            kind: file_kind,
            detail: "reserved header bytes are not zero".into(),
        });
    }
    if dim == 0 {
        return Err(Error::Malformed {
            kind: file_kind,
            detail: "dim is 0".into(),
        });
    }
    let n_values = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(dim))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::Malformed {
            kind: file_kind,
            detail: format!("count {count} × dim {dim} overflows"),
        })?;
    let payload = reader.take(n_values * 4)?;
    let mut data = Vec::with_capacity(n_values);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(Error::Malformed {
                kind: file_kind,
                detail: format!("non-finite value at row {}", data.len() / dim),
            });
        }
        data.push(f64::from(v));
    }
    let count = n_values / dim;
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let id_err = |detail: String| Error::IdCountMismatch {
            kind: file_kind,
            declared: count as u64,
            detail,
        };
        let len = match reader.array::<2>() {
            Ok(b) => u16::from_le_bytes(b) as usize,
            Err(_) => return Err(id_err(format!("id block ends after {i} ids"))),
        };
        let raw = reader
            .take(len)
            .map_err(|_| id_err(format!("id {i} runs past end of file")))?;
        let id = std::str::from_utf8(raw).map_err(|_| Error::Malformed {
            kind: file_kind,
            detail: format!("id {i} is not UTF-8"),
        })?;
        ids.push(id.to_owned());
    }
    let vectors = Matrix::from_vec(count, dim, data)?;
    EmbeddingStore::new(ids, vectors, kind).map_err(|e| Error::Malformed {
        kind: file_kind,
        detail: e.to_string(),
    })
}

pub fn save_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = store.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

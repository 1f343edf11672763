//! Exact cosine top-k retrieval of images for text queries.
//!
//! Image features are projected and L2-normalized once into an immutable
//! [`RetrievalIndex`]; a query is projected by the text head, normalized, and
//! scored against every index row. Ties keep index order.
//!
//! The index file is an embedding store (kind `projected`) followed by a
//! footer: `u32` length + the hex fingerprint of the model checkpoint.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{decode_store_prefix, ByteReader, EmbeddingStore, StoreKind};
use crate::error::{Error, FileKind, Result};
use crate::model::DualEncoderModel;
use crate::numerics::{l2_normalize_rows, matmul_bt, norm, Matrix};

/// Loaded index rows are `f32`-rounded, so unit norm is checked at this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    store: EmbeddingStore,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query_id: String,
    pub k: usize,
    pub hits: Vec<Hit>,
}

impl RankedResult {
    pub fn ranked_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.id.as_str()).collect()
    }
}

pub fn build_index(model: &DualEncoderModel, images: &EmbeddingStore) -> Result<RetrievalIndex> {
    if images.kind() != StoreKind::ImageFeature {
        return Err(Error::InvalidArgument(format!(
            "index needs an image_feature store, got {:?}",
            images.kind()
        )));
    }
    let projected = model.image_head.project(images.vectors())?;
    let normalized = l2_normalize_rows(&projected);
    if let Some(row) = normalized.first_degenerate() {
        return Err(Error::DegenerateId {
            id: images.ids()[row].clone(),
        });
    }
    let store = EmbeddingStore::new(
        images.ids().to_vec(),
        normalized.matrix,
        StoreKind::Projected,
    )?;
    Ok(RetrievalIndex {
        store,
        fingerprint: model.fingerprint()?,
    })
}

/// Indices of `scores` in descending score order; equal scores keep index order.
fn rank(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    order.truncate(k);
    order
}

impl RetrievalIndex {
    pub fn ids(&self) -> &[String] {
        self.store.ids()
    }

    pub fn vectors(&self) -> &Matrix {
        self.store.vectors()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn check_model(&self, model: &DualEncoderModel) -> Result<()> {
        let fp = model.fingerprint()?;
        if fp != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                index: self.fingerprint.clone(),
                model: fp,
            });
        }
        Ok(())
    }

    fn results(
        &self,
        query_ids: &[String],
        unit_queries: &Matrix,
        k: usize,
    ) -> Result<Vec<RankedResult>> {
        let scores = matmul_bt(unit_queries, self.vectors())?;
        Ok(query_ids
            .iter()
            .enumerate()
            .map(|(q, qid)| {
                let row = scores.row(q);
                let hits = rank(row, k)
                    .into_iter()
                    .map(|i| Hit {
                        id: self.ids()[i].clone(),
                        score: row[i],
                    })
                    .collect();
                RankedResult {
                    query_id: qid.clone(),
                    k,
                    hits,
                }
            })
            .collect())
    }

    /// Top-`k` images for one text feature vector.
    pub fn query(
        &self,
        model: &DualEncoderModel,
        query_id: impl Into<String>,
        text_feature: &[f64],
        k: usize,
    ) -> Result<RankedResult> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        self.check_model(model)?;
        let x = Matrix::from_vec(1, text_feature.len(), text_feature.to_vec())?;
        let unit = l2_normalize_rows(&model.text_head.project(&x)?)
            .require_nondegenerate("query projection")?;
        let mut out = self.results(&[query_id.into()], &unit.matrix, k)?;
        Ok(out.pop().expect("one query"))
    }

    /// One [`RankedResult`] per row of `texts`, in row order. Identical, bit for
    /// bit, to calling [`query`](Self::query) on each row.
    pub fn batch_query(
        &self,
        model: &DualEncoderModel,
        texts: &EmbeddingStore,
        k: usize,
    ) -> Result<Vec<RankedResult>> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        self.check_model(model)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let projected = model.text_head.project(texts.vectors())?;
        let unit = l2_normalize_rows(&projected);
        if let Some(row) = unit.first_degenerate() {
            return Err(Error::DegenerateId {
                id: texts.ids()[row].clone(),
            });
        }
        self.results(texts.ids(), &unit.matrix, k)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = self.store.to_bytes()?;
        let fp = self.fingerprint.as_bytes();
        out.extend_from_slice(&(fp.len() as u32).to_le_bytes());
        out.extend_from_slice(fp);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, FileKind::Index);
        let store = decode_store_prefix(&mut r)?;
        if store.kind() != StoreKind::Projected {
            return Err(Error::Malformed {
                kind: FileKind::Index,
                detail: format!("store kind {:?}, expected projected", store.kind()),
            });
        }
        let len = r.u32()? as usize;
        let fp = std::str::from_utf8(r.take(len)?)
            .ok()
            .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| Error::Malformed {
                kind: FileKind::Index,
                detail: "fingerprint is not a non-empty hex string".into(),
            })?
            .to_owned();
        if r.remaining() != 0 {
            return Err(Error::Malformed {
                kind: FileKind::Index,
                detail: format!("{} trailing bytes", r.remaining()),
            });
        }
        for (i, row) in store.vectors().iter_rows().enumerate() {
            if (norm(row) - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Malformed {
                    kind: FileKind::Index,
                    detail: format!("row {i} ({:?}) is not unit norm", store.ids()[i]),
                });
            }
        }
        Ok(RetrievalIndex {
            store,
            fingerprint: fp,
        })
    }
}

pub fn query(
    index: &RetrievalIndex,
    model: &DualEncoderModel,
    query_id: impl Into<String>,
    text_feature: &[f64],
    k: usize,
) -> Result<RankedResult> {
    index.query(model, query_id, text_feature, k)
}

pub fn batch_query(
    index: &RetrievalIndex,
    model: &DualEncoderModel,
    texts: &EmbeddingStore,
    k: usize,
) -> Result<Vec<RankedResult>> {
    index.batch_query(model, texts, k)
}

pub fn save_index(index: &RetrievalIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, index.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<RetrievalIndex> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    RetrievalIndex::from_bytes(&bytes)
}

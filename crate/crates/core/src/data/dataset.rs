use std::collections::{BTreeMap, HashSet};

use super::{CaptionRecord, EmbeddingStore, Split, StoreKind};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::XorShift64Star;

/// A caption (text row) and its ground-truth image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub text_id: String,
    pub image_id: String,
    pub split: Split,
}

/// Image and text feature stores joined by caption→image pairs.
///
/// A text id appears in at most one pair; an image may be paired with many
/// captions.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    image_store: EmbeddingStore,
    text_store: EmbeddingStore,
    pairs: Vec<Pair>,
    // (text row, image row) per pair
    rows: Vec<(usize, usize)>,
}

impl PairedDataset {
    pub fn new(
        image_store: EmbeddingStore,
        text_store: EmbeddingStore,
        pairs: Vec<Pair>,
    ) -> Result<Self> {
        if image_store.kind() != StoreKind::ImageFeature {
            return Err(Error::Dataset(format!(
                "image store has kind {:?}, expected image_feature",
                image_store.kind()
            )));
        }
        if text_store.kind() != StoreKind::TextFeature {
            return Err(Error::Dataset(format!(
                "text store has kind {:?}, expected text_feature",
                text_store.kind()
            )));
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut rows = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let t = text_store.position(&p.text_id).ok_or_else(|| {
                Error::Dataset(format!("pair references unknown text id {:?}", p.text_id))
            })?;
            let i = image_store.position(&p.image_id).ok_or_else(|| {
                Error::Dataset(format!("pair references unknown image id {:?}", p.image_id))
            })?;
            if !seen.insert(p.text_id.as_str()) {
                return Err(Error::Dataset(format!(
                    "text id {:?} appears in more than one pair",
                    p.text_id
                )));
            }
            rows.push((t, i));
        }
        Ok(PairedDataset {
            image_store,
            text_store,
            pairs,
            rows,
        })
    }

    /// Joins a manifest with feature stores: row `r` of `text_store` is the
    /// caption on manifest line `r`.
    ///
    /// With `captions_per_image = Some(c)`, every image in `image_store` must
    /// have exactly `c` captions; images with any other count would bias the
    /// evaluation.
    pub fn from_manifest(
        records: &[CaptionRecord],
        image_store: EmbeddingStore,
        text_store: EmbeddingStore,
        captions_per_image: Option<usize>,
    ) -> Result<Self> {
        if records.len() != text_store.len() {
            return Err(Error::Dataset(format!(
                "manifest has {} captions but text store has {} rows",
                records.len(),
                text_store.len()
            )));
        }
        if let Some(expected) = captions_per_image {
            let mut counts: BTreeMap<&str, usize> = image_store
                .ids()
                .iter()
                .map(|id| (id.as_str(), 0))
                .collect();
            for r in records {
                if let Some(c) = counts.get_mut(r.image_id.as_str()) {
                    *c += 1;
                }
            }
            let ragged: Vec<_> = counts.iter().filter(|(_, &c)| c != expected).collect();
            if let Some((id, count)) = ragged.first() {
                return Err(Error::Dataset(format!(
                    "{} image(s) without exactly {expected} captions, first {id:?} has {count}",
                    ragged.len()
                )));
            }
        }
        let pairs = records
            .iter()
            .zip(text_store.ids())
            .map(|(r, text_id)| Pair {
                text_id: text_id.clone(),
                image_id: r.image_id.clone(),
                split: r.split,
            })
            .collect();
        PairedDataset::new(image_store, text_store, pairs)
    }

    pub fn image_store(&self) -> &EmbeddingStore {
        &self.image_store
    }

    pub fn text_store(&self) -> &EmbeddingStore {
        &self.text_store
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Indices into [`pairs`](Self::pairs) belonging to `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&i| self.pairs[i].split == split)
            .collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.pairs.iter().filter(|p| p.split == split).count()
    }

    /// `(image features, text features)` for a batch; row `i` of each belongs to
    /// the batch's `i`-th pair.
    pub fn batch_features(&self, batch: &Batch) -> (Matrix, Matrix) {
        let img_rows: Vec<usize> = batch.pairs.iter().map(|&p| self.rows[p].1).collect();
        let txt_rows: Vec<usize> = batch.pairs.iter().map(|&p| self.rows[p].0).collect();
        (
            self.image_store.vectors().select_rows(&img_rows),
            self.text_store.vectors().select_rows(&txt_rows),
        )
    }
}

/// Pair indices making up one minibatch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Shuffles the pairs of `split` with [`XorShift64Star`] seeded by `seed` and
/// cuts them into batches of `batch_size`.
pub fn make_batches(
    ds: &PairedDataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    drop_last: bool,
) -> Result<Vec<Batch>> {
    if batch_size < 1 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let mut order = ds.split_indices(split);
    XorShift64Star::new(seed).shuffle(&mut order);
    let batches = order
        .chunks(batch_size)
        .filter(|c| !drop_last || c.len() == batch_size)
        .map(|c| Batch { pairs: c.to_vec() })
        .collect();
    Ok(batches)
}

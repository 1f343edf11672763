//! Embedding files, caption manifests, paired datasets and batching.
//!
//! Encoder outputs enter the system as precomputed feature files; nothing in
//! this crate decodes images or tokenizes text. Captions travel along as
//! metadata only.

mod dataset;
mod manifest;
mod store;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use dataset::{make_batches, Batch, Pair, PairedDataset};
pub use manifest::{load_manifest, parse_manifest, save_manifest, CaptionRecord};
pub use store::{load_embeddings, save_embeddings, EmbeddingStore, StoreKind, EMBEDDING_MAGIC};
pub use synth::{
    augment_training_images, jitter_augment, synth_dataset, synth_manifest, SynthConfig,
};

pub(crate) use store::{decode_store_prefix, ByteReader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

//! Contrastive dual-encoder image–text retrieval over precomputed embeddings.
//!
//! Two affine projection heads map image and text features into a shared
//! space. They are trained with a cross-entropy plus squared-hinge margin loss,
//! served through a brute-force cosine index, and scored with MAP/MAR/MAF1 and
//! Top-k hit rates.

pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod retrieval;
pub mod rng;
pub mod trainer;

pub use error::{Error, FileKind, Result};
pub use model::{init_model, load_checkpoint, save_checkpoint, DualEncoderModel, ProjectionHead};
pub use numerics::Matrix;
pub use retrieval::{build_index, load_index, save_index, RankedResult, RetrievalIndex};
pub use trainer::{train, TrainConfig, TrainReport};

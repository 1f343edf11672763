//! Linear projection heads and the dual-encoder model that owns them.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "AZCK" | version u32 = 1 | img_dim u32 | txt_dim u32 | shared_dim u32
//! image w  f64 × img_dim·shared_dim   (row-major, d_in × d_out)
//! image b  f64 × shared_dim
//! text w   f64 × txt_dim·shared_dim
//! text b   f64 × shared_dim
//! config   u32 length + UTF-8 JSON {"dims":[img,txt,shared],"meta":{…}}
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::data::ByteReader;
use crate::error::{Error, FileKind, Result};
use crate::numerics::{matmul, Matrix};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AZCK";
const CHECKPOINT_VERSION: u32 = 1;

/// `x ↦ x·w + b`, with `w` stored as `d_in × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        if w.cols() != b.len() {
            return Err(Error::ShapeMismatch {
                op: "ProjectionHead::new",
                left: w.shape(),
                right: (1, b.len()),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bias".into()));
        }
        Ok(ProjectionHead { w, b })
    }

    /// Glorot-uniform weights in `±√(6/(d_in+d_out))`, zero bias.
    pub fn glorot(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        ProjectionHead {
            w: Matrix::from_vec(d_in, d_out, data).expect("finite init"),
            b: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.rows()
    }

    pub fn d_out(&self) -> usize {
        self.w.cols()
    }

    /// Raw (unnormalized) projection of each row of `x`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_in() {
            return Err(Error::ShapeMismatch {
                op: "project",
                left: x.shape(),
                right: self.w.shape(),
            });
        }
        let mut out = matmul(x, &self.w)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.b) {
                *o += b;
            }
        }
        Ok(out)
    }
}

pub fn project(head: &ProjectionHead, x: &Matrix) -> Result<Matrix> {
    head.project(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderModel {
    pub image_head: ProjectionHead,
    pub text_head: ProjectionHead,
    /// Free-form configuration echo (encoder names, loss and training config).
    /// Recorded in checkpoints, never interpreted.
    pub meta: Value,
}

impl DualEncoderModel {
    pub fn new(image_head: ProjectionHead, text_head: ProjectionHead, meta: Value) -> Result<Self> {
        if image_head.d_out() != text_head.d_out() {
            return Err(Error::InvalidArgument(format!(
                "head output dims differ: image {} vs text {}",
                image_head.d_out(),
                text_head.d_out()
            )));
        }
        Ok(DualEncoderModel {
            image_head,
            text_head,
            meta,
        })
    }

    pub fn img_dim(&self) -> usize {
        self.image_head.d_in()
    }

    pub fn txt_dim(&self) -> usize {
        self.text_head.d_in()
    }

    pub fn shared_dim(&self) -> usize {
        self.image_head.d_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    /// Parameter blocks in checkpoint order: image w, image b, text w, text b.
    pub fn param_blocks(&self) -> [&[f64]; 4] {
        [
            self.image_head.w.data(),
            &self.image_head.b,
            self.text_head.w.data(),
            &self.text_head.b,
        ]
    }

    pub fn param_blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.image_head.w.data_mut(),
            &mut self.image_head.b,
            self.text_head.w.data_mut(),
            &mut self.text_head.b,
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dims = [self.img_dim(), self.txt_dim(), self.shared_dim()];
        let mut out = Vec::with_capacity(20 + 8 * self.parameter_count());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for d in dims {
            let d = u32::try_from(d)
                .map_err(|_| Error::InvalidArgument(format!("dim {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for block in self.param_blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let config = serde_json::to_vec(&json!({ "dims": dims, "meta": self.meta }))?;
        let len = u32::try_from(config.len())
            .map_err(|_| Error::InvalidArgument("config echo exceeds u32 length".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&config);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, FileKind::Checkpoint);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: FileKind::Checkpoint,
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let img_dim = r.u32()? as usize;
        let txt_dim = r.u32()? as usize;
        let shared = r.u32()? as usize;
        if img_dim == 0 || txt_dim == 0 || shared == 0 {
            return Err(Error::CheckpointShape(format!(
                "header declares a zero dim ({img_dim}, {txt_dim}, {shared})"
            )));
        }
        let mut read_head = |d_in: usize| -> Result<ProjectionHead> {
            let w = (0..d_in * shared)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            let b = (0..shared).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let w = Matrix::from_vec(d_in, shared, w).map_err(|e| Error::Malformed {
                kind: FileKind::Checkpoint,
                detail: e.to_string(),
            })?;
            ProjectionHead::new(w, b)
        };
        let image_head = read_head(img_dim)?;
        let text_head = read_head(txt_dim)?;
        let len = r.u32()? as usize;
        let config: Value = serde_json::from_slice(r.take(len)?).map_err(|e| Error::Malformed {
            kind: FileKind::Checkpoint,
            detail: format!("config echo: {e}"),
        })?;
        if r.remaining() != 0 {
            return Err(Error::Malformed {
                kind: FileKind::Checkpoint,
                detail: format!("{} trailing bytes", r.remaining()),
            });
        }
        let declared: Option<Vec<usize>> = config
            .get("dims")
            .and_then(|d| serde_json::from_value(d.clone()).ok());
        if declared.as_deref() != Some(&[img_dim, txt_dim, shared][..]) {
            return Err(Error::CheckpointShape(format!(
                "config echo dims {:?} disagree with header ({img_dim}, {txt_dim}, {shared})",
                config.get("dims")
            )));
        }
        let meta = config.get("meta").cloned().unwrap_or(Value::Null);
        DualEncoderModel::new(image_head, text_head, meta)
    }

    /// Hex SHA-256 of the checkpoint bytes; binds retrieval indexes to a model.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

pub fn init_model(
    img_dim: usize,
    txt_dim: usize,
    shared_dim: usize,
    seed: u64,
) -> Result<DualEncoderModel> {
    if img_dim == 0 || txt_dim == 0 || shared_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "model dims must be > 0, got ({img_dim}, {txt_dim}, {shared_dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image_head = ProjectionHead::glorot(img_dim, shared_dim, &mut rng);
    let text_head = ProjectionHead::glorot(txt_dim, shared_dim, &mut rng);
    DualEncoderModel::new(image_head, text_head, json!({}))
}

pub fn save_checkpoint(model: &DualEncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = model.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DualEncoderModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    DualEncoderModel::from_bytes(&bytes)
}

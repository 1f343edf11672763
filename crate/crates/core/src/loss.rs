//! Margin-augmented contrastive loss over a batch similarity matrix.
//!
//! For logits `s` (`N×N`, row `i` is image `i`, column `j` is text `j`, the
//! diagonal holds matched pairs):
//!
//! ```text
//! ce_i     = −log softmax(s_i·)[i]
//! M_i      = min_{j≠i} s_ij                         (lowest column wins ties)
//! margin_i = λ · max(0, m − M_i)²
//! total    = Σ_i ce_i + Σ_i margin_i
//! ```
//!
//! The cross-entropy enters with a positive sign and the margin term is added
//! as a penalty, so `total ≥ 0`. With `symmetric` the cross-entropy is the
//! mean of the row-wise (image→text) and column-wise (text→image) sums.
//!
//! [`MarginMode::HardNegative`] replaces the margin term with
//! `λ · max(0, max_{j≠i} s_ij − s_ii + m)²`, a conventional hardest-negative
//! hinge. It is off by default.
//!
//! At the hinge kink (`m − M_i = 0`) the subgradient is taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DualEncoderModel;
use crate::numerics::{l2_normalize_rows, log_sum_exp, matmul, matmul_bt, softmax_into, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginMode {
    #[default]
    Literal,
    HardNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda: f64,
    pub margin: f64,
    pub temperature: f64,
    pub margin_mode: MarginMode,
    pub symmetric: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            margin: 0.2,
            temperature: 1.0,
            margin_mode: MarginMode::Literal,
            symmetric: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !self.margin.is_finite() {
            return Err(Error::InvalidArgument("margin must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub ce_term: f64,
    pub margin_term: f64,
    /// ∂total/∂s_ij.
    pub grad_sim: Matrix,
    /// Per row, the off-diagonal logit the margin term acts on: the row
    /// minimum in literal mode, the row maximum in hard-negative mode.
    /// `None` when the batch has a single pair.
    pub per_row_min_offdiag: Vec<Option<f64>>,
}

/// Gradients of the loss with respect to each parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub image_w: Matrix,
    pub image_b: Vec<f64>,
    pub text_w: Matrix,
    pub text_b: Vec<f64>,
}

impl Gradients {
    /// Same block order as [`DualEncoderModel::param_blocks`].
    pub fn blocks(&self) -> [&[f64]; 4] {
        [
            self.image_w.data(),
            &self.image_b,
            self.text_w.data(),
            &self.text_b,
        ]
    }
}

/// `s_ij = cos(img_i, txt_j) / τ`.
pub fn similarity_logits(img_proj: &Matrix, txt_proj: &Matrix, temperature: f64) -> Result<Matrix> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if img_proj.rows() != txt_proj.rows() {
        return Err(Error::ShapeMismatch {
            op: "similarity_logits",
            left: img_proj.shape(),
            right: txt_proj.shape(),
        });
    }
    let cos = crate::numerics::cosine_similarity_matrix(img_proj, txt_proj)?;
    Ok(cos.scale(1.0 / temperature))
}

fn argmin_offdiag(row: &[f64], i: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if j != i && best.is_none_or(|b| v < row[b]) {
            best = Some(j);
        }
    }
    best
}

fn argmax_offdiag(row: &[f64], i: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if j != i && best.is_none_or(|b| v > row[b]) {
            best = Some(j);
        }
    }
    best
}

pub fn contrastive_loss(s: &Matrix, cfg: &LossConfig) -> Result<LossOutput> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left: s.shape(),
            right: (n, n),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "contrastive_loss needs at least one pair".into(),
        ));
    }
    cfg.validate()?;

    let mut grad = Matrix::zeros(n, n);
    let mut probs = vec![0.0; n];

    let mut row_ce = 0.0;
    for i in 0..n {
        let row = s.row(i);
        row_ce += log_sum_exp(row) - row[i];
        softmax_into(row, &mut probs);
        probs[i] -= 1.0;
        grad.row_mut(i).copy_from_slice(&probs);
    }

    let ce_term = if cfg.symmetric {
        let st = s.transpose();
        let mut col_ce = 0.0;
        for j in 0..n {
            let col = st.row(j);
            col_ce += log_sum_exp(col) - col[j];
            softmax_into(col, &mut probs);
            probs[j] -= 1.0;
            for (i, p) in probs.iter().enumerate() {
                let g = grad.get(i, j);
                grad.set(i, j, 0.5 * (g + p));
            }
        }
        0.5 * (row_ce + col_ce)
    } else {
        row_ce
    };

    let mut margin_term = 0.0;
    let mut per_row = Vec::with_capacity(n);
    for i in 0..n {
        let row = s.row(i);
        match cfg.margin_mode {
            MarginMode::Literal => {
                let Some(j) = argmin_offdiag(row, i) else {
                    per_row.push(None);
                    continue;
                };
                per_row.push(Some(row[j]));
                let h = cfg.margin - row[j];
                if h > 0.0 {
                    margin_term += cfg.lambda * h * h;
                    let g = grad.get(i, j);
                    grad.set(i, j, g - 2.0 * cfg.lambda * h);
                }
            }
            MarginMode::HardNegative => {
                let Some(j) = argmax_offdiag(row, i) else {
                    per_row.push(None);
                    continue;
                };
                per_row.push(Some(row[j]));
                let h = row[j] - row[i] + cfg.margin;
                if h > 0.0 {
                    margin_term += cfg.lambda * h * h;
                    let gj = grad.get(i, j);
                    grad.set(i, j, gj + 2.0 * cfg.lambda * h);
                    let gi = grad.get(i, i);
                    grad.set(i, i, gi - 2.0 * cfg.lambda * h);
                }
            }
        }
    }

    Ok(LossOutput {
        total: ce_term + margin_term,
        ce_term,
        margin_term,
        grad_sim: grad,
        per_row_min_offdiag: per_row,
    })
}

/// Projected, normalized batch with everything the backward pass reuses.
struct Forward {
    img_unit: Matrix,
    txt_unit: Matrix,
    img_norms: Vec<f64>,
    txt_norms: Vec<f64>,
    out: LossOutput,
}

fn forward(
    img_feat: &Matrix,
    txt_feat: &Matrix,
    model: &DualEncoderModel,
    cfg: &LossConfig,
) -> Result<Forward> {
    if img_feat.rows() != txt_feat.rows() {
        return Err(Error::ShapeMismatch {
            op: "loss (batch sizes)",
            left: img_feat.shape(),
            right: txt_feat.shape(),
        });
    }
    cfg.validate()?;
    let p = model.image_head.project(img_feat)?;
    let q = model.text_head.project(txt_feat)?;
    let pn = l2_normalize_rows(&p).require_nondegenerate("loss (image projection)")?;
    let qn = l2_normalize_rows(&q).require_nondegenerate("loss (text projection)")?;
    let s = matmul_bt(&pn.matrix, &qn.matrix)?.scale(1.0 / cfg.temperature);
    let out = contrastive_loss(&s, cfg)?;
    Ok(Forward {
        img_unit: pn.matrix,
        txt_unit: qn.matrix,
        img_norms: pn.norms,
        txt_norms: qn.norms,
        out,
    })
}

/// Loss of one batch without gradients.
pub fn batch_loss(
    img_feat: &Matrix,
    txt_feat: &Matrix,
    model: &DualEncoderModel,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    forward(img_feat, txt_feat, model, cfg).map(|f| f.out)
}

/// Pulls a gradient w.r.t. unit rows `u = x/‖x‖` back to the raw rows `x`:
/// `∂x = (∂u − u (u·∂u)) / ‖x‖`.
fn normalize_backward(unit: &Matrix, norms: &[f64], grad_unit: &Matrix) -> Matrix {
    let mut out = grad_unit.clone();
    for (r, &norm) in norms.iter().enumerate() {
        let u = unit.row(r);
        let proj = crate::numerics::dot(u, grad_unit.row(r));
        for (o, &uk) in out.row_mut(r).iter_mut().zip(u) {
            *o = (*o - uk * proj) / norm;
        }
    }
    out
}

fn head_gradients(features: &Matrix, grad_proj: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let gw = matmul(&features.transpose(), grad_proj)?;
    let mut gb = vec![0.0; grad_proj.cols()];
    for row in grad_proj.iter_rows() {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((gw, gb))
}

/// Loss and exact gradients for every parameter block, chained through
/// projection → row normalization → cosine/τ → loss.
pub fn loss_backward(
    img_feat: &Matrix,
    txt_feat: &Matrix,
    model: &DualEncoderModel,
    cfg: &LossConfig,
) -> Result<(LossOutput, Gradients)> {
    let f = forward(img_feat, txt_feat, model, cfg)?;
    let inv_t = 1.0 / cfg.temperature;
    let g = &f.out.grad_sim;
    // s = Û V̂ᵀ / τ  ⇒  ∂Û = G V̂ / τ,  ∂V̂ = Gᵀ Û / τ
    let grad_img_unit = matmul(g, &f.txt_unit)?.scale(inv_t);
    let grad_txt_unit = matmul(&g.transpose(), &f.img_unit)?.scale(inv_t);
    let grad_p = normalize_backward(&f.img_unit, &f.img_norms, &grad_img_unit);
    let grad_q = normalize_backward(&f.txt_unit, &f.txt_norms, &grad_txt_unit);
    let (image_w, image_b) = head_gradients(img_feat, &grad_p)?;
    let (text_w, text_b) = head_gradients(txt_feat, &grad_q)?;
    Ok((
        f.out,
        Gradients {
            image_w,
            image_b,
            text_w,
            text_b,
        },
    ))
}

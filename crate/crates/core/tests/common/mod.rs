//! Brute-force reference evaluators shared by the integration tests. Nothing
//! here calls into the library's numeric code.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;

pub fn uniform_rows(rng: &mut impl Rng, n: usize, d: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

/// Cross-entropy, margin and total for a square logit matrix, term by term.
pub struct OracleLoss {
    pub ce: f64,
    pub margin: f64,
    pub total: f64,
}

fn neg_log_softmax(values: &[f64], target: usize) -> f64 {
    let denom: f64 = values.iter().map(|v| v.exp()).sum();
    -(values[target].exp() / denom).ln()
}

pub fn oracle_loss(s: &[Vec<f64>], lambda: f64, margin: f64, symmetric: bool) -> OracleLoss {
    let n = s.len();
    let mut row_ce = 0.0;
    for i in 0..n {
        row_ce += neg_log_softmax(&s[i], i);
    }
    let ce = if symmetric {
        let mut col_ce = 0.0;
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| s[i][j]).collect();
            col_ce += neg_log_softmax(&col, j);
        }
        (row_ce + col_ce) / 2.0
    } else {
        row_ce
    };
    let mut pen = 0.0;
    for i in 0..n {
        let mut min_off = f64::INFINITY;
        for j in 0..n {
            if j != i && s[i][j] < min_off {
                min_off = s[i][j];
            }
        }
        if min_off.is_finite() {
            let gap = margin - min_off;
            if gap > 0.0 {
                pen += lambda * gap * gap;
            }
        }
    }
    OracleLoss {
        ce,
        margin: pen,
        total: ce + pen,
    }
}

/// `x·w + b` with `w` given as `d_in` rows of `d_out`.
pub fn affine(x: &[f64], w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (xi, wrow) in x.iter().zip(w) {
        for (o, wij) in out.iter_mut().zip(wrow) {
            *o += xi * wij;
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa.sqrt() * bb.sqrt())
}

/// Every index position ordered by score descending, ties by position.
pub fn full_sort(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

pub struct OracleQuery {
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    pub top: [f64; 3],
}

/// Precision and recall evaluated at every cutoff, kept where the item at the
/// cutoff is relevant.
pub fn oracle_query(ranked: &[String], relevant: &[String], correct: &str) -> OracleQuery {
    let m = relevant.len() as f64;
    let is_rel = |id: &String| relevant.contains(id);
    let mut ap = 0.0;
    let mut ar = 0.0;
    for k in 1..=ranked.len() {
        if !is_rel(&ranked[k - 1]) {
            continue;
        }
        let hits = ranked[..k].iter().filter(|id| is_rel(id)).count() as f64;
        ap += hits / k as f64;
        ar += hits / m;
    }
    ap /= m;
    ar /= m;
    let f1 = if ap + ar == 0.0 {
        0.0
    } else {
        2.0 * (ap * ar) / (ap + ar)
    };
    let top = [1usize, 5, 10].map(|k| {
        if ranked.iter().take(k).any(|id| id == correct) {
            1.0
        } else {
            0.0
        }
    });
    OracleQuery { ap, ar, f1, top }
}

pub fn relative_close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff < abs_floor || diff / analytic.abs().max(numeric.abs()) < rel
}

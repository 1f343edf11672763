//! Retrieval evaluation: per-query average precision and recall sampled at each
//! relevant retrieval, their harmonic mean, and Top-k hit rates, aggregated as
//! unweighted means over queries (MAP, MAR, MAF1, Top-1/5/10).
//!
//! For a ranking and relevant set of size `m`, let `r_1 < r_2 < …` be the
//! 1-based ranks at which relevant images appear and `c_k = k` the number of
//! relevant images within the first `r_k` results:
//!
//! ```text
//! AP = (1/m) Σ_k c_k / r_k
//! AR = (1/m) Σ_k c_k / m
//! F1 = 2·AP·AR / (AP + AR)      (0 when both are 0)
//! ```
//!
//! Relevant images missing from a truncated ranking contribute 0.

mod experiment;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{PairedDataset, Split};
use crate::error::{Error, Result};
use crate::retrieval::RankedResult;

pub use experiment::{evaluate_on_dataset, render_table, split_queries, TableRow};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryJudgment {
    pub query_id: String,
    pub relevant_ids: BTreeSet<String>,
    pub correct_id: String,
}

impl QueryJudgment {
    pub fn new(
        query_id: impl Into<String>,
        relevant_ids: BTreeSet<String>,
        correct_id: impl Into<String>,
    ) -> Result<Self> {
        let j = QueryJudgment {
            query_id: query_id.into(),
            relevant_ids,
            correct_id: correct_id.into(),
        };
        j.validate()?;
        Ok(j)
    }

    /// A query whose only relevant image is its paired one.
    pub fn singleton(query_id: impl Into<String>, image_id: impl Into<String>) -> Self {
        let image_id = image_id.into();
        QueryJudgment {
            query_id: query_id.into(),
            relevant_ids: BTreeSet::from([image_id.clone()]),
            correct_id: image_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.relevant_ids.is_empty() {
            return Err(Error::Metrics(format!(
                "query {:?} has no relevant ids",
                self.query_id
            )));
        }
        if !self.relevant_ids.contains(&self.correct_id) {
            return Err(Error::Metrics(format!(
                "query {:?}: correct id {:?} is not among its relevant ids",
                self.query_id, self.correct_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub ap: f64,
    pub ar: f64,
    pub f1: f64,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map: f64,
    pub mar: f64,
    pub maf1: f64,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub per_query: Vec<QueryMetrics>,
}

/// 1-based ranks of relevant hits paired with the running relevant count.
fn relevant_cutoffs<S: AsRef<str>>(
    ranked: &[S],
    relevant: &BTreeSet<String>,
) -> Result<Vec<(usize, usize)>> {
    if relevant.is_empty() {
        return Err(Error::Metrics("relevant set is empty".into()));
    }
    let mut seen = HashSet::with_capacity(ranked.len());
    let mut found = 0;
    let mut cutoffs = Vec::new();
    for (pos, id) in ranked.iter().enumerate() {
        let id = id.as_ref();
        if !seen.insert(id) {
            return Err(Error::Metrics(format!("duplicate id {id:?} in ranking")));
        }
        if relevant.contains(id) {
            found += 1;
            cutoffs.push((pos + 1, found));
        }
    }
    Ok(cutoffs)
}

pub fn average_precision<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    let m = relevant.len() as f64;
    let mut sum = 0.0;
    for (rank, count) in relevant_cutoffs(ranked, relevant)? {
        sum += count as f64 / rank as f64;
    }
    Ok(sum / m)
}

pub fn average_recall<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    let m = relevant.len() as f64;
    let mut sum = 0.0;
    for (_, count) in relevant_cutoffs(ranked, relevant)? {
        sum += count as f64 / m;
    }
    Ok(sum / m)
}

pub fn f1_per_query(ap: f64, ar: f64) -> f64 {
    if ap + ar == 0.0 {
        0.0
    } else {
        2.0 * (ap * ar) / (ap + ar)
    }
}

/// 1 if `correct_id` is among the first `min(k, len)` entries, else 0.
pub fn topk_hit<S: AsRef<str>>(ranked: &[S], correct_id: &str, k: usize) -> u8 {
    u8::from(ranked.iter().take(k).any(|id| id.as_ref() == correct_id))
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    sum / n as f64
}

/// Scores each result against the judgment with the same `query_id`.
pub fn evaluate_run(
    results: &[RankedResult],
    judgments: &[QueryJudgment],
) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::Metrics("no queries to evaluate".into()));
    }
    let mut by_id: HashMap<&str, &QueryJudgment> = HashMap::with_capacity(judgments.len());
    for j in judgments {
        j.validate()?;
        if by_id.insert(j.query_id.as_str(), j).is_some() {
            return Err(Error::Metrics(format!(
                "duplicate judgment for query {:?}",
                j.query_id
            )));
        }
    }
    if judgments.len() != results.len() {
        return Err(Error::Metrics(format!(
            "{} results but {} judgments",
            results.len(),
            judgments.len()
        )));
    }
    let mut per_query = Vec::with_capacity(results.len());
    let mut seen = HashSet::with_capacity(results.len());
    for r in results {
        let j = by_id
            .get(r.query_id.as_str())
            .ok_or_else(|| Error::Metrics(format!("no judgment for query {:?}", r.query_id)))?;
        if !seen.insert(r.query_id.as_str()) {
            return Err(Error::Metrics(format!(
                "query {:?} appears twice in results",
                r.query_id
            )));
        }
        let ranked = r.ranked_ids();
        let ap = average_precision(&ranked, &j.relevant_ids)?;
        let ar = average_recall(&ranked, &j.relevant_ids)?;
        per_query.push(QueryMetrics {
            query_id: r.query_id.clone(),
            ap,
            ar,
            f1: f1_per_query(ap, ar),
            top1: f64::from(topk_hit(&ranked, &j.correct_id, 1)),
            top5: f64::from(topk_hit(&ranked, &j.correct_id, 5)),
            top10: f64::from(topk_hit(&ranked, &j.correct_id, 10)),
        });
    }
    let q = per_query.len();
    Ok(MetricsReport {
        map: mean(per_query.iter().map(|m| m.ap), q),
        mar: mean(per_query.iter().map(|m| m.ar), q),
        maf1: mean(per_query.iter().map(|m| m.f1), q),
        top1: mean(per_query.iter().map(|m| m.top1), q),
        top5: mean(per_query.iter().map(|m| m.top5), q),
        top10: mean(per_query.iter().map(|m| m.top10), q),
        per_query,
    })
}

/// One singleton judgment per caption of `split`, in dataset order.
pub fn judgments_for_split(ds: &PairedDataset, split: Split) -> Vec<QueryJudgment> {
    ds.pairs()
        .iter()
        .filter(|p| p.split == split)
        .map(|p| QueryJudgment::singleton(p.text_id.clone(), p.image_id.clone()))
        .collect()
}

pub fn save_judgments(judgments: &[QueryJudgment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for j in judgments {
        serde_json::to_writer(&mut out, j)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<QueryJudgment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let j: QueryJudgment = serde_json::from_str(line)
            .map_err(|e| Error::Metrics(format!("{}:{}: {e}", path.display(), i + 1)))?;
        j.validate()?;
        out.push(j);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Hit;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn result(qid: &str, ids: &[&str]) -> RankedResult {
        RankedResult {
            query_id: qid.into(),
            k: ids.len(),
            hits: ids
                .iter()
                .enumerate()
                .map(|(i, id)| Hit {
                    id: id.to_string(),
                    score: 1.0 - i as f64 * 0.1,
                })
                .collect(),
        }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&["a", "b", "c"], &set(&["a"])).unwrap(),
            1.0
        );
        let ap = average_precision(&["a", "b", "c"], &set(&["a", "c"])).unwrap();
        assert!((ap - 0.83333).abs() < 1e-5);
        assert_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0);
        assert_eq!(average_precision(&["b", "c"], &set(&["a"])).unwrap(), 0.0);
        assert!(average_precision(&["a", "a"], &set(&["a"])).is_err());
        assert!(average_precision(&["a"], &set(&[])).is_err());
    }

    #[test]
    fn ar_examples() {
        assert_eq!(
            average_recall(&["a", "b", "c"], &set(&["a", "c"])).unwrap(),
            0.75
        );
        assert_eq!(average_recall(&["a"], &set(&["a"])).unwrap(), 1.0);
        assert_eq!(average_recall(&["x", "y"], &set(&["a", "b"])).unwrap(), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_per_query(1.0, 1.0), 1.0);
        assert!((f1_per_query(0.83333, 0.75) - 0.78947).abs() < 1e-5);
        assert!((f1_per_query(5.0 / 6.0, 0.75) - 0.78947).abs() < 1e-5);
        assert_eq!(f1_per_query(0.0, 0.0), 0.0);
    }

    #[test]
    fn topk_examples() {
        let ranked = ["a", "b", "c", "d", "e", "f"];
        assert_eq!(topk_hit(&ranked, "a", 1), 1);
        assert_eq!(topk_hit(&ranked, "f", 5), 0);
        assert_eq!(topk_hit(&ranked, "e", 5), 1);
        assert_eq!(topk_hit(&ranked[..2], "a", 10), 1);
    }

    #[test]
    fn run_aggregates() {
        let results = vec![
            result("q1", &["a", "b", "c"]),
            result("q2", &["a", "b", "c"]),
        ];
        let judgments = vec![
            QueryJudgment::new("q2", set(&["a", "c"]), "c").unwrap(),
            QueryJudgment::singleton("q1", "a"),
        ];
        let rep = evaluate_run(&results, &judgments).unwrap();
        assert!((rep.map - 0.91667).abs() < 1e-5);
        assert_eq!(rep.per_query[0].query_id, "q1");
        assert_eq!(rep.top1, 0.5);
        assert_eq!(rep.top5, 1.0);

        let mut reversed = judgments.clone();
        reversed.reverse();
        assert_eq!(evaluate_run(&results, &reversed).unwrap(), rep);
    }

    #[test]
    fn perfect_run() {
        let results = vec![result("q1", &["a", "b"]), result("q2", &["b", "a"])];
        let judgments = vec![
            QueryJudgment::singleton("q1", "a"),
            QueryJudgment::singleton("q2", "b"),
        ];
        let rep = evaluate_run(&results, &judgments).unwrap();
        for v in [rep.map, rep.mar, rep.maf1, rep.top1, rep.top5, rep.top10] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn run_errors() {
        let results = vec![result("q1", &["a"])];
        assert!(evaluate_run(&results, &[QueryJudgment::singleton("q9", "a")]).is_err());
        let dup = vec![
            QueryJudgment::singleton("q1", "a"),
            QueryJudgment::singleton("q1", "a"),
        ];
        assert!(evaluate_run(&results, &dup).is_err());
        assert!(evaluate_run(&[], &[]).is_err());
        assert!(QueryJudgment::new("q", set(&["a"]), "b").is_err());
    }

    #[test]
    fn judgments_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let js = vec![
            QueryJudgment::new("q", set(&["a", "b"]), "b").unwrap(),
            QueryJudgment::singleton("r", "c"),
        ];
        save_judgments(&js, &p).unwrap();
        assert_eq!(load_judgments(&p).unwrap(), js);
    }
}

//! In-domain / out-of-domain evaluation: one model scored against several
//! datasets and laid out as a fixed-width table.

use std::fmt::Write as _;

use super::{evaluate_run, judgments_for_split, MetricsReport};
use crate::data::{EmbeddingStore, PairedDataset, Split};
use crate::error::Result;
use crate::model::DualEncoderModel;
use crate::retrieval::build_index;

/// Text rows of the captions in `split`, in dataset order.
pub fn split_queries(ds: &PairedDataset, split: Split) -> Result<EmbeddingStore> {
    let rows: Vec<usize> = ds
        .pairs()
        .iter()
        .filter(|p| p.split == split)
        .map(|p| {
            ds.text_store()
                .position(&p.text_id)
                .expect("validated pair")
        })
        .collect();
    ds.text_store().subset(&rows)
}

/// Indexes every image of `ds`, ranks the full index for each caption of
/// `split`, and scores the run with singleton relevance.
pub fn evaluate_on_dataset(
    model: &DualEncoderModel,
    ds: &PairedDataset,
    split: Split,
) -> Result<MetricsReport> {
    let index = build_index(model, ds.image_store())?;
    let queries = split_queries(ds, split)?;
    let results = index.batch_query(model, &queries, index.len().max(1))?;
    evaluate_run(&results, &judgments_for_split(ds, split))
}

#[derive(Debug, Clone)]
pub struct TableRow<'a> {
    pub model: &'a str,
    pub dataset: &'a str,
    pub report: &'a MetricsReport,
}

pub fn render_table(rows: &[TableRow<'_>]) -> String {
    let model_w = rows
        .iter()
        .map(|r| r.model.len())
        .chain([5])
        .max()
        .unwrap_or(5);
    let data_w = rows
        .iter()
        .map(|r| r.dataset.len())
        .chain([7])
        .max()
        .unwrap_or(7);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<model_w$}  {:<data_w$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
        "Model", "Dataset", "MAP", "MAR", "MAF1", "Top1", "Top5", "Top10"
    );
    for r in rows {
        let m = r.report;
        let _ = writeln!(
            out,
            "{:<model_w$}  {:<data_w$}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}",
            r.model, r.dataset, m.map, m.mar, m.maf1, m.top1, m.top5, m.top10
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let rep = MetricsReport {
            map: 0.8,
            mar: 0.7,
            maf1: 0.75,
            top1: 0.6,
            top5: 0.9,
            top10: 1.0,
            per_query: vec![],
        };
        let t = render_table(&[
            TableRow {
                model: "heads",
                dataset: "in-domain",
                report: &rep,
            },
            TableRow {
                model: "heads",
                dataset: "out-domain",
                report: &rep,
            },
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[1].contains("0.8000"));
        assert_eq!(lines[0].len(), lines[1].len());
        assert_eq!(lines[1].len(), lines[2].len());
    }
}

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Split;
use crate::error::{Error, Result};

/// One caption line of a JSON-lines manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
    pub lang: String,
    pub split: Split,
}

/// Parses manifest text. Blank lines are skipped but still counted for line
/// numbers in errors.
pub fn parse_manifest(text: &str) -> Result<Vec<CaptionRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no,
            detail: e.to_string(),
        })?;
        if rec.image_id.is_empty() {
            return Err(Error::Manifest {
                line: line_no,
                detail: "empty image_id".into(),
            });
        }
        if !seen.insert((rec.image_id.clone(), rec.caption.clone())) {
            return Err(Error::Manifest {
                line: line_no,
                detail: format!("duplicate caption for image {:?}", rec.image_id),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn save_manifest(records: &[CaptionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sample_line() {
        let line = r#"{"image_id":"203564","caption":"Ön teker kimi saat olan velosiped nüsxesi.","lang":"az","split":"train"}"#;
        let recs = parse_manifest(line).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].image_id, "203564");
        assert_eq!(
            recs[0].caption,
            "Ön teker kimi saat olan velosiped nüsxesi."
        );
        assert_eq!(recs[0].lang, "az");
        assert_eq!(recs[0].split, Split::Train);
    }

    #[test]
    fn empty_input_gives_no_records() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn missing_split_reports_line() {
        let text = concat!(
            r#"{"image_id":"1","caption":"a","lang":"az","split":"val"}"#,
            "\n\n",
            r#"{"image_id":"2","caption":"b","lang":"az"}"#,
            "\n"
        );
        match parse_manifest(text).unwrap_err() {
            Error::Manifest { line, detail } => {
                assert_eq!(line, 3);
                assert!(detail.contains("split"), "{detail}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_bad_split() {
        let dup = concat!(
            r#"{"image_id":"1","caption":"a","lang":"az","split":"train"}"#,
            "\n",
            r#"{"image_id":"1","caption":"a","lang":"en","split":"test"}"#
        );
        assert!(matches!(
            parse_manifest(dup),
            Err(Error::Manifest { line: 2, .. })
        ));
        let bad = r#"{"image_id":"1","caption":"a","lang":"az","split":"dev"}"#;
        assert!(matches!(
            parse_manifest(bad),
            Err(Error::Manifest { line: 1, .. })
        ));
        let empty_id = r#"{"image_id":"","caption":"a","lang":"az","split":"train"}"#;
        assert!(matches!(
            parse_manifest(empty_id),
            Err(Error::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let recs = vec![
            CaptionRecord {
                image_id: "7".into(),
                caption: "Qız küçədə yemək yeyir".into(),
                lang: "az".into(),
                split: Split::Test,
            },
            CaptionRecord {
                image_id: "8".into(),
                caption: "x".into(),
                lang: "az".into(),
                split: Split::Train,
            },
        ];
        save_manifest(&recs, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), recs);
    }
}

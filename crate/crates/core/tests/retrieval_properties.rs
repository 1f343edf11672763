use azclip::data::{EmbeddingStore, StoreKind};
use azclip::retrieval::{build_index, RetrievalIndex};
use azclip::{init_model, Error, Matrix};
use proptest::prelude::*;

fn store(rows: &[Vec<f64>], kind: StoreKind, prefix: &str) -> EmbeddingStore {
    let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
    let d = rows.first().map_or(3, Vec::len);
    let data = rows.concat();
    EmbeddingStore::new(ids, Matrix::from_vec(rows.len(), d, data).unwrap(), kind).unwrap()
}

fn rows(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

proptest! {
    #[test]
    fn positive_query_scaling_keeps_ranking(images in rows(1..=30, 6), q in prop::collection::vec(-1.0f64..1.0, 5), c in 0.01f64..100.0, seed: u64) {
        let model = init_model(6, 5, 4, seed).unwrap();
        let index = build_index(&model, &store(&images, StoreKind::ImageFeature, "i")).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
        // zero bias: the text head is linear, so scaling the feature scales the projection
        let a = index.query(&model, "q", &q, images.len()).unwrap();
        let b = index.query(&model, "q", &scaled, images.len()).unwrap();
        prop_assert_eq!(a.ranked_ids(), b.ranked_ids());
    }

    #[test]
    fn index_bytes_round_trip(images in rows(0..=20, 3), seed: u64) {
        let model = init_model(3, 2, 3, seed).unwrap();
        let images = store(&images, StoreKind::ImageFeature, "i");
        let index = match build_index(&model, &images) {
            Ok(ix) => ix,
            Err(Error::DegenerateId { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let bytes = index.to_bytes().unwrap();
        let loaded = RetrievalIndex::from_bytes(&bytes).unwrap();
        prop_assert_eq!(loaded.to_bytes().unwrap(), bytes);
        prop_assert_eq!(loaded.ids(), index.ids());
        prop_assert_eq!(loaded.fingerprint(), index.fingerprint());
    }

    #[test]
    fn scores_are_cosines(images in rows(1..=20, 4), q in prop::collection::vec(-1.0f64..1.0, 4), k in 1usize..25) {
        let model = init_model(4, 4, 3, 1).unwrap();
        let index = build_index(&model, &store(&images, StoreKind::ImageFeature, "i")).unwrap();
        let res = index.query(&model, "q", &q, k).unwrap();
        prop_assert_eq!(res.hits.len(), k.min(images.len()));
        for w in res.hits.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for h in &res.hits {
            prop_assert!(h.score.abs() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn index_is_bound_to_its_model() {
    let images = store(
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        StoreKind::ImageFeature,
        "i",
    );
    let model = init_model(2, 2, 2, 0).unwrap();
    let other = init_model(2, 2, 2, 1).unwrap();
    let index = build_index(&model, &images).unwrap();
    assert!(matches!(
        index.query(&other, "q", &[1.0, 1.0], 1),
        Err(Error::FingerprintMismatch { .. })
    ));
    let texts = store(&[vec![1.0, 1.0]], StoreKind::TextFeature, "t");
    assert!(matches!(
        index.batch_query(&other, &texts, 1),
        Err(Error::FingerprintMismatch { .. })
    ));
    assert_eq!(
        index.query(&model, "q", &[1.0, 1.0], 3).unwrap().hits.len(),
        2
    );
}

#[test]
fn text_store_cannot_be_indexed() {
    let model = init_model(2, 2, 2, 0).unwrap();
    let texts = store(&[vec![1.0, 0.0]], StoreKind::TextFeature, "t");
    assert!(build_index(&model, &texts).is_err());
}

//! Synthetic stand-ins for pretrained encoder outputs, and feature-space jitter
//! standing in for pixel-level augmentation.
//!
//! Each image gets a latent `z ~ N(0, I)`. Its image feature is `A·z + ε` and
//! each of its captions gets `B·z + ε'`, where `A` and `B` are fixed random
//! linear maps with `N(0, 1/latent_dim)` entries and `ε, ε' ~ N(0, σ²)`. The
//! maps are drawn from `map_seed` (defaults to `seed`) so that several datasets
//! can share one "encoder pair" while differing in samples and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CaptionRecord, EmbeddingStore, Pair, PairedDataset, Split, StoreKind};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::{derive_seed, XorShift64Star};

const STREAM_MAPS: u64 = 1;
const STREAM_SAMPLES: u64 = 2;
const STREAM_SPLITS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    pub captions_per_image: usize,
    pub latent_dim: usize,
    pub img_dim: usize,
    pub txt_dim: usize,
    pub noise_sigma: f64,
    /// Fraction of images (with all their captions) assigned to `val`.
    pub val_fraction: f64,
    /// Fraction of images assigned to `test`; the remainder is `train`.
    pub test_fraction: f64,
    pub seed: u64,
    pub map_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 200,
            captions_per_image: 5,
            latent_dim: 16,
            img_dim: 64,
            txt_dim: 48,
            noise_sigma: 0.05,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
            map_seed: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_images == 0 || self.captions_per_image == 0 {
            return bad("n_images and captions_per_image must be > 0".into());
        }
        if self.latent_dim == 0 || self.img_dim == 0 || self.txt_dim == 0 {
            return bad("latent_dim, img_dim and txt_dim must be > 0".into());
        }
        if self.latent_dim > self.img_dim.min(self.txt_dim) {
            return bad(format!(
                "latent_dim {} exceeds min(img_dim, txt_dim) = {}",
                self.latent_dim,
                self.img_dim.min(self.txt_dim)
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        let fracs_ok = (0.0..=1.0).contains(&self.val_fraction)
            && (0.0..=1.0).contains(&self.test_fraction)
            && self.val_fraction + self.test_fraction <= 1.0;
        if !fracs_ok {
            return bad("val_fraction and test_fraction must be in [0,1] and sum to <= 1".into());
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite gaussian samples")
}

/// `map · z + σ·ε`
fn embed(map: &Matrix, z: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    map.iter_rows()
        .map(|row| {
            let clean: f64 = crate::numerics::dot(row, z);
            let noise: f64 = rng.sample(StandardNormal);
            clean + sigma * noise
        })
        .collect()
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<PairedDataset> {
    cfg.validate()?;
    let map_seed = cfg.map_seed.unwrap_or(cfg.seed);
    let mut map_rng = ChaCha8Rng::seed_from_u64(derive_seed(map_seed, STREAM_MAPS));
    let scale = 1.0 / (cfg.latent_dim as f64).sqrt();
    let img_map = gaussian_matrix(&mut map_rng, cfg.img_dim, cfg.latent_dim, scale);
    let txt_map = gaussian_matrix(&mut map_rng, cfg.txt_dim, cfg.latent_dim, scale);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SAMPLES));
    let n_txt = cfg.n_images * cfg.captions_per_image;
    let mut img_data = Vec::with_capacity(cfg.n_images * cfg.img_dim);
    let mut txt_data = Vec::with_capacity(n_txt * cfg.txt_dim);
    for _ in 0..cfg.n_images {
        let z: Vec<f64> = (0..cfg.latent_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        img_data.extend(embed(&img_map, &z, cfg.noise_sigma, &mut rng));
        for _ in 0..cfg.captions_per_image {
            txt_data.extend(embed(&txt_map, &z, cfg.noise_sigma, &mut rng));
        }
    }

    let splits = assign_splits(cfg);
    let img_ids: Vec<String> = (0..cfg.n_images).map(|i| format!("img{i:05}")).collect();
    let txt_ids: Vec<String> = (0..n_txt).map(|t| format!("txt{t:06}")).collect();
    let pairs = txt_ids
        .iter()
        .enumerate()
        .map(|(t, text_id)| {
            let img = t / cfg.captions_per_image;
            Pair {
                text_id: text_id.clone(),
                image_id: img_ids[img].clone(),
                split: splits[img],
            }
        })
        .collect();

    let images = EmbeddingStore::new(
        img_ids,
        Matrix::from_vec(cfg.n_images, cfg.img_dim, img_data)?,
        StoreKind::ImageFeature,
    )?;
    let texts = EmbeddingStore::new(
        txt_ids,
        Matrix::from_vec(n_txt, cfg.txt_dim, txt_data)?,
        StoreKind::TextFeature,
    )?;
    PairedDataset::new(images, texts, pairs)
}

/// Per-image split: shuffle image order, then the first `round(n·val)` go to
/// val, the next `round(n·test)` to test, the rest to train.
fn assign_splits(cfg: &SynthConfig) -> Vec<Split> {
    let n = cfg.n_images;
    let n_val = (n as f64 * cfg.val_fraction).round() as usize;
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).min(n - n_val.min(n));
    let mut order: Vec<usize> = (0..n).collect();
    XorShift64Star::new(derive_seed(cfg.seed, STREAM_SPLITS)).shuffle(&mut order);
    let mut splits = vec![Split::Train; n];
    for (rank, &img) in order.iter().enumerate() {
        if rank < n_val {
            splits[img] = Split::Val;
        } else if rank < n_val + n_test {
            splits[img] = Split::Test;
        }
    }
    splits
}

/// Manifest lines for a synthetic dataset, in text-store order. Captions are
/// placeholders; only the image id and split carry information.
pub fn synth_manifest(ds: &PairedDataset) -> Vec<CaptionRecord> {
    ds.pairs()
        .iter()
        .map(|p| CaptionRecord {
            image_id: p.image_id.clone(),
            caption: format!("synthetic caption {}", p.text_id),
            lang: "az".into(),
            split: p.split,
        })
        .collect()
}

/// Returns the original rows followed by `copies` blocks of jittered replicas,
/// `id#aug1` … `id#aug<copies>`, each entry perturbed by `N(0, sigma²)`.
pub fn jitter_augment(
    store: &EmbeddingStore,
    sigma: f64,
    copies: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if copies == 0 {
        return Ok(store.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = store.ids().to_vec();
    let mut data = store.vectors().data().to_vec();
    for k in 1..=copies {
        for (id, row) in store.ids().iter().zip(store.vectors().iter_rows()) {
            ids.push(format!("{id}#aug{k}"));
            data.extend(
                row.iter()
                    .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal)),
            );
        }
    }
    let rows = ids.len();
    EmbeddingStore::new(
        ids,
        Matrix::from_vec(rows, store.dim(), data)?,
        store.kind(),
    )
}

/// Adds jittered replicas of every training image. Each replica is paired with
/// an exact copy of the caption's text feature (`text_id#aug<k>`), so every
/// caption keeps a single ground-truth image. Val/test pairs are untouched.
pub fn augment_training_images(
    ds: &PairedDataset,
    sigma: f64,
    copies: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if copies == 0 {
        return Ok(ds.clone());
    }
    let train = ds.split_indices(Split::Train);
    let mut train_imgs: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &p in &train {
        let row = ds
            .image_store()
            .position(&ds.pairs()[p].image_id)
            .expect("validated pair");
        if seen.insert(row) {
            train_imgs.push(row);
        }
    }
    let originals = ds.image_store().subset(&train_imgs)?;
    let jittered = jitter_augment(&originals, sigma, copies, seed)?;
    let replicas: Vec<usize> = (originals.len()..jittered.len()).collect();
    let images = ds.image_store().concat(&jittered.subset(&replicas)?)?;

    let mut txt_ids = Vec::new();
    let mut txt_rows = Vec::new();
    let mut pairs = ds.pairs().to_vec();
    for k in 1..=copies {
        for &p in &train {
            let pair = &ds.pairs()[p];
            let text_id = format!("{}#aug{k}", pair.text_id);
            txt_ids.push(text_id.clone());
            txt_rows.push(
                ds.text_store()
                    .position(&pair.text_id)
                    .expect("validated pair"),
            );
            pairs.push(Pair {
                text_id,
                image_id: format!("{}#aug{k}", pair.image_id),
                split: Split::Train,
            });
        }
    }
    let extra_txt = EmbeddingStore::new(
        txt_ids,
        ds.text_store().vectors().select_rows(&txt_rows),
        StoreKind::TextFeature,
    )?;
    let texts = ds.text_store().concat(&extra_txt)?;
    PairedDataset::new(images, texts, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_images: 12,
            captions_per_image: 2,
            latent_dim: 3,
            img_dim: 6,
            txt_dim: 4,
            noise_sigma: 0.1,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts() {
        let ds = synth_dataset(&SynthConfig {
            n_images: 100,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(ds.pairs().len(), 500);
        assert_eq!(ds.image_store().len(), 100);
        assert_eq!(ds.image_store().dim(), 64);
        assert_eq!(ds.text_store().dim(), 48);
        assert_eq!(ds.split_len(Split::Val), 50);
        assert_eq!(ds.split_len(Split::Test), 50);
        assert_eq!(ds.split_len(Split::Train), 400);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(&small()).unwrap();
        let b = synth_dataset(&small()).unwrap();
        assert_eq!(
            a.image_store().to_bytes().unwrap(),
            b.image_store().to_bytes().unwrap()
        );
        assert_eq!(a.image_store().vectors(), b.image_store().vectors());
        assert_eq!(a.text_store().vectors(), b.text_store().vectors());
        assert_eq!(a.pairs(), b.pairs());
        let c = synth_dataset(&SynthConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a.image_store().vectors(), c.image_store().vectors());
    }

    #[test]
    fn captions_of_an_image_share_split() {
        let ds = synth_dataset(&small()).unwrap();
        for chunk in ds.pairs().chunks(2) {
            assert_eq!(chunk[0].image_id, chunk[1].image_id);
            assert_eq!(chunk[0].split, chunk[1].split);
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(synth_dataset(&SynthConfig {
            latent_dim: 0,
            ..small()
        })
        .is_err());
        assert!(synth_dataset(&SynthConfig {
            latent_dim: 5,
            ..small()
        })
        .is_err());
        assert!(synth_dataset(&SynthConfig {
            noise_sigma: -1.0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn jitter_examples() {
        let ds = synth_dataset(&SynthConfig {
            n_images: 10,
            ..small()
        })
        .unwrap();
        let store = ds.image_store();
        let same = jitter_augment(store, 0.0, 1, 3).unwrap();
        assert_eq!(same.len(), 20);
        for (i, id) in store.ids().iter().enumerate() {
            assert_eq!(
                same.get(&format!("{id}#aug1")).unwrap(),
                store.vectors().row(i)
            );
        }
        assert_eq!(jitter_augment(store, 0.3, 0, 3).unwrap(), *store);
        let two = jitter_augment(store, 0.3, 2, 3).unwrap();
        assert_eq!(two.len(), 30);
        assert_eq!(two.dim(), store.dim());
        assert_ne!(two.vectors().row(10), store.vectors().row(0));
    }

    #[test]
    fn augmentation_only_touches_train() {
        let ds = synth_dataset(&small()).unwrap();
        let aug = augment_training_images(&ds, 0.05, 2, 1).unwrap();
        let n_train = ds.split_len(Split::Train);
        assert_eq!(aug.split_len(Split::Train), 3 * n_train);
        assert_eq!(aug.split_len(Split::Val), ds.split_len(Split::Val));
        assert_eq!(aug.split_len(Split::Test), ds.split_len(Split::Test));
        let p = aug.pairs().last().unwrap();
        assert!(p.image_id.ends_with("#aug2"));
        let orig_text = p.text_id.trim_end_matches("#aug2");
        assert_eq!(
            aug.text_store().get(&p.text_id),
            ds.text_store().get(orig_text)
        );
    }
}

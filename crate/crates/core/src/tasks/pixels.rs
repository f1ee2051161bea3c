use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageDataset, TaskBatch, Targets};
use crate::error::{Error, Result};
use crate::model::SeqInput;
use crate::tensor::Matrix;

pub const PIXEL_CLASSES: usize = 10;

/// Images flattened to pixel sequences under one fixed permutation.
#[derive(Clone, Debug)]
pub struct PixelSequences {
    /// `len × seq_len` bytes, already cropped and permuted.
    seqs: Vec<u8>,
    labels: Vec<usize>,
    seq_len: usize,
    permutation: Vec<usize>,
}

impl PixelSequences {
    /// Center-crops to `crop × crop` (if given), flattens row-major and applies
    /// the permutation drawn from `permute_seed`. Seed 0 is the identity.
    pub fn new(ds: &ImageDataset, crop: Option<usize>, permute_seed: u64) -> Result<Self> {
        let (side_r, side_c, off_r, off_c) = match crop {
            None => (ds.rows, ds.cols, 0, 0),
            Some(c) if c > 0 && c <= ds.rows && c <= ds.cols => (c, c, (ds.rows - c) / 2, (ds.cols - c) / 2),
            Some(c) => return Err(Error::config(format!("crop {c} does not fit {}x{} images", ds.rows, ds.cols))),
        };
        let seq_len = side_r * side_c;
        let permutation = pixel_permutation(seq_len, permute_seed);
        let mut seqs = Vec::with_capacity(ds.len() * seq_len);
        let mut raster = vec![0u8; seq_len];
        for i in 0..ds.len() {
            let img = ds.image(i);
            for r in 0..side_r {
                let src = (off_r + r) * ds.cols + off_c;
                raster[r * side_c..(r + 1) * side_c].copy_from_slice(&img[src..src + side_c]);
            }
            seqs.extend(permutation.iter().map(|&p| raster[p]));
        }
        Ok(PixelSequences { seqs, labels: ds.labels.iter().map(|&l| l as usize).collect(), seq_len, permutation })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Raw (unscaled) permuted sequence of sample `i`.
    pub fn sequence(&self, i: usize) -> &[u8] {
        &self.seqs[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// One scalar pixel per step, scaled to [0, 1]; final-step 10-way labels.
    pub fn batch(&self, idx: &[usize]) -> TaskBatch {
        let xs = (0..self.seq_len)
            .map(|t| Matrix::from_fn(idx.len(), 1, |r, _| self.seqs[idx[r] * self.seq_len + t] as f64 / 255.0))
            .collect();
        let mut loss_mask = vec![false; self.seq_len];
        loss_mask[self.seq_len - 1] = true;
        TaskBatch {
            inputs: SeqInput::Dense(xs),
            targets: Targets::FinalClass(idx.iter().map(|&i| self.labels[i]).collect()),
            loss_mask,
        }
    }
}

/// The fixed pixel order used for every sample: identity for seed 0, a seeded
/// shuffle otherwise.
pub fn pixel_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    if seed != 0 {
        p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    p
}

/// Random-label subset: the first `n` samples of a seeded shuffle, with labels
/// replaced by a seeded uniform draw over the 10 classes.
pub fn shuffle_labels_subset(ds: &ImageDataset, n: usize, seed: u64) -> Result<ImageDataset> {
    if n == 0 || n > ds.len() {
        return Err(Error::config(format!("subset size {n} not in 1..={}", ds.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n);
    let mut out = ds.select(&idx, "random-labels");
    for l in out.labels.iter_mut() {
        *l = rng.random_range(0..PIXEL_CLASSES as u8);
    }
    Ok(out)
}

/// Splits off a seeded holdout of `holdout` samples: `(train, validation)`.
pub fn holdout_split(ds: &ImageDataset, holdout: usize, seed: u64) -> Result<(ImageDataset, ImageDataset)> {
    if holdout >= ds.len() {
        return Err(Error::config(format!("holdout {holdout} leaves no training data out of {}", ds.len())));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (val, train) = idx.split_at(holdout);
    Ok((ds.select(train, "train"), ds.select(val, "validation")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> ImageDataset {
        ImageDataset {
            images: (0..n * 28 * 28).map(|v| (v % 251) as u8).collect(),
            labels: (0..n).map(|i| (i % 10) as u8).collect(),
            rows: 28,
            cols: 28,
            split: "synthetic".into(),
        }
    }

    #[test]
    fn crop_lengths() {
        let ds = synthetic(2);
        assert_eq!(PixelSequences::new(&ds, Some(8), 1).unwrap().seq_len(), 64);
        assert_eq!(PixelSequences::new(&ds, Some(16), 1).unwrap().seq_len(), 256);
        assert_eq!(PixelSequences::new(&ds, None, 1).unwrap().seq_len(), 784);
        assert!(PixelSequences::new(&ds, Some(29), 1).is_err());
    }

    #[test]
    fn identity_seed_keeps_raster_order_and_crop_is_centered() {
        let ds = synthetic(2);
        let full = PixelSequences::new(&ds, None, 0).unwrap();
        assert_eq!(full.sequence(1), ds.image(1));
        let c = PixelSequences::new(&ds, Some(8), 0).unwrap();
        for r in 0..8 {
            for col in 0..8 {
                assert_eq!(c.sequence(0)[r * 8 + col], ds.image(0)[(10 + r) * 28 + 10 + col]);
            }
        }
    }

    #[test]
    fn one_permutation_for_all_samples() {
        let ds = synthetic(3);
        let a = PixelSequences::new(&ds, Some(16), 77).unwrap();
        let b = PixelSequences::new(&ds, Some(16), 77).unwrap();
        assert_eq!(a.permutation(), b.permutation());
        let raster = PixelSequences::new(&ds, Some(16), 0).unwrap();
        for i in 0..3 {
            let want: Vec<u8> = a.permutation().iter().map(|&p| raster.sequence(i)[p]).collect();
            assert_eq!(a.sequence(i), want.as_slice());
        }
        let mut sorted = a.permutation().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..256).collect::<Vec<_>>());
        assert_ne!(a.permutation(), raster.permutation());
    }

    #[test]
    fn batch_is_scaled_and_final_step() {
        let ds = synthetic(4);
        let p = PixelSequences::new(&ds, Some(8), 3).unwrap();
        let b = p.batch(&[2, 0]);
        assert_eq!(b.steps(), 64);
        assert_eq!(b.batch(), 2);
        assert_eq!(b.targets, Targets::FinalClass(vec![2, 0]));
        let SeqInput::Dense(xs) = &b.inputs else { panic!() };
        assert!(xs.iter().all(|m| m.as_slice().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(xs[5].get(0, 0), p.sequence(2)[5] as f64 / 255.0);
    }

    #[test]
    fn random_label_subsets() {
        let ds = synthetic(10_000);
        let a = shuffle_labels_subset(&ds, 10_000, 5).unwrap();
        assert_eq!(a.len(), 10_000);
        let b = shuffle_labels_subset(&ds, 10_000, 5).unwrap();
        assert_eq!(a, b);
        // Every image is retained when n == len.
        let mut seen: Vec<&[u8]> = (0..a.len()).map(|i| a.image(i)).collect();
        let mut orig: Vec<&[u8]> = (0..ds.len()).map(|i| ds.image(i)).collect();
        seen.sort();
        orig.sort();
        assert_eq!(seen, orig);
        // Chi-square with 9 dof; 27.88 is the 0.999 quantile.
        let mut hist = [0usize; 10];
        a.labels.iter().for_each(|&l| hist[l as usize] += 1);
        let chi2: f64 = hist.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        assert!(chi2 < 27.88, "chi2 {chi2}, hist {hist:?}");
        assert!(shuffle_labels_subset(&ds, 10_001, 5).is_err());
        assert_eq!(shuffle_labels_subset(&ds, 100, 6).unwrap().len(), 100);
    }

    #[test]
    fn holdout_is_disjoint() {
        let ds = synthetic(50);
        let (train, val) = holdout_split(&ds, 10, 1).unwrap();
        assert_eq!((train.len(), val.len()), (40, 10));
        assert!(holdout_split(&ds, 50, 1).is_err());
    }
}

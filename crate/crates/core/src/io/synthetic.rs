//! Synthetic classification set whose class signal lives in intensity bands.
//!
//! Every image is iid uniform background texture over `[0, 1)` with a few
//! random rectangles painted on top. Class `k` of `K` paints its rectangles
//! with values drawn from the band `[k/K, (k+1)/K)`, independently per
//! channel. The rectangle layout carries no class information, so a model
//! has to tell classes apart by which intensity interval holds the extra
//! mass.

use rand::Rng;

use crate::dataset::{image_tensor, Dataset, Split};
use crate::rng::{labeled_seed, seeded, sub_seed, Rng64};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Height and width.
    pub size: usize,
    pub channels: usize,
    /// Rectangles painted per image.
    pub patches: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 10,
            train_per_class: 200,
            test_per_class: 100,
            size: 16,
            channels: 3,
            patches: 3,
            seed: 0,
        }
    }
}

/// Intensity band of class `k`.
pub fn class_band(k: usize, n_classes: usize) -> (f64, f64) {
    (k as f64 / n_classes as f64, (k + 1) as f64 / n_classes as f64)
}

fn render(spec: &SyntheticSpec, class: usize, rng: &mut Rng64) -> Vec<f64> {
    let (c, s) = (spec.channels, spec.size);
    let plane = s * s;
    let mut img: Vec<f64> = (0..c * plane).map(|_| rng.gen::<f64>()).collect();
    let mut mask = vec![false; plane];
    let lo_side = (s / 4).max(1);
    let hi_side = (s / 2).max(lo_side);
    for _ in 0..spec.patches {
        let ph = rng.gen_range(lo_side..=hi_side);
        let pw = rng.gen_range(lo_side..=hi_side);
        let y0 = rng.gen_range(0..=s - ph);
        let x0 = rng.gen_range(0..=s - pw);
        for y in y0..y0 + ph {
            mask[y * s + x0..y * s + x0 + pw].fill(true);
        }
    }
    let (lo, hi) = class_band(class, spec.n_classes);
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ch in 0..c {
            img[ch * plane + p] = rng.gen_range(lo..hi);
        }
    }
    img
}

fn split_set(spec: &SyntheticSpec, split: Split, per_class: usize) -> Dataset {
    let base = labeled_seed(spec.seed, &format!("synthetic-{split}"));
    let n = per_class * spec.n_classes;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % spec.n_classes;
        let mut rng = seeded(sub_seed(base, i as u64));
        let data = render(spec, class, &mut rng);
        images.push(image_tensor(spec.channels, spec.size, spec.size, data).expect("rendered length"));
        labels.push(class);
    }
    Dataset::from_parts_unchecked(images, labels, split, spec.n_classes)
}

/// Deterministic `(train, test)` pair with exactly balanced classes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> (Dataset, Dataset) {
    (
        split_set(spec, Split::Train, spec.train_per_class),
        split_set(spec, Split::Test, spec.test_per_class),
    )
}

use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labelled images with pixel values in `[0, 1]`, all of one shape `(c, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
    pub split: Split,
    pub n_classes: usize,
}

impl Dataset {
    /// Checks labels, pixel range and shape agreement.
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, split: Split, n_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            let shape = first.shape().with_n(1);
            for (i, img) in images.iter().enumerate() {
                if img.shape() != shape {
                    return Err(Error::shape("Dataset::new", shape, format!("{} at image {i}", img.shape())));
                }
                if let Some(v) = img.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidArgument(format!("image {i} has pixel value {v} outside [0, 1]")));
                }
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: l,
                classes: n_classes,
            });
        }
        Ok(Dataset {
            images,
            labels,
            split,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `(c, h, w)` of every image.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images.first().map(|t| {
            let s = t.shape();
            (s.c, s.h, s.w)
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Stacks the images at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let images = Tensor::stack(indices.iter().map(|&i| &self.images[i]))?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((images, labels))
    }

    /// Whole dataset as a single tensor.
    pub fn as_batch(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Tensor::stack(self.images.iter())
    }

    /// Class-stratified random subset of `size` images.
    ///
    /// Each class contributes `size / n_classes` images (the remainder goes
    /// to the lowest class indices). Within a class, images are chosen by a
    /// seeded shuffle; the result keeps the original relative order.
    pub fn stratified_subset(&self, size: usize, seed: u64) -> Result<Dataset> {
        if size >= self.len() {
            return Ok(self.clone());
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut rng = seeded(seed);
        let base = size / self.n_classes;
        let extra = size % self.n_classes;
        let mut keep = Vec::with_capacity(size);
        for (class, members) in by_class.iter_mut().enumerate() {
            let want = base + usize::from(class < extra);
            if members.len() < want {
                return Err(Error::InvalidArgument(format!(
                    "class {class} has {} images, {want} requested",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            keep.extend_from_slice(&members[..want]);
        }
        keep.sort_unstable();
        Dataset::new(
            keep.iter().map(|&i| self.images[i].clone()).collect(),
            keep.iter().map(|&i| self.labels[i]).collect(),
            self.split,
            self.n_classes,
        )
    }

    pub(crate) fn from_parts_unchecked(images: Vec<Tensor>, labels: Vec<usize>, split: Split, n_classes: usize) -> Self {
        Dataset {
            images,
            labels,
            split,
            n_classes,
        }
    }
}

/// Single-image tensor from planar `(c, h, w)` data.
pub fn image_tensor(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Tensor> {
    Tensor::from_vec(Shape::new(1, c, h, w), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, classes: usize) -> Dataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per_class * classes {
            images.push(Tensor::filled(Shape::new(1, 1, 2, 2), (i % 7) as f64 / 7.0));
            labels.push(i % classes);
        }
        Dataset::new(images, labels, Split::Train, classes).unwrap()
    }

    #[test]
    fn rejects_out_of_range_pixels_and_labels() {
        let img = Tensor::filled(Shape::new(1, 1, 1, 1), 1.5);
        assert!(Dataset::new(vec![img], vec![0], Split::Train, 2).is_err());
        let img = Tensor::filled(Shape::new(1, 1, 1, 1), 0.5);
        assert!(matches!(
            Dataset::new(vec![img], vec![2], Split::Train, 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn stratified_subset_is_balanced_and_seeded() {
        let d = toy(20, 4);
        let s = d.stratified_subset(40, 3).unwrap();
        assert_eq!(s.class_counts(), vec![10; 4]);
        assert_eq!(s, d.stratified_subset(40, 3).unwrap());
        let odd = d.stratified_subset(10, 3).unwrap();
        assert_eq!(odd.class_counts(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn batch_stacks_images() {
        let d = toy(2, 2);
        let (x, y) = d.batch(&[3, 0]).unwrap();
        assert_eq!(x.shape(), Shape::new(2, 1, 2, 2));
        assert_eq!(y, vec![1, 0]);
    }
}

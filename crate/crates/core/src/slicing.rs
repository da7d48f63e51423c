//! Intensity slicing and zero-noise corruption.
//!
//! A [`SliceSpec`] partitions `[0, 1]` into half-open intervals
//! `[b_i, b_{i+1})`. Because the last boundary sits above 1.0, every value in
//! `[0, 1]` belongs to exactly one slice and the slices of an image sum back
//! to the image bit for bit.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{seeded, sub_seed, Rng64};
use crate::tensor::{Shape, Tensor};

/// Upper boundary of the final slice.
pub const TERMINAL_BOUNDARY: f64 = 1.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceSpec {
    boundaries: Vec<f64>,
}

impl SliceSpec {
    /// Validates `0 = b_0 < b_1 < ... < b_s` with `b_s > 1`.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidArgument("a slice spec needs at least two boundaries".into()));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first slice boundary must be 0.0, got {}",
                boundaries[0]
            )));
        }
        if let Some(w) = boundaries.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(format!(
                "slice boundaries must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
        let last = *boundaries.last().expect("non-empty");
        if !(last > 1.0) || !last.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "last slice boundary must exceed 1.0 so that 1.0 is covered, got {last}"
            )));
        }
        Ok(SliceSpec { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[lo, hi)` of slice `i`.
    pub fn interval(&self, i: usize) -> Result<(f64, f64)> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                what: "slice",
                index: i,
                len: self.len(),
            });
        }
        Ok((self.boundaries[i], self.boundaries[i + 1]))
    }

    /// Index of the slice containing `v`, if any.
    pub fn slice_of(&self, v: f64) -> Option<usize> {
        if !(v >= 0.0) || v >= *self.boundaries.last().expect("non-empty") {
            return None;
        }
        // first boundary strictly greater than v, minus one
        Some(self.boundaries.partition_point(|&b| b <= v) - 1)
    }
}

/// `n` equal-width slices over `[0, 1]`, the last one widened to end at 1.1.
pub fn make_slice_spec(n_slices: usize) -> Result<SliceSpec> {
    if n_slices == 0 {
        return Err(Error::InvalidArgument("number of slices must be at least 1".into()));
    }
    let mut b: Vec<f64> = (0..n_slices).map(|i| i as f64 / n_slices as f64).collect();
    b.push(TERMINAL_BOUNDARY);
    SliceSpec::new(b)
}

/// How slice membership is decided for multi-channel images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SliceMembership {
    /// Every channel value is routed on its own.
    #[default]
    PerChannel,
    /// A pixel's luminance picks one slice for all of its channels.
    Luminance,
}

impl FromStr for SliceMembership {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "per_channel" => Ok(Self::PerChannel),
            "luminance" => Ok(Self::Luminance),
            other => Err(format!("expected per_channel or luminance, got `{other}`")),
        }
    }
}

impl fmt::Display for SliceMembership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerChannel => "per_channel",
            Self::Luminance => "luminance",
        })
    }
}

fn luminance(pixel: impl Iterator<Item = f64>, channels: usize) -> f64 {
    if channels == 3 {
        const W: [f64; 3] = [0.299, 0.587, 0.114];
        pixel.zip(W).map(|(v, w)| v * w).sum()
    } else {
        pixel.sum::<f64>() / channels as f64
    }
}

/// Per-element slice index for a batch of images, `u8::MAX` for values in no slice.
fn membership_map(image: &Tensor, spec: &SliceSpec, mode: SliceMembership) -> Vec<u8> {
    let s = image.shape();
    let tag = |v: f64| spec.slice_of(v).map_or(u8::MAX, |i| i as u8);
    match mode {
        SliceMembership::PerChannel => image.data().iter().map(|&v| tag(v)).collect(),
        SliceMembership::Luminance => {
            let mut out = vec![u8::MAX; s.len()];
            let plane = s.plane();
            for n in 0..s.n {
                let item = image.item(n);
                for p in 0..plane {
                    let y = luminance((0..s.c).map(|c| item[c * plane + p]), s.c);
                    let t = tag(y);
                    for c in 0..s.c {
                        out[n * s.item_len() + c * plane + p] = t;
                    }
                }
            }
            out
        }
    }
}

fn check_slice_count(spec: &SliceSpec) -> Result<()> {
    if spec.len() > usize::from(u8::MAX) {
        return Err(Error::InvalidArgument(format!("at most 255 slices supported, got {}", spec.len())));
    }
    Ok(())
}

/// Keeps the values of slice `i` and zeroes everything else.
pub fn extract_slice(image: &Tensor, spec: &SliceSpec, i: usize) -> Result<Tensor> {
    extract_slice_with(image, spec, i, SliceMembership::PerChannel)
}

pub fn extract_slice_with(image: &Tensor, spec: &SliceSpec, i: usize, mode: SliceMembership) -> Result<Tensor> {
    spec.interval(i)?;
    check_slice_count(spec)?;
    let map = membership_map(image, spec, mode);
    let data = image
        .data()
        .iter()
        .zip(&map)
        .map(|(&v, &m)| if usize::from(m) == i { v } else { 0.0 })
        .collect();
    Tensor::from_vec(image.shape(), data)
}

/// All slices of `image`, ordered by slice index.
pub fn slice_image(image: &Tensor, spec: &SliceSpec) -> Result<Vec<Tensor>> {
    slice_image_with(image, spec, SliceMembership::PerChannel)
}

pub fn slice_image_with(image: &Tensor, spec: &SliceSpec, mode: SliceMembership) -> Result<Vec<Tensor>> {
    check_slice_count(spec)?;
    let map = membership_map(image, spec, mode);
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; image.len()]; spec.len()];
    for (j, (&v, &m)) in image.data().iter().zip(&map).enumerate() {
        if let Some(slice) = out.get_mut(usize::from(m)) {
            slice[j] = v;
        }
    }
    out.into_iter().map(|d| Tensor::from_vec(image.shape(), d)).collect()
}

/// Stacks the slices of each image along the channel axis, slice-major:
/// slice `i` occupies channels `[i*c, (i+1)*c)`.
pub fn pack_slices(image: &Tensor, spec: &SliceSpec, mode: SliceMembership) -> Result<Tensor> {
    let slices = slice_image_with(image, spec, mode)?;
    let s = image.shape();
    let item = s.item_len();
    let mut data = Vec::with_capacity(item * slices.len() * s.n);
    for n in 0..s.n {
        for slice in &slices {
            data.extend_from_slice(&slice.data()[n * item..(n + 1) * item]);
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c * slices.len(), s.h, s.w), data)
}

/// Fraction of pixels to zero and the base seed for the per-image masks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!("noise ratio must lie in [0, 1], got {ratio}")));
        }
        Ok(NoiseSpec { ratio, seed })
    }

    pub fn clean() -> Self {
        NoiseSpec { ratio: 0.0, seed: 0 }
    }
}

/// What a single noise draw zeroes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    /// A pixel location across all channels.
    #[default]
    Location,
    /// A single channel value.
    PerChannel,
}

impl FromStr for NoiseMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "location" => Ok(Self::Location),
            "per_channel" => Ok(Self::PerChannel),
            other => Err(format!("expected location or per_channel, got `{other}`")),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Location => "location",
            Self::PerChannel => "per_channel",
        })
    }
}

/// Number of sites zeroed at `ratio` out of `sites`.
pub fn noise_count(ratio: f64, sites: usize) -> usize {
    (ratio * sites as f64).round() as usize
}

/// Sorted indices of the zeroed sites, chosen uniformly without replacement.
pub fn noise_mask(ratio: f64, sites: usize, rng: &mut Rng64) -> Vec<usize> {
    let k = noise_count(ratio, sites).min(sites);
    let mut picked = index::sample(rng, sites, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Zeroes `round(ratio * h * w)` distinct locations of every image in the batch.
pub fn corrupt_with_noise(image: &Tensor, ratio: f64, mode: NoiseMode, rng: &mut Rng64) -> Tensor {
    let s = image.shape();
    let mut out = image.clone();
    out.clear_grad();
    if ratio <= 0.0 {
        return out;
    }
    let plane = s.plane();
    for n in 0..s.n {
        let item = out.item_mut(n);
        match mode {
            NoiseMode::Location => {
                for p in noise_mask(ratio, plane, rng) {
                    for c in 0..s.c {
                        item[c * plane + p] = 0.0;
                    }
                }
            }
            NoiseMode::PerChannel => {
                for j in noise_mask(ratio, item.len(), rng) {
                    item[j] = 0.0;
                }
            }
        }
    }
    out
}

/// Corrupts one image with the mask owned by `image_index` under `noise.seed`.
///
/// The mask depends only on `(seed, image_index)`, never on iteration order.
pub fn corrupt_indexed(image: &Tensor, noise: &NoiseSpec, mode: NoiseMode, image_index: u64) -> Tensor {
    let mut rng = seeded(sub_seed(noise.seed, image_index));
    corrupt_with_noise(image, noise.ratio, mode, &mut rng)
}

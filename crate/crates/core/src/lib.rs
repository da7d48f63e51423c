//! Multi-stream convolutional networks over image intensity slices.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`ops`]: a small f64 tensor engine with forward and
//!   backward passes for convolution, ReLU, 2x2 max pooling, dense layers and
//!   softmax cross-entropy.
//! - [`slicing`]: intensity-slice decomposition and zero-noise corruption.
//! - [`arch`]: the five compared architectures (simple, wide, same-input
//!   multi-stream, slice-packed wide, and the streaming network).
//! - [`optim`]: Adam with per-parameter state.
//! - [`train`]: epoch loop, clean/noisy evaluation and experiment sweeps.
//! - [`analysis`]: first-layer weight histograms and KL divergence to uniform.
//! - [`io`]: datasets, checkpoints and CSV logs.
//! - [`config`]: the flat `key = value` run configuration.

// `!(x > 0.0)` is how the range checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arch;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod slicing;
pub mod tensor;
pub mod train;

pub use analysis::{diversity_report, histogram, kl_divergence, Histogram, KlReport};
pub use arch::{build, Mode, Network, NetworkSpec, Padding, Vertex};
pub use config::RunConfig;
pub use dataset::{Dataset, Split};
pub use error::{Error, Result};
pub use io::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{adam_init, adam_step, AdamConfig, AdamState};
pub use slicing::{make_slice_spec, NoiseMode, NoiseSpec, SliceMembership, SliceSpec};
pub use tensor::{ParamId, ParamTensor, Shape, Tensor};
pub use train::{evaluate, sweep, train, ExperimentConfig, LogRow, TrainingLog};

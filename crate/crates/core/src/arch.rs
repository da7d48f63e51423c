//! The five compared architectures and their shared forward/backward pass.
//!
//! Every architecture is built from the same stream template: five
//! convolution stages (kernels 7, 5, 3, 1, 1; ReLU; 2x2 max pool) whose output
//! is flattened. Streams never share parameters. The flattened stream outputs
//! are concatenated and fed to `fc_layers` fully connected ReLU layers and a
//! linear classifier.
//!
//! | vertex | streams | width | stream input |
//! |--------|---------|-------|--------------|
//! | V1 | 1 | 1 | full image |
//! | V5 | 1 | N | full image |
//! | V6 | N | 1 | full image, every stream |
//! | V7 | 1 | N | all slices packed along channels |
//! | V8 | N | 1 | slice `i` to stream `i` |

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ops::{
    conv2d, conv2d_backward, conv2d_with_context, linear, linear_backward, linear_with_context, maxpool2x2,
    maxpool2x2_backward, maxpool2x2_with_context, pooled_shape, relu, relu_backward, same_padding, ConvContext,
    LinearContext, PoolContext,
};
use crate::rng::{seeded, sub_seed};
use crate::slicing::{extract_slice_with, make_slice_spec, pack_slices, SliceMembership, SliceSpec};
use crate::tensor::{ParamId, ParamTensor, Shape, Tensor};

/// Filter counts of the simple network's first four stages.
pub const BASE_FILTERS: [usize; 4] = [32, 64, 128, 256];
pub const KERNELS: [usize; 5] = [7, 5, 3, 1, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    /// One-stream simple CNN.
    V1,
    /// One-stream wide CNN.
    V5,
    /// N streams, same input.
    V6,
    /// One-stream wide CNN over channel-packed slices.
    V7,
    /// Streaming network: one slice per stream.
    V8,
}

impl FromStr for Vertex {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(Vertex::V1),
            "v5" | "5" => Ok(Vertex::V5),
            "v6" | "6" => Ok(Vertex::V6),
            "v7" | "7" => Ok(Vertex::V7),
            "v8" | "8" => Ok(Vertex::V8),
            other => Err(format!("unknown architecture vertex `{other}` (expected v1, v5, v6, v7 or v8)")),
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Vertex::V1 => "v1",
            Vertex::V5 => "v5",
            Vertex::V6 => "v6",
            Vertex::V7 => "v7",
            Vertex::V8 => "v8",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Padding {
    /// `(k - 1) / 2` zeros on each side; spatial size is preserved.
    #[default]
    Same,
    Valid,
}

impl Padding {
    pub fn for_kernel(self, k: usize) -> usize {
        match self {
            Padding::Same => same_padding(k),
            Padding::Valid => 0,
        }
    }
}

impl FromStr for Padding {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "same" => Ok(Padding::Same),
            "valid" => Ok(Padding::Valid),
            other => Err(format!("expected same or valid, got `{other}`")),
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        })
    }
}

/// Declarative description of one architecture instance.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub vertex: Vertex,
    pub n_streams: usize,
    /// Filter multiplier of the wide variants (V5, V7).
    pub width_multiplier: usize,
    pub slice_spec: Option<SliceSpec>,
    pub slice_membership: SliceMembership,
    pub n_classes: usize,
    /// Filters of conv stages 1 to 4 before the divisor and width multiplier.
    pub base_filters: [usize; 4],
    pub conv5_filters: usize,
    pub fc_hidden: usize,
    /// Fully connected ReLU layers between the concatenation and the classifier.
    pub fc_layers: usize,
    /// Divides [`BASE_FILTERS`]; 1 gives the full-size network.
    pub filter_divisor: usize,
    pub padding: Padding,
    /// `(c, h, w)` of one input image.
    pub input_shape: (usize, usize, usize),
    pub seed: u64,
}

impl NetworkSpec {
    /// Spec with the default knobs for `vertex`: 5 streams / 5 slices / width 5 where they apply.
    pub fn new(vertex: Vertex, n_classes: usize, input_shape: (usize, usize, usize)) -> Self {
        let (n_streams, width, slices) = match vertex {
            Vertex::V1 => (1, 1, None),
            Vertex::V5 => (1, 5, None),
            Vertex::V6 => (5, 1, None),
            Vertex::V7 => (1, 5, Some(5)),
            Vertex::V8 => (5, 1, Some(5)),
        };
        NetworkSpec {
            vertex,
            n_streams,
            width_multiplier: width,
            slice_spec: slices.map(|s| make_slice_spec(s).expect("positive slice count")),
            slice_membership: SliceMembership::PerChannel,
            n_classes,
            base_filters: BASE_FILTERS,
            conv5_filters: n_classes,
            fc_hidden: 64,
            fc_layers: 1,
            filter_divisor: 1,
            padding: Padding::Same,
            input_shape,
            seed: 0,
        }
    }

    /// Sets the stream count and, for V8, the matching equal-width slicing.
    pub fn with_streams(mut self, n: usize) -> Self {
        self.n_streams = n;
        if self.vertex == Vertex::V8 {
            self.slice_spec = make_slice_spec(n).ok();
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_filter_divisor(mut self, d: usize) -> Self {
        self.filter_divisor = d;
        self
    }

    /// Filter multiplier applied inside each stream.
    pub fn stream_width(&self) -> usize {
        match self.vertex {
            Vertex::V5 | Vertex::V7 => self.width_multiplier,
            _ => 1,
        }
    }

    /// Output channels of the five conv stages of one stream.
    pub fn stream_filters(&self) -> [usize; 5] {
        let w = self.stream_width();
        let d = self.filter_divisor.max(1);
        let b = self.base_filters.map(|f| (f / d).max(1) * w);
        [b[0], b[1], b[2], b[3], self.conv5_filters * w]
    }

    pub fn stream_input_channels(&self) -> usize {
        match (self.vertex, &self.slice_spec) {
            (Vertex::V7, Some(s)) => self.input_shape.0 * s.len(),
            _ => self.input_shape.0,
        }
    }

    /// Spatial shape `(c, h, w)` after each of the five stages.
    pub fn stage_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (_, mut h, mut w) = self.input_shape;
        let mut out = Vec::with_capacity(5);
        for (filters, k) in self.stream_filters().into_iter().zip(KERNELS) {
            let p = self.padding.for_kernel(k);
            if h + 2 * p < k || w + 2 * p < k {
                return Err(Error::InvalidSpec(format!(
                    "{k}x{k} kernel does not fit a {h}x{w} feature map with padding {p}"
                )));
            }
            h = h + 2 * p - k + 1;
            w = w + 2 * p - k + 1;
            let pooled = pooled_shape(Shape::new(1, filters, h, w));
            h = pooled.h;
            w = pooled.w;
            out.push((filters, h, w));
        }
        Ok(out)
    }

    /// Length of one stream's flattened output.
    pub fn stream_feature_len(&self) -> Result<usize> {
        let (c, h, w) = *self.stage_shapes()?.last().expect("five stages");
        Ok(c * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return bad(format!("input shape {c}x{h}x{w} has an empty dimension"));
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.base_filters.contains(&0) {
            return bad(format!("base filter counts must be positive, got {:?}", self.base_filters));
        }
        if self.conv5_filters == 0 || self.fc_hidden == 0 || self.n_streams == 0 || self.width_multiplier == 0 {
            return bad("conv5_filters, fc_hidden, n_streams and width_multiplier must be positive".into());
        }
        match self.vertex {
            Vertex::V1 | Vertex::V5 | Vertex::V7 if self.n_streams != 1 => {
                return bad(format!("{} is a one-stream network, got n_streams = {}", self.vertex, self.n_streams))
            }
            Vertex::V1 if self.width_multiplier != 1 => {
                return bad(format!("v1 has width multiplier 1, got {}", self.width_multiplier))
            }
            _ => {}
        }
        match (self.vertex, &self.slice_spec) {
            (Vertex::V7 | Vertex::V8, None) => return bad(format!("{} requires a slice spec", self.vertex)),
            (Vertex::V8, Some(s)) if s.len() != self.n_streams => {
                return bad(format!(
                    "v8 needs one slice per stream: {} slices for {} streams",
                    s.len(),
                    self.n_streams
                ))
            }
            _ => {}
        }
        self.stage_shapes()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvStage {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

/// One stream: five conv/ReLU/pool stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub stages: Vec<ConvStage>,
}

impl Stream {
    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.stages.iter().flat_map(|s| [&s.weight, &s.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.stages.iter_mut().flat_map(|s| [&mut s.weight, &mut s.bias])
    }

    pub fn first_conv_weight(&self) -> &Tensor {
        &self.stages[0].weight.value
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for s in &self.stages {
            x = conv2d(&x, &s.weight.value, s.bias.value.data(), s.padding)?;
            x = maxpool2x2(&relu(&x));
        }
        Ok(x.flatten())
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, StreamCache)> {
        let mut x = input.clone();
        let mut cache = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let (y, conv) = conv2d_with_context(&x, &s.weight.value, s.bias.value.data(), s.padding)?;
            let act = relu(&y);
            let (pooled, pool) = maxpool2x2_with_context(&act);
            cache.push(StageCache { conv, act, pool });
            x = pooled;
        }
        let shape = x.shape();
        Ok((x.flatten(), StreamCache { stages: cache, out_shape: shape }))
    }

    fn backward(&mut self, cache: StreamCache, grad_flat: Vec<f64>) -> Result<()> {
        let mut grad = Tensor::from_vec(cache.out_shape, grad_flat)?;
        for (stage, c) in self.stages.iter_mut().zip(cache.stages).rev() {
            grad = maxpool2x2_backward(Some(&c.pool), &grad)?;
            grad = relu_backward(&c.act, &grad)?;
            let g = conv2d_backward(Some(&c.conv), &grad)?;
            stage.weight.accumulate_grad(g.weight.data())?;
            stage.bias.accumulate_grad(&g.bias)?;
            grad = g.input;
        }
        Ok(())
    }
}

struct StageCache {
    conv: ConvContext,
    act: Tensor,
    pool: PoolContext,
}

struct StreamCache {
    stages: Vec<StageCache>,
    out_shape: Shape,
}

struct HeadCache {
    hidden: Vec<(LinearContext, Tensor)>,
    classifier: LinearContext,
}

/// Activations retained by a training-mode forward pass.
pub struct ForwardCache {
    streams: Vec<StreamCache>,
    head: HeadCache,
    batch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Keep activations for [`Network::backward`].
    Train,
    Eval,
}

pub struct ForwardPass {
    pub logits: Tensor,
    pub cache: Option<ForwardCache>,
}

/// An instantiated architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    pub streams: Vec<Stream>,
    pub hidden: Vec<Dense>,
    pub classifier: Dense,
}

struct IdAlloc(u32);

impl IdAlloc {
    fn next(&mut self) -> ParamId {
        let id = ParamId(self.0);
        self.0 += 1;
        id
    }
}

/// Uniform in `±sqrt(6 / fan_in)`, seeded by parameter id.
pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn init_weight(id: ParamId, shape: Shape, fan_in: usize, seed: u64) -> ParamTensor {
    let bound = init_bound(fan_in);
    let mut rng = seeded(sub_seed(seed, u64::from(id.0)));
    let data = (0..shape.len()).map(|_| rng.gen_range(-bound..bound)).collect();
    ParamTensor::new(id, Tensor::from_vec(shape, data).expect("init length"))
}

fn zero_bias(id: ParamId, len: usize) -> ParamTensor {
    ParamTensor::new(id, Tensor::zeros(Shape::matrix(1, len)))
}

fn dense(ids: &mut IdAlloc, d: usize, m: usize, seed: u64) -> Dense {
    Dense {
        weight: init_weight(ids.next(), Shape::matrix(d, m), d, seed),
        bias: zero_bias(ids.next(), m),
    }
}

fn build_unchecked(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let mut ids = IdAlloc(0);
    let filters = spec.stream_filters();
    let in_c = spec.stream_input_channels();
    let streams = (0..spec.n_streams)
        .map(|_| {
            let mut prev = in_c;
            let stages = filters
                .iter()
                .zip(KERNELS)
                .map(|(&f, k)| {
                    let fan_in = prev * k * k;
                    let stage = ConvStage {
                        weight: init_weight(ids.next(), Shape::new(f, prev, k, k), fan_in, spec.seed),
                        bias: zero_bias(ids.next(), f),
                        padding: spec.padding.for_kernel(k),
                    };
                    prev = f;
                    stage
                })
                .collect();
            Stream { stages }
        })
        .collect();
    let mut width = spec.n_streams * spec.stream_feature_len()?;
    let mut hidden = Vec::with_capacity(spec.fc_layers);
    for _ in 0..spec.fc_layers {
        hidden.push(dense(&mut ids, width, spec.fc_hidden, spec.seed));
        width = spec.fc_hidden;
    }
    let classifier = dense(&mut ids, width, spec.n_classes, spec.seed);
    Ok(Network {
        spec: spec.clone(),
        streams,
        hidden,
        classifier,
    })
}

fn expect_vertex(spec: &NetworkSpec, v: Vertex) -> Result<()> {
    if spec.vertex != v {
        return Err(Error::InvalidSpec(format!("expected a {v} spec, got {}", spec.vertex)));
    }
    Ok(())
}

/// One-stream simple CNN.
pub fn build_v1(spec: &NetworkSpec) -> Result<Network> {
    expect_vertex(spec, Vertex::V1)?;
    build_unchecked(spec)
}

/// One-stream CNN with every conv filter count multiplied by `width_multiplier`.
pub fn build_v5(spec: &NetworkSpec) -> Result<Network> {
    expect_vertex(spec, Vertex::V5)?;
    build_unchecked(spec)
}

/// `n_streams` parameter-disjoint simple streams, each fed the full image.
pub fn build_v6(spec: &NetworkSpec) -> Result<Network> {
    expect_vertex(spec, Vertex::V6)?;
    build_unchecked(spec)
}

/// One wide stream over all slices stacked along the channel axis.
pub fn build_v7(spec: &NetworkSpec) -> Result<Network> {
    expect_vertex(spec, Vertex::V7)?;
    build_unchecked(spec)
}

/// Streaming network: stream `i` sees only intensity slice `i`.
pub fn build_v8(spec: &NetworkSpec) -> Result<Network> {
    expect_vertex(spec, Vertex::V8)?;
    build_unchecked(spec)
}

pub fn build(spec: &NetworkSpec) -> Result<Network> {
    match spec.vertex {
        Vertex::V1 => build_v1(spec),
        Vertex::V5 => build_v5(spec),
        Vertex::V6 => build_v6(spec),
        Vertex::V7 => build_v7(spec),
        Vertex::V8 => build_v8(spec),
    }
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// All parameters in id order.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out: Vec<&ParamTensor> = self.streams.iter().flat_map(Stream::params).collect();
        for d in self.hidden.iter().chain([&self.classifier]) {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out: Vec<&mut ParamTensor> = self.streams.iter_mut().flat_map(Stream::params_mut).collect();
        for d in self.hidden.iter_mut().chain([&mut self.classifier]) {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn param(&self, id: ParamId) -> Option<&ParamTensor> {
        self.params().into_iter().find(|p| p.id == id)
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn stream_param_ids(&self, stream: usize) -> Vec<ParamId> {
        self.streams[stream].params().map(|p| p.id).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    /// Columns of the concatenated feature vector produced by `stream`.
    pub fn feature_range(&self, stream: usize) -> Range<usize> {
        let len = self.spec.stream_feature_len().expect("validated at build");
        stream * len..(stream + 1) * len
    }

    /// The dense layer reading the concatenated stream features.
    pub fn head_input_layer_mut(&mut self) -> &mut Dense {
        self.hidden.first_mut().unwrap_or(&mut self.classifier)
    }

    /// Per-stream inputs for a batch of images in `[0, 1]`.
    pub fn route(&self, batch: &Tensor) -> Result<Vec<Tensor>> {
        let (c, h, w) = self.spec.input_shape;
        let s = batch.shape();
        if (s.c, s.h, s.w) != (c, h, w) {
            return Err(Error::shape("Network::route", format!("(n, {c}, {h}, {w})"), s));
        }
        let mode = self.spec.slice_membership;
        match (self.spec.vertex, &self.spec.slice_spec) {
            (Vertex::V7, Some(spec)) => Ok(vec![pack_slices(batch, spec, mode)?]),
            (Vertex::V8, Some(spec)) => (0..self.streams.len())
                .map(|i| extract_slice_with(batch, spec, i, mode))
                .collect(),
            _ => Ok(vec![batch.clone(); self.streams.len()]),
        }
    }

    pub fn forward(&self, batch: &Tensor, mode: Mode) -> Result<ForwardPass> {
        let inputs = self.route(batch)?;
        self.forward_routed(&inputs, mode)
    }

    /// Logits for a batch, without keeping activations.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch, Mode::Eval)?.logits)
    }

    /// Forward pass from explicit per-stream inputs.
    pub fn forward_routed(&self, inputs: &[Tensor], mode: Mode) -> Result<ForwardPass> {
        if inputs.len() != self.streams.len() {
            return Err(Error::shape(
                "Network::forward_routed",
                format!("{} stream inputs", self.streams.len()),
                format!("{} stream inputs", inputs.len()),
            ));
        }
        let n = inputs[0].shape().n;
        let feat_len = self.spec.stream_feature_len()?;
        let streams: Vec<(Tensor, Option<StreamCache>)> = self
            .streams
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(s, x)| match mode {
                Mode::Train => s.forward_cached(x).map(|(y, c)| (y, Some(c))),
                Mode::Eval => s.forward(x).map(|y| (y, None)),
            })
            .collect::<Result<_>>()?;
        let mut concat = Vec::with_capacity(n * feat_len * streams.len());
        for i in 0..n {
            for (y, _) in &streams {
                concat.extend_from_slice(y.item(i));
            }
        }
        let mut x = Tensor::from_vec(Shape::matrix(n, feat_len * streams.len()), concat)?;

        let mut hidden_cache = Vec::new();
        for d in &self.hidden {
            let y = match mode {
                Mode::Train => {
                    let (y, ctx) = linear_with_context(&x, &d.weight.value, d.bias.value.data())?;
                    let act = relu(&y);
                    hidden_cache.push((ctx, act.clone()));
                    act
                }
                Mode::Eval => relu(&linear(&x, &d.weight.value, d.bias.value.data())?),
            };
            x = y;
        }
        let (logits, cache) = match mode {
            Mode::Train => {
                let (logits, ctx) =
                    linear_with_context(&x, &self.classifier.weight.value, self.classifier.bias.value.data())?;
                let cache = ForwardCache {
                    streams: streams.into_iter().map(|(_, c)| c.expect("train mode caches")).collect(),
                    head: HeadCache {
                        hidden: hidden_cache,
                        classifier: ctx,
                    },
                    batch: n,
                };
                (logits, Some(cache))
            }
            Mode::Eval => (
                linear(&x, &self.classifier.weight.value, self.classifier.bias.value.data())?,
                None,
            ),
        };
        Ok(ForwardPass { logits, cache })
    }

    /// Accumulates parameter gradients for `dLoss/dLogits`.
    pub fn backward(&mut self, cache: ForwardCache, grad_logits: &Tensor) -> Result<()> {
        let ForwardCache { streams, head, batch } = cache;
        let g = linear_backward(Some(&head.classifier), grad_logits)?;
        self.classifier.weight.accumulate_grad(g.weight.data())?;
        self.classifier.bias.accumulate_grad(&g.bias)?;
        let mut grad = g.input;
        for (d, (ctx, act)) in self.hidden.iter_mut().zip(head.hidden).rev() {
            let pre = relu_backward(&act, &grad)?;
            let g = linear_backward(Some(&ctx), &pre)?;
            d.weight.accumulate_grad(g.weight.data())?;
            d.bias.accumulate_grad(&g.bias)?;
            grad = g.input;
        }

        let feat_len = self.spec.stream_feature_len()?;
        let n_streams = self.streams.len();
        let total = feat_len * n_streams;
        let split: Vec<Vec<f64>> = (0..n_streams)
            .map(|s| {
                let mut v = Vec::with_capacity(batch * feat_len);
                for i in 0..batch {
                    v.extend_from_slice(&grad.data()[i * total + s * feat_len..][..feat_len]);
                }
                v
            })
            .collect();
        self.streams
            .par_iter_mut()
            .zip(streams.into_par_iter().zip(split.into_par_iter()))
            .map(|(stream, (cache, g))| stream.backward(cache, g))
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    /// First-layer filters of every stream, `(out, in, k, k)` each.
    pub fn first_layer_weights(&self) -> Vec<&Tensor> {
        self.streams.iter().map(Stream::first_conv_weight).collect()
    }
}

//! Dense rank-4 tensors in (batch, channel, height, width) order.
//!
//! Every activation and parameter in the crate is a [`Tensor`]. Matrices are
//! carried as `(n, d, 1, 1)` so that flattening an activation is a pure
//! reinterpretation of the shape: the row-major layout of `(c, h, w)` is the
//! layout of the flattened feature vector.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// A `(rows, cols)` matrix stored as `(rows, cols, 1, 1)`.
    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape::new(rows, cols, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of elements in one batch item.
    pub const fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn with_n(self, n: usize) -> Self {
        Shape::new(n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{} elements for {shape}", shape.len()),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Builds a batch by concatenating single items along the batch axis.
    pub fn stack<'a>(items: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut iter = items.into_iter().peekable();
        let first = match iter.peek() {
            Some(t) => t.shape,
            None => return Err(Error::InvalidArgument("cannot stack zero tensors".into())),
        };
        let mut data = Vec::new();
        let mut n = 0;
        for t in iter {
            if t.shape.with_n(first.n) != first {
                return Err(Error::shape("Tensor::stack", first, t.shape));
            }
            data.extend_from_slice(&t.data);
            n += t.shape.n;
        }
        Tensor::from_vec(first.with_n(n), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::shape("Tensor::reshape", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Canonical row-major flatten of `(c, h, w)` into `(n, c*h*w)`.
    pub fn flatten(self) -> Tensor {
        let s = self.shape;
        let shape = Shape::matrix(s.n, s.item_len());
        Tensor { shape, ..self }
    }

    /// Item `i` of the batch as a slice.
    pub fn item(&self, i: usize) -> &[f64] {
        let len = self.shape.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.shape.item_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Copies out item `i` as a batch of one.
    pub fn item_tensor(&self, i: usize) -> Tensor {
        Tensor {
            shape: self.shape.with_n(1),
            data: self.item(i).to_vec(),
            grad: None,
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(
                "Tensor::set_grad",
                format!("{} elements", self.data.len()),
                format!("{} elements", grad.len()),
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub(crate) fn ensure_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(op, expected, self.shape));
        }
        Ok(())
    }
}

/// Stable identifier of a trainable parameter inside one network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub u32);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A trainable tensor. The gradient lives in the tensor's own grad buffer and
/// is absent until a backward pass fills it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub id: ParamId,
    pub value: Tensor,
}

impl ParamTensor {
    pub fn new(id: ParamId, value: Tensor) -> Self {
        ParamTensor { id, value }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.value.grad()
    }

    /// Adds `delta` into the gradient buffer, creating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.value.len() {
            return Err(Error::shape(
                "ParamTensor::accumulate_grad",
                format!("{} elements", self.value.len()),
                format!("{} elements", delta.len()),
            ));
        }
        match self.value.grad_mut() {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            None => self.value.set_grad(delta.to_vec())?,
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.value.clear_grad();
    }
}

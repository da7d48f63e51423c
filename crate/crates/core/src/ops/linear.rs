use crate::error::{Error, Result};
use crate::ops::gemm::{gemm, Mat};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct LinearContext {
    input: Tensor,
    weight: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Affine map `x W + b` on the flattened input.
///
/// `input` is flattened row-major to `(n, d)`; `weight` holds a `(d, m)`
/// matrix as shape `(d, m, 1, 1)`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let n = input.shape().n;
    let d = input.shape().item_len();
    let ws = weight.shape();
    if ws.n != d || ws.h * ws.w != 1 {
        return Err(Error::shape(
            "linear",
            format!("weight ({d}, m, 1, 1)"),
            format!("weight {ws} for input {}", input.shape()),
        ));
    }
    let m = ws.c;
    if bias.len() != m {
        return Err(Error::shape(
            "linear",
            format!("bias of length {m}"),
            format!("bias of length {}", bias.len()),
        ));
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm(Mat::new(input.data(), n, d), Mat::new(weight.data(), d, m), 1.0, &mut out);
    Tensor::from_vec(Shape::matrix(n, m), out)
}

pub fn linear_with_context(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<(Tensor, LinearContext)> {
    let out = linear(input, weight, bias)?;
    Ok((
        out,
        LinearContext {
            input: input.clone(),
            weight: weight.clone(),
        },
    ))
}

/// Gradients of [`linear`]; the input gradient keeps the unflattened input shape.
pub fn linear_backward(ctx: Option<&LinearContext>, grad_out: &Tensor) -> Result<LinearGrads> {
    let ctx = ctx.ok_or(Error::MissingContext { op: "linear" })?;
    let n = ctx.input.shape().n;
    let d = ctx.input.shape().item_len();
    let m = ctx.weight.shape().c;
    grad_out.ensure_shape("linear_backward", Shape::matrix(n, m))?;
    let g = grad_out.data();

    let mut grad_in = vec![0.0; n * d];
    gemm(Mat::new(g, n, m), Mat::transposed(ctx.weight.data(), d, m), 0.0, &mut grad_in);
    let mut grad_w = vec![0.0; d * m];
    gemm(Mat::transposed(ctx.input.data(), n, d), Mat::new(g, n, m), 0.0, &mut grad_w);
    let mut grad_b = vec![0.0; m];
    for row in g.chunks_exact(m) {
        grad_b.iter_mut().zip(row).for_each(|(b, v)| *b += v);
    }
    Ok(LinearGrads {
        input: Tensor::from_vec(ctx.input.shape(), grad_in)?,
        weight: Tensor::from_vec(ctx.weight.shape(), grad_w)?,
        bias: grad_b,
    })
}

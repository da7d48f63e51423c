//! Non-overlapping 2x2 max pooling with stride 2.
//!
//! Odd spatial sizes are padded on the right/bottom with `f64::MIN`, so the
//! output is `ceil(h/2) x ceil(w/2)` and a real entry always wins its window.
//! Ties resolve to the first element in row-major window order.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
pub struct PoolContext {
    input_shape: Shape,
    /// Flat input index of the winning element for every output element.
    argmax: Vec<u32>,
}

pub fn pooled_shape(s: Shape) -> Shape {
    Shape::new(s.n, s.c, s.h.div_ceil(2), s.w.div_ceil(2))
}

pub fn maxpool2x2(input: &Tensor) -> Tensor {
    maxpool2x2_with_context(input).0
}

pub fn maxpool2x2_with_context(input: &Tensor) -> (Tensor, PoolContext) {
    let s = input.shape();
    let out_shape = pooled_shape(s);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let x = input.data();
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    for plane in 0..s.n * s.c {
        let base = plane * s.h * s.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::MIN;
                let mut best_idx = None;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                        // out-of-range cells are the f64::MIN padding and never win
                        if iy >= s.h || ix >= s.w {
                            continue;
                        }
                        let idx = base + iy * s.w + ix;
                        if best_idx.is_none() || x[idx] > best {
                            best = x[idx];
                            best_idx = Some(idx as u32);
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx.expect("window holds a real entry"));
            }
        }
    }
    let out = Tensor::from_vec(out_shape, out).expect("pooled length");
    (
        out,
        PoolContext {
            input_shape: s,
            argmax,
        },
    )
}

/// Routes each output gradient to its window's argmax.
pub fn maxpool2x2_backward(ctx: Option<&PoolContext>, grad_out: &Tensor) -> Result<Tensor> {
    let ctx = ctx.ok_or(Error::MissingContext { op: "maxpool2x2" })?;
    grad_out.ensure_shape("maxpool2x2_backward", pooled_shape(ctx.input_shape))?;
    let mut grad = vec![0.0; ctx.input_shape.len()];
    for (&idx, &g) in ctx.argmax.iter().zip(grad_out.data()) {
        grad[idx as usize] += g;
    }
    Tensor::from_vec(ctx.input_shape, grad)
}

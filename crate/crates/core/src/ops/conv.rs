//! Stride-1 2-D cross-correlation via patch expansion (im2col) and GEMM.
//!
//! [`conv2d_direct`] is the plain nested-loop definition; it is kept public
//! so tests can check the fast path against it.

use crate::error::{Error, Result};
use crate::ops::gemm::{gemm, Mat};
use crate::tensor::{Shape, Tensor};

/// Upper bound on elements in one expanded patch buffer; batches are chunked to stay below it.
const COL_BUDGET: usize = 1 << 16;

/// Zero padding that keeps the spatial size unchanged for an odd kernel.
pub fn same_padding(kernel: usize) -> usize {
    kernel.saturating_sub(1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    n: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    fn out_shape(&self) -> Shape {
        Shape::new(self.n, self.out_c, self.oh, self.ow)
    }

    /// Images per im2col chunk.
    fn chunk(&self) -> usize {
        let per_image = (self.patch_len() * self.out_plane()).max(1);
        (COL_BUDGET / per_image).clamp(1, self.n.max(1))
    }
}

fn geometry(input: &Tensor, weight: &Tensor, bias: &[f64], pad: usize) -> Result<Geometry> {
    let i = input.shape();
    let k = weight.shape();
    if i.c != k.c {
        return Err(Error::shape(
            "conv2d",
            format!("input with {} channels", k.c),
            format!("input {i}"),
        ));
    }
    if bias.len() != k.n {
        return Err(Error::shape(
            "conv2d",
            format!("bias of length {}", k.n),
            format!("bias of length {}", bias.len()),
        ));
    }
    let (ph, pw) = (i.h + 2 * pad, i.w + 2 * pad);
    if ph < k.h || pw < k.w {
        return Err(Error::shape(
            "conv2d",
            format!("padded input of at least {}x{}", k.h, k.w),
            format!("{ph}x{pw}"),
        ));
    }
    Ok(Geometry {
        n: i.n,
        in_c: i.c,
        h: i.h,
        w: i.w,
        out_c: k.n,
        kh: k.h,
        kw: k.w,
        pad,
        oh: ph - k.h + 1,
        ow: pw - k.w + 1,
    })
}

/// Expands images `first..first+count` into a `patch_len x (count * out_plane)` matrix.
/// Writes the in-bounds entries of the patch matrix. Padding entries are
/// never touched, so `col` must start zeroed and only ever hold im2col output
/// for the same `count`.
fn im2col(g: &Geometry, input: &[f64], first: usize, count: usize, col: &mut [f64]) {
    let plane = g.out_plane();
    let row_len = count * plane;
    let item = g.in_c * g.h * g.w;
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst_row = &mut col[row * row_len..(row + 1) * row_len];
                // valid ox: 0 <= ox + kj - pad < w
                let ox_lo = g.pad.saturating_sub(kj);
                let ox_hi = (g.w + g.pad).saturating_sub(kj).min(g.ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                let ix0 = ox_lo + kj - g.pad;
                let span = ox_hi - ox_lo;
                let oy_lo = g.pad.saturating_sub(ki);
                let oy_hi = (g.h + g.pad).saturating_sub(ki).min(g.oh);
                for b in 0..count {
                    let src = &input[(first + b) * item + c * g.h * g.w..][..g.h * g.w];
                    let dst = &mut dst_row[b * plane..(b + 1) * plane];
                    for oy in oy_lo..oy_hi {
                        let iy = oy + ki - g.pad;
                        dst[oy * g.ow + ox_lo..][..span].copy_from_slice(&src[iy * g.w + ix0..][..span]);
                    }
                }
            }
        }
    }
}

fn col2im(g: &Geometry, col: &[f64], first: usize, count: usize, grad_in: &mut [f64]) {
    let plane = g.out_plane();
    let row_len = count * plane;
    let item = g.in_c * g.h * g.w;
    for c in 0..g.in_c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &col[row * row_len..(row + 1) * row_len];
                let ox_lo = g.pad.saturating_sub(kj);
                let ox_hi = (g.w + g.pad).saturating_sub(kj).min(g.ow);
                if ox_lo >= ox_hi {
                    continue;
                }
                for b in 0..count {
                    let dst = &mut grad_in[(first + b) * item + c * g.h * g.w..][..g.h * g.w];
                    let src = &src_row[b * plane..(b + 1) * plane];
                    for oy in 0..g.oh {
                        let iy = (oy + ki) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let ix0 = ox_lo + kj - g.pad;
                        let drow = &mut dst[iy as usize * g.w + ix0..][..ox_hi - ox_lo];
                        let srow = &src[oy * g.ow + ox_lo..oy * g.ow + ox_hi];
                        drow.iter_mut().zip(srow).for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
    }
}

/// Forward-pass state needed by [`conv2d_backward`].
#[derive(Clone, Debug)]
pub struct ConvContext {
    input: Tensor,
    weight: Tensor,
    padding: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Cross-correlation of `input (n, in_c, h, w)` with `weight (out_c, in_c, kh, kw)`
/// plus a per-output-channel bias, stride 1 and symmetric zero padding.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &[f64], padding: usize) -> Result<Tensor> {
    let g = geometry(input, weight, bias, padding)?;
    let mut out = vec![0.0; g.out_shape().len()];
    let plane = g.out_plane();
    let k = g.patch_len();
    let chunk = g.chunk();
    let mut col = vec![0.0; k * chunk * plane];
    let mut prod = vec![0.0; g.out_c * chunk * plane];
    let mut first = 0;
    while first < g.n {
        let count = chunk.min(g.n - first);
        let cols = count * plane;
        if count != chunk {
            col.fill(0.0);
        }
        im2col(&g, input.data(), first, count, &mut col[..k * cols]);
        gemm(
            Mat::new(weight.data(), g.out_c, k),
            Mat::new(&col[..k * cols], k, cols),
            0.0,
            &mut prod[..g.out_c * cols],
        );
        // prod is (out_c, count, plane); the output wants (count, out_c, plane)
        for b in 0..count {
            let dst = &mut out[(first + b) * g.out_c * plane..][..g.out_c * plane];
            for o in 0..g.out_c {
                let src = &prod[o * cols + b * plane..][..plane];
                let bo = bias[o];
                dst[o * plane..(o + 1) * plane]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, s)| *d = s + bo);
            }
        }
        first += count;
    }
    Tensor::from_vec(g.out_shape(), out)
}

/// [`conv2d`] that also returns the context for the backward pass.
pub fn conv2d_with_context(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    padding: usize,
) -> Result<(Tensor, ConvContext)> {
    let out = conv2d(input, weight, bias, padding)?;
    let ctx = ConvContext {
        input: input.clone(),
        weight: weight.clone(),
        padding,
    };
    Ok((out, ctx))
}

/// Exact gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(ctx: Option<&ConvContext>, grad_out: &Tensor) -> Result<ConvGrads> {
    let ctx = ctx.ok_or(Error::MissingContext { op: "conv2d" })?;
    let bias_stub = vec![0.0; ctx.weight.shape().n];
    let g = geometry(&ctx.input, &ctx.weight, &bias_stub, ctx.padding)?;
    grad_out.ensure_shape("conv2d_backward", g.out_shape())?;

    let plane = g.out_plane();
    let k = g.patch_len();
    let chunk = g.chunk();
    let mut col = vec![0.0; k * chunk * plane];
    let mut dcol = vec![0.0; k * chunk * plane];
    let mut gout = vec![0.0; g.out_c * chunk * plane];
    let mut grad_w = vec![0.0; ctx.weight.len()];
    let mut grad_b = vec![0.0; g.out_c];
    let mut grad_in = vec![0.0; ctx.input.len()];

    let mut first = 0;
    while first < g.n {
        let count = chunk.min(g.n - first);
        let cols = count * plane;
        // regroup grad_out to (out_c, count, plane)
        for b in 0..count {
            let src = &grad_out.data()[(first + b) * g.out_c * plane..][..g.out_c * plane];
            for o in 0..g.out_c {
                gout[o * cols + b * plane..][..plane]
                    .copy_from_slice(&src[o * plane..(o + 1) * plane]);
            }
        }
        let gmat = &gout[..g.out_c * cols];
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += gmat[o * cols..(o + 1) * cols].iter().sum::<f64>();
        }
        if count != chunk {
            col.fill(0.0);
        }
        im2col(&g, ctx.input.data(), first, count, &mut col[..k * cols]);
        // dW += dOut * col^T
        gemm(
            Mat::new(gmat, g.out_c, cols),
            Mat::transposed(&col[..k * cols], k, cols),
            1.0,
            &mut grad_w,
        );
        // dcol = W^T * dOut
        gemm(
            Mat::transposed(ctx.weight.data(), g.out_c, k),
            Mat::new(gmat, g.out_c, cols),
            0.0,
            &mut dcol[..k * cols],
        );
        col2im(&g, &dcol[..k * cols], first, count, &mut grad_in);
        first += count;
    }

    Ok(ConvGrads {
        input: Tensor::from_vec(ctx.input.shape(), grad_in)?,
        weight: Tensor::from_vec(ctx.weight.shape(), grad_w)?,
        bias: grad_b,
    })
}

/// Direct six-loop cross-correlation, the definition [`conv2d`] must agree with.
pub fn conv2d_direct(input: &Tensor, weight: &Tensor, bias: &[f64], padding: usize) -> Result<Tensor> {
    let g = geometry(input, weight, bias, padding)?;
    let x = input.data();
    let wt = weight.data();
    let mut out = Tensor::zeros(g.out_shape());
    let o_data = out.data_mut();
    for n in 0..g.n {
        for o in 0..g.out_c {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = bias[o];
                    for c in 0..g.in_c {
                        for ki in 0..g.kh {
                            for kj in 0..g.kw {
                                let iy = (oy + ki) as isize - g.pad as isize;
                                let ix = (ox + kj) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                let xv = x[((n * g.in_c + c) * g.h + iy as usize) * g.w + ix as usize];
                                let wv = wt[((o * g.in_c + c) * g.kh + ki) * g.kw + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    o_data[((n * g.out_c + o) * g.oh + oy) * g.ow + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradient, max_relative_error};
    use crate::rng::{seeded, uniform_tensor, Rng64};

    fn rand_tensor(rng: &mut Rng64, shape: Shape) -> Tensor {
        uniform_tensor(rng, shape, -1.0, 1.0)
    }

    #[test]
    fn identity_kernel_copies_input() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![1.0]).unwrap();
        let y = conv2d(&x, &w, &[0.0], 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut rng = seeded(3);
        let x = rand_tensor(&mut rng, Shape::new(2, 3, 5, 4));
        let w = Tensor::zeros(Shape::new(2, 3, 3, 3));
        let y = conv2d(&x, &w, &[0.25, -1.5], 1).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 2, 5, 4));
        for n in 0..2 {
            let item = y.item(n);
            assert!(item[..20].iter().all(|&v| v == 0.25));
            assert!(item[20..].iter().all(|&v| v == -1.5));
        }
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = seeded(11);
        let x = rand_tensor(&mut rng, Shape::new(1, 3, 5, 5));
        let w = rand_tensor(&mut rng, Shape::new(4, 3, 3, 3));
        let b: Vec<f64> = (0..4).map(|i| i as f64 * 0.1).collect();
        let fast = conv2d(&x, &w, &b, 1).unwrap();
        let slow = conv2d_direct(&x, &w, &b, 1).unwrap();
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 3, 3, 3));
        let err = conv2d(&x, &w, &[0.0], 1).unwrap_err();
        assert!(err.to_string().contains("3 channels"), "{err}");
    }

    #[test]
    fn backward_without_context_errors() {
        let g = Tensor::zeros(Shape::new(1, 1, 1, 1));
        assert!(matches!(
            conv2d_backward(None, &g),
            Err(Error::MissingContext { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = seeded(5);
        let x = rand_tensor(&mut rng, Shape::new(2, 2, 4, 4));
        let w = rand_tensor(&mut rng, Shape::new(3, 2, 3, 3));
        let (y, ctx) = conv2d_with_context(&x, &w, &[0.0; 3], 1).unwrap();
        let grads = conv2d_backward(Some(&ctx), &Tensor::zeros(y.shape())).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weight.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_backward_passes_grad_through() {
        let mut rng = seeded(6);
        let x = rand_tensor(&mut rng, Shape::new(1, 1, 3, 3));
        let w = Tensor::filled(Shape::new(1, 1, 1, 1), 1.0);
        let (_, ctx) = conv2d_with_context(&x, &w, &[0.0], 0).unwrap();
        let gout = rand_tensor(&mut rng, Shape::new(1, 1, 3, 3));
        let grads = conv2d_backward(Some(&ctx), &gout).unwrap();
        assert_eq!(grads.input.data(), gout.data());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(21);
        let x = rand_tensor(&mut rng, Shape::new(2, 2, 5, 4));
        let w = rand_tensor(&mut rng, Shape::new(3, 2, 3, 3));
        let b = vec![0.1, -0.2, 0.3];
        let gout = rand_tensor(&mut rng, Shape::new(2, 3, 5, 4));
        let loss = |y: &Tensor| -> f64 { y.data().iter().zip(gout.data()).map(|(a, b)| a * b).sum() };

        let (_, ctx) = conv2d_with_context(&x, &w, &b, 1).unwrap();
        let grads = conv2d_backward(Some(&ctx), &gout).unwrap();

        let gx = finite_difference_gradient(|t| loss(&conv2d(t, &w, &b, 1).unwrap()), &x, 1e-5);
        let gw = finite_difference_gradient(|t| loss(&conv2d(&x, t, &b, 1).unwrap()), &w, 1e-5);
        let bt = Tensor::from_vec(Shape::matrix(1, 3), b.clone()).unwrap();
        let gb = finite_difference_gradient(
            |t| loss(&conv2d(&x, &w, t.data(), 1).unwrap()),
            &bt,
            1e-5,
        );
        assert!(max_relative_error(grads.input.data(), gx.data()) < 1e-4);
        assert!(max_relative_error(grads.weight.data(), gw.data()) < 1e-4);
        assert!(max_relative_error(&grads.bias, gb.data()) < 1e-4);
    }

    #[test]
    fn chunked_batches_match_single_chunk() {
        // patch_len * plane large enough to force several chunks
        let mut rng = seeded(8);
        let x = rand_tensor(&mut rng, Shape::new(5, 64, 32, 32));
        let w = rand_tensor(&mut rng, Shape::new(2, 64, 5, 5));
        let g = geometry(&x, &w, &[0.0, 0.0], 2).unwrap();
        assert!(g.chunk() < 5);
        let batched = conv2d(&x, &w, &[0.0, 0.0], 2).unwrap();
        for n in 0..5 {
            let single = conv2d(&x.item_tensor(n), &w, &[0.0, 0.0], 2).unwrap();
            assert_eq!(single.data(), batched.item(n));
        }
    }
}

use crate::error::Result;
use crate::tensor::Tensor;

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Backward of [`relu`], taking the forward *output*. The subgradient at 0 is 0.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.ensure_shape("relu_backward", output.shape())?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(output.shape(), data)
}

use super::matrix::Matrix;

/// Gradient reversal: identity on the way forward, `-λ·g` on the way back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Self {
        GradientReversal { lambda }
    }

    pub fn forward(&self, z: &Matrix) -> Matrix {
        z.clone()
    }

    pub fn backward(&self, grad_out: &Matrix) -> Matrix {
        grl_backward(grad_out, self.lambda)
    }
}

pub fn grl_backward(grad_out: &Matrix, lambda: f64) -> Matrix {
    grad_out.map(|g| -lambda * g)
}

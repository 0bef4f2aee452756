use rand::Rng;

use super::matrix::Matrix;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Forward-pass mode. `Train` uses batch statistics and samples dropout masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// A trainable tensor with its accumulated gradient (same flat layout).
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Fully connected layer computing `x · W + b`, with `W` stored `in × out`.
#[derive(Clone, Debug)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Matrix>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape(format!(
                "bias length {} for {}x{} weight",
                bias.len(),
                weight.rows(),
                weight.cols()
            )));
        }
        Ok(Dense {
            in_dim: weight.rows(),
            out_dim: weight.cols(),
            weight: Param::new(weight.into_vec()),
            bias: Param::new(bias),
            input: None,
        })
    }

    /// He-uniform weights, `U(-√(6/fan_in), √(6/fan_in))`, and zero bias.
    pub fn he_uniform(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight: Param::new(w),
            bias: Param::new(vec![0.0; out_dim]),
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight_matrix(&self) -> Matrix {
        Matrix::new(self.in_dim, self.out_dim, self.weight.value.clone())
            .expect("weight shape is an invariant")
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.apply(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    /// Forward pass without caching anything for backward.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.weight_matrix())?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias.value) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Accumulates `∂L/∂W = xᵀ·g` and `∂L/∂b = Σ_rows g` into the parameter
    /// gradients and returns `∂L/∂x = g·Wᵀ`.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::invalid("dense backward called before forward"))?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.out_dim {
            return Err(Error::shape(format!(
                "dense backward expects {}x{} gradient, got {}x{}",
                x.rows(),
                self.out_dim,
                grad_out.rows(),
                grad_out.cols()
            )));
        }
        let gw = x.t_matmul(grad_out)?;
        for (g, d) in self.weight.grad.iter_mut().zip(gw.as_slice()) {
            *g += d;
        }
        for (g, d) in self.bias.grad.iter_mut().zip(grad_out.col_sums()) {
            *g += d;
        }
        grad_out.matmul_t(&self.weight_matrix())
    }
}

/// Batch normalization over the batch (row) axis.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(features: usize) -> Self {
        Self::with_hyper(features, Self::DEFAULT_MOMENTUM, Self::DEFAULT_EPS)
    }

    pub fn with_hyper(features: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm {
            gamma: Param::new(vec![1.0; features]),
            beta: Param::new(vec![0.0; features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum,
            eps,
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Train mode normalizes by the batch mean and (biased) batch variance and
    /// updates the running statistics; the running variance uses the unbiased
    /// batch estimate. Inference mode normalizes by the running statistics.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let f = self.features();
        if x.cols() != f {
            return Err(Error::shape(format!(
                "batchnorm expects {f} features, got {}",
                x.cols()
            )));
        }
        let n = x.rows();
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::invalid(
                        "batch normalization in train mode needs a batch of at least 2",
                    ));
                }
                let mean: Vec<f64> = x.col_sums().iter().map(|s| s / n as f64).collect();
                let mut var = vec![0.0; f];
                for r in 0..n {
                    for ((v, xv), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        let d = xv - m;
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbias = n as f64 / (n as f64 - 1.0);
                for j in 0..f {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] = (1.0 - self.momentum) * self.running_var[j]
                        + self.momentum * var[j] * unbias;
                }
                (mean, var)
            }
            Mode::Inference => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Matrix::zeros(n, f);
        let mut out = Matrix::zeros(n, f);
        for r in 0..n {
            for j in 0..f {
                let xh = (x.get(r, j) - mean[j]) * inv_std[j];
                x_hat.set(r, j, xh);
                out.set(r, j, self.gamma.value[j] * xh + self.beta.value[j]);
            }
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            mode,
        });
        Ok(out)
    }

    /// Inference-mode forward that touches no state.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let f = self.features();
        if x.cols() != f {
            return Err(Error::shape(format!(
                "batchnorm expects {f} features, got {}",
                x.cols()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                let inv_std = 1.0 / (self.running_var[j] + self.eps).sqrt();
                *v = self.gamma.value[j] * ((*v - self.running_mean[j]) * inv_std) + self.beta.value[j];
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("batchnorm backward called before forward"))?;
        let (n, f) = cache.x_hat.shape();
        if grad_out.shape() != (n, f) {
            return Err(Error::shape(format!(
                "batchnorm backward expects {n}x{f} gradient, got {}x{}",
                grad_out.rows(),
                grad_out.cols()
            )));
        }
        let mut sum_dy = vec![0.0; f];
        let mut sum_dy_xhat = vec![0.0; f];
        for r in 0..n {
            for j in 0..f {
                let dy = grad_out.get(r, j);
                sum_dy[j] += dy;
                sum_dy_xhat[j] += dy * cache.x_hat.get(r, j);
            }
        }
        for j in 0..f {
            self.gamma.grad[j] += sum_dy_xhat[j];
            self.beta.grad[j] += sum_dy[j];
        }
        let mut dx = Matrix::zeros(n, f);
        let nf = n as f64;
        for r in 0..n {
            for j in 0..f {
                let g = self.gamma.value[j] * cache.inv_std[j];
                let dy = grad_out.get(r, j);
                let v = match cache.mode {
                    Mode::Train => {
                        g * (dy - sum_dy[j] / nf - cache.x_hat.get(r, j) * sum_dy_xhat[j] / nf)
                    }
                    Mode::Inference => g * dy,
                };
                dx.set(r, j, v);
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout: train-mode survivors are scaled by `1/(1-p)` so that
/// inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    p: f64,
    mask: Option<Matrix>,
    frozen: bool,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
        }
        Ok(Dropout {
            p,
            mask: None,
            frozen: false,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Reuse the most recent mask on subsequent train-mode calls (for
    /// finite-difference checks). Unfreezing resumes sampling.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn mask(&self) -> Option<&Matrix> {
        self.mask.as_ref()
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Matrix> {
        match mode {
            Mode::Inference => {
                self.mask = None;
                Ok(x.clone())
            }
            Mode::Train => {
                let reuse = self.frozen
                    && self.mask.as_ref().is_some_and(|m| m.shape() == x.shape());
                if !reuse {
                    let keep = 1.0 / (1.0 - self.p);
                    let data = (0..x.rows() * x.cols())
                        .map(|_| {
                            if self.p > 0.0 && rng.random::<f64>() < self.p {
                                0.0
                            } else {
                                keep
                            }
                        })
                        .collect();
                    self.mask = Some(Matrix::new(x.rows(), x.cols(), data)?);
                }
                x.hadamard(self.mask.as_ref().expect("mask set above"))
            }
        }
    }

    pub fn backward(&self, grad_out: &Matrix) -> Result<Matrix> {
        match &self.mask {
            Some(m) => grad_out.hadamard(m),
            None => Ok(grad_out.clone()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    input: Option<Matrix>,
}

impl Relu {
    pub fn forward(&mut self, x: &Matrix) -> Matrix {
        self.input = Some(x.clone());
        x.map(|v| v.max(0.0))
    }

    pub fn backward(&self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::invalid("relu backward called before forward"))?;
        let mask = x.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        grad_out.hadamard(&mask)
    }
}

/// `softplus(x) = ln(1 + eˣ)`, evaluated without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Softplus {
    input: Option<Matrix>,
}

impl Softplus {
    pub fn forward(&mut self, x: &Matrix) -> Matrix {
        self.input = Some(x.clone());
        x.map(softplus)
    }

    pub fn backward(&self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::invalid("softplus backward called before forward"))?;
        grad_out.hadamard(&x.map(sigmoid))
    }
}

//! Minimal differentiable compute layer: the handful of ops the proposal
//! network needs, an Adam optimizer, and a finite-difference gradient
//! verifier. Double precision throughout; every backward pass is
//! hand-derived and checked against central differences.

mod check;
mod checkpoint;
mod ops;
mod optim;

pub use check::{central_diff_grad, grad_check, max_rel_error};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use ops::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, mean_pool, mean_pool_backward,
    relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, softmax_backward, softmax_rows,
};
pub use optim::{adam_step, AdamState, DEFAULT_LR};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("kernel width must be odd, got {0}")]
    EvenKernel(usize),
    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat data length mismatch");
        Self { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// A named tensor with matching value and gradient buffers.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(values.len(), numel, "parameter values do not match shape");
        Self {
            name: name.into(),
            shape,
            values,
            grad: vec![0.0; numel],
        }
    }

    /// Seeded uniform init on (-sqrt(1/fan_in), +sqrt(1/fan_in)).
    pub fn uniform_init(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let numel: usize = shape.iter().product();
        let bound = (1.0 / fan_in as f64).sqrt();
        let values = (0..numel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self::new(name, shape, values)
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Deterministic RNG for parameter init and any stochastic plumbing.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw via Box-Muller, so the sampling algorithm is
/// pinned independently of rand's distribution internals.
pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // u1 in (0,1] to keep ln finite
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

//! Minimal dense-array numerical core.
//!
//! Exactly the layer forward/backward rules the classifier needs, hand
//! derived and individually checkable against central finite differences.
//! There is no computation graph: the architecture is fixed, so each layer
//! exposes an explicit `*_forward` / `*_backward` pair. All arithmetic is
//! `f64` and row-major.

mod adadelta;
mod gradcheck;
mod layers;
mod rng;

pub use adadelta::{adadelta_step, DEFAULT_EPS, DEFAULT_RHO};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport, LossFn, ParamCheck};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout_backward,
    dropout_forward, embedding_backward, embedding_forward, max_over_time,
    max_over_time_backward, softmax_xent, softmax_xent_backward, DropoutMode,
};
pub use rng::Rng;

use crate::error::{Error, Result};

/// Embedding row reserved for sequence padding. It is initialized to zero and
/// never receives gradient, so padding cannot contribute to any window.
pub const PAD_ROW: usize = 0;

/// Dense row-major array of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl NdArray {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        NdArray {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::invalid(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                n,
                values.len()
            )));
        }
        Ok(NdArray {
            shape: shape.to_vec(),
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row `i` of a 2-D array.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let w = self.shape[1];
        &self.values[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let w = self.shape[1];
        &mut self.values[i * w..(i + 1) * w]
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Parameter-initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    UniformXavier,
    /// Uniform in `±bound`. Used for the embedding table.
    Uniform { bound: f64 },
    Zeros,
}

/// Uniform Xavier bound for a shape. For 2-D `[m, n]` fan_in = n, fan_out = m;
/// for 3-D filter banks `[f, h, d]` fan_in = h*d, fan_out = f.
fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        [m, n] => (*n, *m),
        [f, rest @ ..] => (rest.iter().product::<usize>(), *f),
        [] => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Draw a freshly initialized array. Deterministic per rng state.
pub fn init_params(shape: &[usize], scheme: InitScheme, rng: &mut Rng) -> NdArray {
    let mut out = NdArray::zeros(shape);
    match scheme {
        InitScheme::Zeros => {}
        InitScheme::UniformXavier => {
            let b = xavier_bound(shape);
            for v in out.values_mut() {
                *v = rng.next_uniform(-b, b);
            }
        }
        InitScheme::Uniform { bound } => {
            for v in out.values_mut() {
                *v = rng.next_uniform(-bound, bound);
            }
        }
    }
    out
}

/// A learned tensor plus its gradient and Adadelta accumulators.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: NdArray,
    pub grad: NdArray,
    pub acc_grad_sq: NdArray,
    pub acc_update_sq: NdArray,
    /// Frozen parameters are skipped entirely by the optimizer.
    pub frozen: bool,
}

impl Parameter {
    pub fn new(value: NdArray) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            value,
            grad: NdArray::zeros(&shape),
            acc_grad_sq: NdArray::zeros(&shape),
            acc_update_sq: NdArray::zeros(&shape),
            frozen: false,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Scale the accumulated gradient, e.g. by `1/batch_len` for a mean.
    pub fn scale_grad(&mut self, s: f64) {
        for g in self.grad.values_mut() {
            *g *= s;
        }
    }
}

/// Nonlinearity applied after a linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the *post*-activation value.
    pub(crate) fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::None => write!(f, "none"),
            Activation::Relu => write!(f, "relu"),
            Activation::Tanh => write!(f, "tanh"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_shape_mismatch() {
        assert!(NdArray::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zeros_scheme_is_all_zero() {
        let mut rng = Rng::new(7);
        let a = init_params(&[4, 3], InitScheme::Zeros, &mut rng);
        assert!(a.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_init() {
        let a = init_params(&[10, 10], InitScheme::UniformXavier, &mut Rng::new(3));
        let b = init_params(&[10, 10], InitScheme::UniformXavier, &mut Rng::new(3));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn xavier_bound_and_mean_hold_statistically() {
        // 100x100 shape: bound sqrt(6/200); mean of 10^4 draws near 0.
        let mut rng = Rng::new(11);
        let a = init_params(&[100, 100], InitScheme::UniformXavier, &mut rng);
        let bound = (6.0_f64 / 200.0).sqrt();
        let max_abs = a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max_abs <= bound);
        let mean = a.values().iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
    }
}

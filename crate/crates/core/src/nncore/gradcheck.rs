//! Finite-difference verification of hand-derived backward passes.

use super::Parameter;
use crate::error::{Error, Result};
use crate::nncore::Rng;

/// A differentiable scalar loss over a set of named parameters.
///
/// `loss` must be deterministic (dropout in infer mode); `loss_with_grads`
/// additionally leaves analytic gradients in the parameters. `params_mut`
/// exposes every trainable parameter in a stable order.
pub trait LossFn {
    fn loss(&mut self) -> Result<f64>;
    fn loss_with_grads(&mut self) -> Result<f64>;
    fn params_mut(&mut self) -> Vec<(String, &mut Parameter)>;
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Coordinates sampled per parameter (all of them if the tensor is smaller).
    pub coords_per_param: usize,
    /// Central-difference step.
    pub delta: f64,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coords_per_param: 20,
            delta: 1e-5,
            seed: 0,
        }
    }
}

/// Worst relative error observed for one parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_err))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

/// Compare analytic gradients against central finite differences
/// `(f(θ+δ) - f(θ-δ)) / 2δ` on a seeded sample of coordinates per parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. Errors out if two
/// evaluations of the loss at the same point differ (non-deterministic
/// forward, e.g. dropout left in train mode).
pub fn gradient_check(f: &mut dyn LossFn, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let l0 = f.loss()?;
    let l1 = f.loss()?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::invalid(
            "non-deterministic forward detected: two loss evaluations differ",
        ));
    }

    f.loss_with_grads()?;
    let analytic: Vec<(String, Vec<f64>)> = f
        .params_mut()
        .into_iter()
        .map(|(name, p)| (name, p.grad.values().to_vec()))
        .collect();
    for (_, p) in f.params_mut() {
        p.zero_grad();
    }

    let mut rng = Rng::new(cfg.seed);
    let mut report = GradCheckReport { params: Vec::new() };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        let n = grads.len();
        let coords: Vec<usize> = if n <= cfg.coords_per_param {
            (0..n).collect()
        } else {
            (0..cfg.coords_per_param)
                .map(|_| rng.next_below(n as u64) as usize)
                .collect()
        };
        let mut max_rel = 0.0_f64;
        for &ci in &coords {
            let numeric = central_difference(f, pi, ci, cfg.delta)?;
            let a = grads[ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        report.params.push(ParamCheck {
            name: name.clone(),
            coords_checked: coords.len(),
            max_rel_err: max_rel,
        });
    }
    Ok(report)
}

fn central_difference(f: &mut dyn LossFn, pi: usize, ci: usize, delta: f64) -> Result<f64> {
    let original = {
        let mut ps = f.params_mut();
        let v = ps[pi].1.value.values()[ci];
        ps[pi].1.value.values_mut()[ci] = v + delta;
        v
    };
    let plus = f.loss()?;
    {
        let mut ps = f.params_mut();
        ps[pi].1.value.values_mut()[ci] = original - delta;
    }
    let minus = f.loss()?;
    {
        let mut ps = f.params_mut();
        ps[pi].1.value.values_mut()[ci] = original;
    }
    Ok((plus - minus) / (2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{NdArray, Parameter};

    /// Quadratic loss over a linear map: L = 0.5 * (w·x - y)².
    struct LinearModel {
        w: Parameter,
        x: Vec<f64>,
        y: f64,
    }

    impl LossFn for LinearModel {
        fn loss(&mut self) -> Result<f64> {
            let pred: f64 = self
                .w
                .value
                .values()
                .iter()
                .zip(&self.x)
                .map(|(w, x)| w * x)
                .sum();
            Ok(0.5 * (pred - self.y).powi(2))
        }

        fn loss_with_grads(&mut self) -> Result<f64> {
            let pred: f64 = self
                .w
                .value
                .values()
                .iter()
                .zip(&self.x)
                .map(|(w, x)| w * x)
                .sum();
            let err = pred - self.y;
            for (g, x) in self.w.grad.values_mut().iter_mut().zip(&self.x) {
                *g += err * x;
            }
            Ok(0.5 * err * err)
        }

        fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
            vec![("w".to_string(), &mut self.w)]
        }
    }

    fn linear() -> LinearModel {
        LinearModel {
            w: Parameter::new(NdArray::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap()),
            x: vec![1.5, 2.0, -0.5],
            y: 0.25,
        }
    }

    #[test]
    fn linear_model_is_near_exact() {
        let report = gradient_check(&mut linear(), &GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_err() < 1e-9, "max {}", report.max_rel_err());
    }

    #[test]
    fn corrupted_gradient_fails() {
        struct Corrupted(LinearModel);
        impl LossFn for Corrupted {
            fn loss(&mut self) -> Result<f64> {
                self.0.loss()
            }
            fn loss_with_grads(&mut self) -> Result<f64> {
                let l = self.0.loss_with_grads()?;
                self.0.w.grad.values_mut()[1] *= 1.10;
                Ok(l)
            }
            fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
                self.0.params_mut()
            }
        }
        let report = gradient_check(&mut Corrupted(linear()), &GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_err() > 1e-4);
    }

    #[test]
    fn nondeterministic_forward_is_detected() {
        struct Jitter {
            inner: LinearModel,
            flip: bool,
        }
        impl LossFn for Jitter {
            fn loss(&mut self) -> Result<f64> {
                self.flip = !self.flip;
                Ok(self.inner.loss()? + if self.flip { 0.0 } else { 1e-9 })
            }
            fn loss_with_grads(&mut self) -> Result<f64> {
                self.inner.loss_with_grads()
            }
            fn params_mut(&mut self) -> Vec<(String, &mut Parameter)> {
                self.inner.params_mut()
            }
        }
        let mut j = Jitter {
            inner: linear(),
            flip: false,
        };
        assert!(gradient_check(&mut j, &GradCheckConfig::default()).is_err());
    }
}

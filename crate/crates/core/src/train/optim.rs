use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimKind::Sgd => "sgd",
            OptimKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimKind::Sgd),
            "adam" => Ok(OptimKind::Adam),
            _ => Err(Error::config(format!("unknown optimizer `{s}` (expected sgd|adam)"))),
        }
    }
}

/// SGD with momentum (`v ← μv + g`, `θ ← θ − lr·v`) or Adam with bias
/// correction. Buffers mirror the parameter dims.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T: Scalar = f32> {
    pub kind: OptimKind,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    /// Momentum (sgd) or first moment (adam).
    pub m: Vec<Tensor4<T>>,
    /// Second moment (adam only; empty for sgd).
    pub v: Vec<Tensor4<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimKind, lr: f64, params: &ParamStore<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor4::zeros(t.dims())).collect::<Vec<_>>();
        Optimizer {
            kind,
            lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: if kind == OptimKind::Adam { zeros() } else { Vec::new() },
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor4<T>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape(format!(
                "{} parameters, {} gradients, {} optimizer slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if p.dims() != g.dims() {
                return Err(Error::shape(format!("gradient {:?} for parameter {:?}", g.dims(), p.dims())));
            }
        }
        self.t += 1;
        let lr = T::from_f64(self.lr);
        match self.kind {
            OptimKind::Sgd => {
                let mu = T::from_f64(self.momentum);
                for ((p, g), m) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m) {
                    for ((pv, &gv), mv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()) {
                        *mv = mu * *mv + gv;
                        *pv -= lr * *mv;
                    }
                }
            }
            OptimKind::Adam => {
                let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
                let c1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
                let c2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
                let eps = T::from_f64(self.eps);
                let one = T::one();
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
                    for (((pv, &gv), mv), vv) in it {
                        *mv = b1 * *mv + (one - b1) * gv;
                        *vv = b2 * *vv + (one - b2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *pv -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Named state tensors for checkpoints; the step count is stored as a
    /// one-element tensor.
    pub fn state_tensors(&self, params: &ParamStore<T>) -> Vec<(String, Tensor4<T>)> {
        let mut out = vec![("optim.t".to_string(), Tensor4::scalar(T::from_f64(self.t as f64)))];
        let first = if self.kind == OptimKind::Adam { "m" } else { "momentum" };
        for (id, m) in params.ids().zip(&self.m) {
            out.push((format!("optim.{first}.{}", params.name(id)), m.clone()));
        }
        for (id, v) in params.ids().zip(&self.v) {
            out.push((format!("optim.v.{}", params.name(id)), v.clone()));
        }
        out
    }

    /// Restores buffers written by [`Optimizer::state_tensors`].
    pub fn load_state(&mut self, params: &ParamStore<T>, tensors: &[(String, Tensor4<T>)]) -> Result<()> {
        let find = |name: &str, dims: Dims| -> Result<Tensor4<T>> {
            let t = tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Format(format!("missing optimizer tensor `{name}`")))?;
            if t.dims() != dims {
                return Err(Error::Format(format!("`{name}` has dims {:?}, expected {dims:?}", t.dims())));
            }
            Ok(t)
        };
        self.t = find("optim.t", Dims::SCALAR)?.item().as_f64() as u64;
        let first = if self.kind == OptimKind::Adam { "m" } else { "momentum" };
        for (i, id) in params.ids().enumerate() {
            let dims = params.get(id).dims();
            self.m[i] = find(&format!("optim.{first}.{}", params.name(id)), dims)?;
            if self.kind == OptimKind::Adam {
                self.v[i] = find(&format!("optim.v.{}", params.name(id)), dims)?;
            }
        }
        Ok(())
    }
}

//! Named parameter storage and the small layers every block is built from.

use crate::autodiff::{Gradients, Tape, VarId};
use crate::error::{Error, Result};
use crate::ops::ConvSpec;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor4};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor4<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor4<T>) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(value);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor4<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor4<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor4<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor4<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor4<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor4::len).sum()
    }

    /// Records every tensor on `tape` as a gradient-carrying leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        self.bind_with(tape, true)
    }

    /// Records every tensor as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.var(t.clone(), requires_grad))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor4::cast).collect(),
        }
    }
}

/// Tape handles of a [`ParamStore`] for one forward pass.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<VarId>,
}

impl Bound {
    /// Handles in store order, e.g. leaves created by a gradient checker.
    pub fn from_vars(vars: Vec<VarId>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, id: ParamId) -> VarId {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    /// Gradient per parameter in store order; zeros where the loss does not
    /// depend on a parameter.
    pub fn gradients<T: Scalar>(&self, tape: &Tape<T>, grads: &Gradients<T>) -> Vec<Tensor4<T>> {
        self.vars
            .iter()
            .map(|&v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor4::zeros(tape.value(v).dims()))
            })
            .collect()
    }
}

/// Kaiming-uniform weights with bound `√(6 / fan_in)`.
pub fn kaiming_uniform<T: Scalar>(dims: Dims, fan_in: usize, rng: &mut Rng) -> Tensor4<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor4::from_fn(dims, |_, _, _, _| T::from_f64(rng.uniform_symmetric(bound)))
}

/// Convolution with bias and "same" padding.
#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: ConvSpec,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl Conv2dLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        groups: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let spec = ConvSpec::same(kernel, groups)?;
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
            return Err(Error::config(format!("{name}: {c_in}->{c_out} channels, groups {groups}")));
        }
        let fan_in = c_in / groups * kernel * kernel;
        let w = kaiming_uniform(Dims::new(c_out, c_in / groups, kernel, kernel), fan_in, rng);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Tensor4::zeros(Dims::new(1, c_out, 1, 1)))?;
        Ok(Conv2dLayer {
            weight,
            bias,
            spec,
            c_in,
            c_out,
            kernel,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        tape.conv2d(x, p.get(self.weight), Some(p.get(self.bias)), self.spec)
    }

    /// `2 · c_out · (c_in / groups) · k² · h · w` at "same" output size.
    pub fn flops(&self, h: usize, w: usize) -> u64 {
        2 * (self.c_out * (self.c_in / self.spec.groups) * self.kernel * self.kernel * h * w) as u64
    }

    pub fn param_count(&self) -> usize {
        self.c_out * (self.c_in / self.spec.groups) * self.kernel * self.kernel + self.c_out
    }
}

/// Depthwise `k × k` followed by pointwise `1 × 1`, no activation between.
#[derive(Clone, Debug)]
pub struct SepConv {
    pub depthwise: Conv2dLayer,
    pub pointwise: Conv2dLayer,
}

impl SepConv {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(SepConv {
            depthwise: Conv2dLayer::init(store, &format!("{name}.dw"), channels, channels, kernel, channels, rng)?,
            pointwise: Conv2dLayer::init(store, &format!("{name}.pw"), channels, channels, 1, 1, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        let y = self.depthwise.forward(tape, p, x)?;
        self.pointwise.forward(tape, p, y)
    }

    pub fn flops(&self, h: usize, w: usize) -> u64 {
        self.depthwise.flops(h, w) + self.pointwise.flops(h, w)
    }

    pub fn param_count(&self) -> usize {
        self.depthwise.param_count() + self.pointwise.param_count()
    }
}

/// Fully connected layer over the flattened `(c, h, w)` features.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::config(format!("{name}: empty linear layer {fan_in}->{fan_out}")));
        }
        let w = kaiming_uniform(Dims::new(fan_out, fan_in, 1, 1), fan_in, rng);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Tensor4::zeros(Dims::new(1, fan_out, 1, 1)))?;
        Ok(Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        tape.linear(x, p.get(self.weight), Some(p.get(self.bias)))
    }

    pub fn flops(&self) -> u64 {
        2 * (self.fan_in * self.fan_out) as u64
    }

    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_counts() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = Rng::seeded(0);
        let conv = Conv2dLayer::init(&mut store, "conv1", 1, 16, 3, 1, &mut rng).unwrap();
        assert_eq!(conv.param_count(), 160);
        assert_eq!(store.scalar_count(), 160);
        let pw = Conv2dLayer::init(&mut store, "pw", 8, 8, 1, 1, &mut rng).unwrap();
        assert_eq!(pw.flops(5, 6), 2 * 64 * 30);
    }

    #[test]
    fn kaiming_bound_and_zero_bias() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Rng::seeded(4);
        let conv = Conv2dLayer::init(&mut store, "c", 4, 6, 3, 1, &mut rng).unwrap();
        let bound = (6.0f64 / 36.0).sqrt();
        assert!(store.get(conv.weight).data().iter().all(|v| v.abs() <= bound));
        assert!(store.get(conv.bias).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("a", Tensor4::zeros((1, 1, 1, 1))).unwrap();
        assert!(store.add("a", Tensor4::zeros((1, 1, 1, 1))).is_err());
    }

    #[test]
    fn even_kernel_layer_is_config_error() {
        let mut store = ParamStore::<f32>::new();
        let err = Conv2dLayer::init(&mut store, "c", 2, 2, 2, 1, &mut Rng::seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}

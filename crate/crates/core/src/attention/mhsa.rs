//! Multi-head self-attention over spatial tokens with pointwise projections.

use crate::attention::scaled::{attention_core_flops, scaled_attention};
use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::flops::FlopRow;
use crate::nn::{Bound, Conv2dLayer, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct MhsaBlock {
    pub channels: usize,
    pub num_heads: usize,
    pub q: Conv2dLayer,
    pub k: Conv2dLayer,
    pub v: Conv2dLayer,
}

impl MhsaBlock {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        num_heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_heads == 0 || channels % num_heads != 0 {
            return Err(Error::config(format!("{channels} channels do not split into {num_heads} heads")));
        }
        let mut proj = |n: &str| Conv2dLayer::init(store, &format!("{prefix}.{n}"), channels, channels, 1, 1, rng);
        Ok(MhsaBlock {
            channels,
            num_heads,
            q: proj("q")?,
            k: proj("k")?,
            v: proj("v")?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        Ok(self.forward_with_weights(tape, p, x)?.0)
    }

    /// Output and the `(b, heads, hw, hw)` attention weights.
    pub fn forward_with_weights<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<(VarId, VarId)> {
        let c = tape.value(x).dims().c;
        if c != self.channels {
            return Err(Error::shape(format!("MHSA block expects {} channels, got {c}", self.channels)));
        }
        let q = self.q.forward(tape, p, x)?;
        let k = self.k.forward(tape, p, x)?;
        let v = self.v.forward(tape, p, x)?;
        let out = scaled_attention(tape, q, k, v, x, self.num_heads)?;
        Ok((out.output, out.weights))
    }

    pub fn param_count(&self) -> usize {
        self.q.param_count() + self.k.param_count() + self.v.param_count()
    }

    pub fn flops(&self, prefix: &str, h: usize, w: usize) -> Vec<FlopRow> {
        let (qk, av) = attention_core_flops(h * w, self.channels / self.num_heads, self.num_heads);
        vec![
            FlopRow::new(format!("{prefix}.qkv"), self.q.flops(h, w) + self.k.flops(h, w) + self.v.flops(h, w)),
            FlopRow::new(format!("{prefix}.attn"), qk + av),
        ]
    }
}

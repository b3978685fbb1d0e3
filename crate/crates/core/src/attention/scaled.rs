use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Result of [`scaled_attention`]: the residual output and the attention
/// weights `(b, heads, h·w, h·w)` whose rows sum to one.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub output: VarId,
    pub weights: VarId,
}

/// Multi-head attention over the `h·w` spatial tokens of `(b, D, h, w)`
/// maps, followed by the residual `+ x_res`.
///
/// Per head, `energy = Qᵀ K / √head_dim` with softmax over keys, and the
/// attended values are `V · attentionᵀ`, which keeps the `(head_dim, h·w)`
/// layout so merging heads is a pure reshape.
pub fn scaled_attention<T: Scalar>(
    tape: &mut Tape<T>,
    q: VarId,
    k: VarId,
    v: VarId,
    x_res: VarId,
    num_heads: usize,
) -> Result<AttentionOutput> {
    let d = tape.value(q).dims();
    for (name, id) in [("K", k), ("V", v), ("residual", x_res)] {
        let other = tape.value(id).dims();
        if other != d {
            return Err(Error::shape(format!("{name} {other:?} does not match Q {d:?}")));
        }
    }
    let qh = tape.split_heads(q, num_heads)?;
    let kh = tape.split_heads(k, num_heads)?;
    let vh = tape.split_heads(v, num_heads)?;
    let head_dim = d.c / num_heads;
    let energy = tape.matmul(qh, kh, true, false)?;
    let energy = tape.scale(energy, 1.0 / (head_dim as f64).sqrt())?;
    let weights = tape.softmax(energy, 3)?;
    let attended = tape.matmul(vh, weights, false, true)?;
    let merged = tape.merge_heads(attended, d.h, d.w)?;
    let output = tape.add(merged, x_res)?;
    Ok(AttentionOutput { output, weights })
}

/// FLOPs of the two attention products `QᵀK` and `attention·V`, each
/// `2 · (h·w)² · head_dim · heads`.
pub fn attention_core_flops(tokens: usize, head_dim: usize, heads: usize) -> (u64, u64) {
    let each = 2 * (tokens * tokens * head_dim * heads) as u64;
    (each, each)
}

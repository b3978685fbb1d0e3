//! Finite-difference validation of whole attention blocks and models.

use crate::attention::LgaConfig;
use crate::autodiff::{gradcheck, GradcheckReport, Tape, VarId};
use crate::backbone::{AttentionKind, Model, ModelConfig, Slot};
use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Dims, Tensor4};

/// Gradcheck report with a name for every checked tensor.
#[derive(Clone, Debug)]
pub struct NamedReport {
    pub report: GradcheckReport,
    /// `"input"` followed by the parameter names in store order.
    pub names: Vec<String>,
}

impl NamedReport {
    pub fn worst_name(&self) -> Option<&str> {
        self.report.worst.map(|(i, _)| self.names[i].as_str())
    }
}

fn random(dims: Dims, rng: &mut Rng) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_, _, _, _| rng.normal(0.0, 1.0))
}

/// Scale of the probe losses. Key biases shift every energy in a softmax row
/// by the same amount, so their true gradient is exactly zero and the
/// finite difference only sees forward roundoff, roughly `u·|L|/ε`. A small
/// loss keeps that roundoff under the checker's `1e-8` absolute floor; the
/// relative error of every non-zero gradient does not depend on the scale.
pub const PROBE_SCALE: f64 = 1e-3;

/// Loss `Σ out ⊙ R` with a fixed random `R ~ N(0, PROBE_SCALE²)`, so every
/// output element carries a distinct weight.
fn projected(tape: &mut Tape<f64>, out: VarId, r: &Tensor4<f64>) -> Result<VarId> {
    let r = tape.constant(r.clone());
    let prod = tape.mul(out, r)?;
    tape.sum_all(prod)
}

/// Checks the block for `kind` with input dims `dims` (channels = embed
/// width) against central differences, with respect to the input and every
/// parameter.
pub fn gradcheck_block(kind: AttentionKind, lga: &LgaConfig, dims: Dims, eps: f64, seed: u64) -> Result<NamedReport> {
    if dims.c != lga.embed_dim {
        return Err(Error::config(format!(
            "input has {} channels but the block is {} wide",
            dims.c, lga.embed_dim
        )));
    }
    let mut rng = Rng::seeded(seed);
    let mut store = ParamStore::<f64>::new();
    let slot = Slot::build(kind, lga, &mut store, &mut rng)?;
    perturb_alphas(&mut store, &mut rng);
    let x = random(dims, &mut rng);
    let r = random(dims, &mut rng).map(|v| v * PROBE_SCALE);
    let mut inputs = vec![x];
    inputs.extend(store.tensors().iter().cloned());
    let build = |tape: &mut Tape<f64>, ids: &[VarId]| {
        let p = Bound::from_vars(ids[1..].to_vec());
        let out = slot.forward(tape, &p, ids[0])?;
        projected(tape, out, &r)
    };
    let report = gradcheck(build, &inputs, eps)?;
    let mut names = vec!["input".to_string()];
    names.extend(store.iter().map(|(n, _)| n.to_string()));
    Ok(NamedReport { report, names })
}

/// Moves the fusion scalars off their symmetric initial value so their two
/// gradients are not checked at a special point.
fn perturb_alphas(store: &mut ParamStore<f64>, rng: &mut Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).contains(".alpha_") {
            let v = 0.5 + rng.uniform_symmetric(0.25);
            store.get_mut(id).data_mut()[0] = v;
        }
    }
}

/// End-to-end check of a backbone at `input_hw` (multiple of 4) with
/// batch `batch` under `PROBE_SCALE ·` cross-entropy on random labels.
pub fn gradcheck_model(cfg: &ModelConfig, batch: usize, eps: f64, seed: u64) -> Result<NamedReport> {
    let mut rng = Rng::seeded(seed);
    let model = Model::<f64>::build(cfg, &mut rng)?;
    let x = random(model.input_dims(batch), &mut rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(cfg.num_classes as u32) as usize).collect();
    let mut inputs = vec![x];
    inputs.extend(model.params.tensors().iter().cloned());
    let build = |tape: &mut Tape<f64>, ids: &[VarId]| {
        let p = Bound::from_vars(ids[1..].to_vec());
        let logits = model.forward(tape, &p, ids[0])?;
        let ce = tape.cross_entropy(logits, &labels)?;
        tape.scale(ce, PROBE_SCALE)
    };
    let report = gradcheck(build, &inputs, eps)?;
    let mut names = vec!["input".to_string()];
    names.extend(model.params.iter().map(|(n, _)| n.to_string()));
    Ok(NamedReport { report, names })
}

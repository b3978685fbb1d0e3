//! Central finite-difference validation of tape gradients at f64.

use crate::autodiff::tape::{Tape, VarId};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Step used throughout the test-suite.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// Max over all elements of `|a − n| / max(1e-8, |a| + |n|)`.
    pub max_rel_error: f64,
    /// Same maximum restricted to each input.
    pub per_input: Vec<f64>,
    /// `(input, element)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub evaluations: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<F>(build: &F, inputs: &[Tensor4<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>,
{
    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs.iter().map(|t| tape.var(t.clone(), true)).collect();
    let out = build(&mut tape, &ids)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::shape(format!("gradcheck output must be scalar, got {:?}", v.dims())));
    }
    let v = v.data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite("gradcheck forward value".into()));
    }
    Ok(v)
}

/// Compares tape gradients of the scalar built by `build` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one element at a time.
pub fn gradcheck<F>(build: F, inputs: &[Tensor4<f64>], eps: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[VarId]) -> Result<VarId>,
{
    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs.iter().map(|t| tape.var(t.clone(), true)).collect();
    let out = build(&mut tape, &ids)?;
    let grads = tape.backward(out)?;

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        per_input: vec![0.0; inputs.len()],
        worst: None,
        evaluations: 0,
    };
    let mut work: Vec<Tensor4<f64>> = inputs.to_vec();
    for (i, id) in ids.iter().enumerate() {
        let zeros = Tensor4::zeros(inputs[i].dims());
        let analytic = grads.get(*id).unwrap_or(&zeros);
        for e in 0..inputs[i].len() {
            let orig = inputs[i].data()[e];
            work[i].data_mut()[e] = orig + eps;
            let plus = evaluate(&build, &work)?;
            work[i].data_mut()[e] = orig - eps;
            let minus = evaluate(&build, &work)?;
            work[i].data_mut()[e] = orig;
            report.evaluations += 2;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic.data()[e], numeric);
            if err > report.per_input[i] {
                report.per_input[i] = err;
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((i, e));
            }
        }
    }
    Ok(report)
}

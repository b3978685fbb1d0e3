//! Squeeze-and-excitation channel gating.

use crate::autodiff::{Tape, VarId};
use crate::error::{Error, Result};
use crate::flops::FlopRow;
use crate::nn::{Bound, Linear, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const SE_REDUCTION: usize = 4;

/// `X ⊙ sigmoid(W₂ · relu(W₁ · GAP(X)))`, gate broadcast over space.
#[derive(Clone, Debug)]
pub struct SeBlock {
    pub channels: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SeBlock {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize, rng: &mut Rng) -> Result<Self> {
        let hidden = channels / SE_REDUCTION;
        if hidden == 0 {
            return Err(Error::config(format!(
                "{channels} channels leave no hidden units at reduction {SE_REDUCTION}"
            )));
        }
        Ok(SeBlock {
            channels,
            fc1: Linear::init(store, &format!("{prefix}.fc1"), channels, hidden, rng)?,
            fc2: Linear::init(store, &format!("{prefix}.fc2"), hidden, channels, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: VarId) -> Result<VarId> {
        let c = tape.value(x).dims().c;
        if c != self.channels {
            return Err(Error::shape(format!("SE block expects {} channels, got {c}", self.channels)));
        }
        let s = tape.global_avg_pool(x)?;
        let h = self.fc1.forward(tape, p, s)?;
        let h = tape.relu(h)?;
        let g = self.fc2.forward(tape, p, h)?;
        let g = tape.sigmoid(g)?;
        tape.mul(x, g)
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count()
    }

    pub fn flops(&self, prefix: &str) -> Vec<FlopRow> {
        vec![
            FlopRow::new(format!("{prefix}.fc1"), self.fc1.flops()),
            FlopRow::new(format!("{prefix}.fc2"), self.fc2.flops()),
        ]
    }
}

//! Reverse-mode differentiation over [`Tensor4`](crate::Tensor4) values.

pub mod gradcheck;
pub mod tape;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport, DEFAULT_EPS};
pub use tape::{Gradients, OpKind, Tape, VarId};

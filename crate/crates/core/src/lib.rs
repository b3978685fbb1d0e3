//! Local-global attention on a small reverse-mode tape, with baseline
//! blocks, a pluggable CNN classifier, IDX data loading and a training loop.

pub mod attention;
pub mod autodiff;
pub mod backbone;
pub mod data;
pub mod error;
pub mod flops;
pub mod nn;
pub mod ops;
pub mod probe;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use attention::{Branches, LgaBlock, LgaConfig};
pub use autodiff::{Tape, VarId};
pub use backbone::{AttentionKind, Model, ModelConfig};
pub use error::{Error, Result};
pub use flops::FlopReport;
pub use nn::{Bound, ParamId, ParamStore};
pub use rng::Rng;
pub use scalar::{DType, Scalar};
pub use tensor::{Dims, Tensor4};

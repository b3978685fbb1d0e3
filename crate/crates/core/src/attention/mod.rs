//! Attention blocks that map `(b, D, h, w)` feature maps to the same shape.

pub mod config;
pub mod lga;
pub mod mhsa;
pub mod scaled;
pub mod se;

pub use config::LgaConfig;
pub use lga::{lga_param_formula, Branches, LgaBlock, LgaTrace, QkvProjection};
pub use mhsa::MhsaBlock;
pub use scaled::{attention_core_flops, scaled_attention, AttentionOutput};
pub use se::{SeBlock, SE_REDUCTION};

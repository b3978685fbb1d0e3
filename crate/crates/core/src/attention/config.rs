use crate::error::{Error, Result};

/// Shape hyper-parameters of a local-global attention block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LgaConfig {
    /// Channel count `D` of the block input and output.
    pub embed_dim: usize,
    pub num_heads: usize,
    /// Depthwise kernels of the multi-scale feature extractors.
    pub scale_kernels: Vec<usize>,
    /// Projection kernels of the local attention branches.
    pub local_kernels: Vec<usize>,
    /// Projection kernel of the global attention branch.
    pub global_kernel: usize,
    /// Stored resolution `(h₀, w₀)` of the learnable positional encoding.
    pub pe_base: (usize, usize),
}

impl LgaConfig {
    /// Defaults: scales `[3, 5]`, local `[3, 5, 7]`, global `9`, PE `14 × 14`.
    pub fn new(embed_dim: usize, num_heads: usize) -> Result<Self> {
        let cfg = LgaConfig {
            embed_dim,
            num_heads,
            scale_kernels: vec![3, 5],
            local_kernels: vec![3, 5, 7],
            global_kernel: 9,
            pe_base: (14, 14),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 {
            return Err(Error::config("embed_dim and num_heads must be positive"));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        let odd = |k: &usize| *k >= 1 && k % 2 == 1;
        if !self.scale_kernels.iter().all(odd) || !self.local_kernels.iter().all(odd) || !odd(&self.global_kernel) {
            return Err(Error::config("all kernels must be odd and at least 1"));
        }
        if self.local_kernels.is_empty() {
            return Err(Error::config("at least one local kernel is required"));
        }
        let max_local = self.local_kernels.iter().copied().max().unwrap_or(0);
        if self.global_kernel <= max_local {
            return Err(Error::config(format!(
                "global kernel {} must exceed the largest local kernel {max_local}",
                self.global_kernel
            )));
        }
        if self.pe_base.0 == 0 || self.pe_base.1 == 0 {
            return Err(Error::config("positional encoding size must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// `head_dim^(-1/2)`.
    pub fn scale(&self) -> f64 {
        (self.head_dim() as f64).powf(-0.5)
    }

    pub fn num_scales(&self) -> usize {
        self.scale_kernels.len()
    }
}
